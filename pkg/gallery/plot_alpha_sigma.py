"""
Data weight versus denoiser strength
====================================

The TV prox with ``lam = sigma**2`` plays the role of a Gaussian denoiser
tuned to noise level ``sigma``. For each ``sigma`` the best data weight
``alpha`` is found by grid search; stronger denoising calls for a larger
weight. A quadratic ``alpha = p * sigma**2`` is fitted and its R^2
reported.
"""

# %%
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from pathlib import Path

from pnpsolve.harness import DeconvExperiment, alpha_sigma_sweep, deconv_problem
from pnpsolve.synthetic import cartoon

OUT = Path(__file__).with_name("_output")
OUT.mkdir(exist_ok=True)

problem = deconv_problem(DeconvExperiment("gaussian:1.6", 0.01, 12), cartoon(64, seed=3), seed=3)
sigmas = [0.02, 0.04, 0.06, 0.08, 0.1]
alphas = [2.0 ** (k / 2) for k in range(-2, 13)]
res = alpha_sigma_sweep(sigmas, problem, alphas, {"scheme": "pdhg2", "max_iters": 30, "tol": 0.0}, workers=4)
print(res.report())

# %%
s = np.linspace(0, 0.11, 100)
fig, ax = plt.subplots(figsize=(5, 3.5))
ax.plot([r.sigma for r in res.rows], [r.alpha for r in res.rows], "o", label="best alpha")
ax.plot(s, res.p * s**2, label=f"p sigma^2 (R^2 = {res.r2:.2f})")
ax.set_xlabel("sigma")
ax.set_ylabel("alpha")
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "alpha_sigma.png", dpi=120)
