"""
One fixed point, four schemes
=============================

With a continuous denoiser and a common gradient step ``t``, proximal
gradient, ADMM and both primal-dual schemes share the fixed-point equation
``u = G(u - t * grad_data(u))``. Here proximal gradient is run to
convergence first; the other schemes, started at that point with matching
auxiliary variables, do not move.
"""

# %%
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from pathlib import Path

from pnpsolve import SchemeConfig, TvProx, fixed_point_init, run
from pnpsolve.harness import DeconvExperiment, build_deconv
from pnpsolve.synthetic import cartoon

OUT = Path(__file__).with_name("_output")
OUT.mkdir(exist_ok=True)

data, _ = build_deconv(DeconvExperiment("gaussian:0.8", 0.02, 0), cartoon(16, seed=1), seed=1, alpha=4.0)
t = 1.0 / (data.alpha * data.operator_norm_sq())
# a fixed number of inner steps keeps G an exact, continuous map
g = TvProx(0.05, inner_iters=100, inner_tol=0.0)

pg = run(SchemeConfig("pg", data, g, tau=t, max_iters=5000, tol=1e-15, track_residual=True), data.f)
print(f"proximal gradient: {pg.iterations} iterations, residual {pg.history[-1].fixed_point_residual:.1e}")

# %%
moves = {}
for cfg in (
    SchemeConfig("admm", data, g, gamma=1 / t, max_iters=10, tol=0.0),
    SchemeConfig("pdhg1", data, g, gamma=1 / t, max_iters=10, tol=0.0),
    SchemeConfig("pdhg2", data, g, gamma=1 / t, tau=t, max_iters=10, tol=0.0),
):
    rep = run(cfg, pg.u, **fixed_point_init(cfg, pg.u))
    moves[cfg.scheme] = [h.rel_change for h in rep.history]
    print(f"{cfg.scheme:6s} largest relative move {max(moves[cfg.scheme]):.1e}")

# %%
fig, ax = plt.subplots(figsize=(5, 3.5))
ax.semilogy([h.k for h in pg.history], [h.fixed_point_residual for h in pg.history], label="pg residual")
for name, vals in moves.items():
    ax.semilogy(np.arange(pg.iterations + 1, pg.iterations + 11), np.maximum(vals, 1e-18), "o", ms=3, label=f"{name} move")
ax.set_xlabel("iteration")
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "fixed_point.png", dpi=120)
