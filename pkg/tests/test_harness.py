import csv
import io
import math

import numpy as np
import pytest

from pnpsolve.denoisers import Denoiser, GaussianSmooth, IdentityDenoiser, NlmParams, NonLocalMeans
from pnpsolve.harness import (
    DeconvExperiment,
    DemosaickExperiment,
    GridSearchSpec,
    alpha_sigma_sweep,
    bilinear_demosaick,
    build_deconv,
    build_demosaick,
    deconv_problem,
    demosaick_problem,
    grid_search,
    psnr_table,
    quadratic_fit,
    score,
)
from pnpsolve.linops import BayerPattern, bayer_forward
from pnpsolve.schemes import SchemeConfig, run
from pnpsolve.synthetic import GENERATORS, cartoon, color_cartoon, generate


class Fragile(Denoiser):
    """Smooths in-range inputs, breaks down (returns inf) far outside [0, 1]."""

    def _apply(self, x):
        if np.abs(x).max() > 5.0:
            return np.full_like(x, np.inf)
        return GaussianSmooth(0.8)(x)


@pytest.fixture(scope="module")
def small_deconv():
    return deconv_problem(DeconvExperiment("gaussian:1.6", 0.01, 4), cartoon(24, seed=1), seed=3, name="c24")


# --- bilinear demosaicking ---------------------------------------------------


@pytest.mark.parametrize("pattern", ["RGGB", "GRBG", "BGGR"])
def test_bilinear_exact_on_constant_color(pattern):
    p = BayerPattern.from_name(pattern)
    x = np.empty((3, 8, 10))
    x[:] = np.array([0.2, 0.5, 0.9])[:, None, None]
    np.testing.assert_allclose(bilinear_demosaick(bayer_forward(p, x), p), x, atol=1e-14)


def test_bilinear_exact_on_gray_linear_ramp():
    yy, xx = np.mgrid[0:12, 0:14]
    x = np.repeat((0.1 + 0.03 * xx + 0.02 * yy)[None], 3, axis=0)
    out = bilinear_demosaick(bayer_forward(BayerPattern(), x))
    np.testing.assert_allclose(out[:, 1:-1, 1:-1], x[:, 1:-1, 1:-1], atol=1e-12)


def test_bilinear_keeps_samples(rng):
    p = BayerPattern()
    x = rng.random((3, 10, 10))
    m = bayer_forward(p, x)
    assert np.array_equal(bayer_forward(p, bilinear_demosaick(m, p)), m)


def test_bilinear_shape_errors():
    with pytest.raises(ValueError):
        bilinear_demosaick(np.zeros((1, 5, 6)))
    with pytest.raises(ValueError):
        bilinear_demosaick(np.zeros((3, 4, 4)))


# --- problem builders ---------------------------------------------------------


def test_build_deconv_is_seeded(small_deconv):
    e = DeconvExperiment("gaussian:1.6", 0.01, 4)
    clean = cartoon(24, seed=1)
    d1, g1 = build_deconv(e, clean, seed=3)
    d2, _ = build_deconv(e, clean, seed=3)
    assert np.array_equal(d1.f, d2.f)
    assert g1.min() >= 0 and g1.max() <= 1
    assert np.array_equal(small_deconv.u0, d1.f)
    with pytest.raises(ValueError):
        build_deconv(DeconvExperiment(crop=12), cartoon(24))
    with pytest.raises(ValueError):
        DeconvExperiment(sigma=-1.0)


def test_demosaick_problem_starts_from_bilinear():
    clean = color_cartoon(16, seed=2)
    p = demosaick_problem(DemosaickExperiment(crop=2), clean)
    d, mosaic = build_demosaick(DemosaickExperiment(crop=2), clean)
    assert np.array_equal(p.u0, bilinear_demosaick(mosaic))
    assert d.f.shape == (1, 16, 16)


def test_score_uses_crop_and_clamp(small_deconv):
    u = small_deconv.clean.copy()
    u[:, 0, 0] = 5.0  # outside the crop
    assert score(small_deconv, u) == math.inf


def test_synthetic_generators_are_deterministic():
    for name in GENERATORS:
        a, b = generate(name, 32, 5), generate(name, 32, 5)
        assert np.array_equal(a, b)
        assert a.min() >= 0 and a.max() <= 1 and a.shape[1:] == (32, 32)
    assert color_cartoon(16).shape == (3, 16, 16)
    with pytest.raises(ValueError):
        generate("nope")


# --- grid search ----------------------------------------------------------------


def test_single_cell_grid(small_deconv):
    res = grid_search(GridSearchSpec([16.0]), [small_deconv], {"denoiser": GaussianSmooth(0.8), "max_iters": 5})
    assert len(res.cells) == 1 and res.best is res.cells[0]


def test_divergent_cell_scores_minus_infinity(small_deconv):
    tmpl = {"denoiser": Fragile(), "max_iters": 10, "tol": 0}
    res = grid_search(GridSearchSpec([16.0, 1e12]), [small_deconv], tmpl)
    good, bad = res.cells
    assert bad.mean_psnr == -math.inf and bad.diverged
    assert math.isfinite(good.mean_psnr)
    assert res.best is good
    assert "diverged" in res.to_csv().splitlines()[2]


def test_grid_matches_exhaustive_reevaluation(small_deconv):
    g = GaussianSmooth(0.8)
    spec = GridSearchSpec([4.0, 16.0, 64.0], [0.0, 0.01, 0.05])
    res = grid_search(spec, [small_deconv], {"denoiser": g, "max_iters": 8})
    oracle = {}
    for a in spec.alphas:
        for b in spec.betas_tv:
            cfg = SchemeConfig("stacked", small_deconv.data.with_alpha(a), g, beta_tv=b, max_iters=8)
            oracle[(a, b)] = score(small_deconv, run(cfg, small_deconv.u0).u)
    for c in res.cells:
        assert c.mean_psnr == oracle[(c.alpha, c.beta_tv)]
    best = max(oracle, key=oracle.get)
    assert (res.best.alpha, res.best.beta_tv) == best


def test_grid_order_and_tie_break(small_deconv):
    spec = GridSearchSpec([1.0, 2.0], [0.0, 0.1], [0.0, 0.2])
    assert spec.cells()[:3] == [(1.0, 0.0, 0.0), (1.0, 0.0, 0.2), (1.0, 0.1, 0.0)]
    # zero iterations: every cell scores the start point, the first cell wins
    flat = GridSearchSpec([1.0, 2.0], [0.0, 0.1])
    res = grid_search(flat, [small_deconv], {"denoiser": IdentityDenoiser(), "max_iters": 0})
    assert len({c.mean_psnr for c in res.cells}) == 1
    assert res.best is res.cells[0]


def test_grid_is_independent_of_worker_count(small_deconv):
    other = deconv_problem(DeconvExperiment("gaussian:1.0", 0.02, 4), cartoon(24, seed=9), seed=1, name="c9")
    spec = GridSearchSpec([8.0, 32.0], [0.0, 0.02])
    tmpl = {"denoiser": NonLocalMeans(NlmParams(search_radius=2)), "max_iters": 4}
    a = grid_search(spec, [small_deconv, other], tmpl, workers=1).to_csv()
    b = grid_search(spec, [small_deconv, other], tmpl, workers=4).to_csv()
    assert a == b


def test_grid_spec_validation(small_deconv):
    with pytest.raises(ValueError):
        GridSearchSpec([])
    with pytest.raises(ValueError):
        GridSearchSpec([-1.0])
    with pytest.raises(ValueError):
        GridSearchSpec([1.0], [-0.1])
    with pytest.raises(ValueError):
        grid_search(GridSearchSpec([1.0]), [], {"denoiser": GaussianSmooth(1.0)})


# --- alpha / sigma sweep --------------------------------------------------------


def quadratic_objective(sigma, alpha):
    return -((alpha - 100.0 * sigma**2) ** 2)


def test_sweep_quadratic_fixture_quadruples_alpha():
    alphas = [0.01 * k for k in range(1, 401)]
    res = alpha_sigma_sweep([0.05, 0.1], None, alphas, objective=quadratic_objective)
    a1, a2 = (r.alpha for r in res.rows)
    assert a1 == pytest.approx(0.25) and a2 == pytest.approx(1.0)
    assert a2 == pytest.approx(4 * a1)
    assert res.p == pytest.approx(100.0) and res.r2 == pytest.approx(1.0)


def test_sweep_single_sigma_is_degenerate():
    res = alpha_sigma_sweep([0.1], None, [1.0, 2.0, 3.0], objective=lambda s, a: -abs(a - 2.0))
    assert res.rows[0].alpha == 2.0
    assert res.p == pytest.approx(2.0 / 0.01)
    assert math.isnan(res.r2)


def test_quadratic_fit_oracle():
    p, r2 = quadratic_fit([1.0, 2.0], [3.0, 12.0])
    assert p == pytest.approx(3.0) and r2 == pytest.approx(1.0)


def test_sweep_runs_on_a_problem(small_deconv):
    res = alpha_sigma_sweep([0.05, 0.1], small_deconv, [1.0, 10.0], {"max_iters": 3}, inner_iters=5)
    assert len(res.rows) == 2
    assert res.to_csv().splitlines()[0] == "sigma,best_alpha,best_psnr"
    assert "R^2" in res.report()


# --- tables -----------------------------------------------------------------------


def test_psnr_table_single_and_triple():
    _, c1 = psnr_table({"a": 20.0})
    assert c1.splitlines()[-1] == "average,20.0"
    text, c3 = psnr_table({"a": 20.0, "b": 30.0, "c": 40.0})
    assert c3.splitlines()[-1] == "average,30.0"
    assert "average" in text and "30.00" in text


def test_psnr_table_csv_round_trip():
    vals = {"x": {"all": 31.123456789, "R": 30.5}, "y": {"all": 29.000000001, "R": 28.25}}
    _, text = psnr_table(vals)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["image", "all", "R"]
    assert float(rows[1][1]) == 31.123456789 and float(rows[2][1]) == 29.000000001
    assert float(rows[3][1]) == (31.123456789 + 29.000000001) / 2
    assert psnr_table(vals)[1] == text
