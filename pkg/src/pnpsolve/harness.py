"""Experiment harness: problem builders, parameter grid search, the
alpha-versus-noise-level sweep and PSNR tables.

Grid cells are independent runs from a fresh state; they can be spread
over a thread pool and the results do not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy import ndimage

from .denoisers import TvProx
from .image import add_gaussian_noise, clamp01, crop, psnr, psnr_per_channel
from .linops import BayerMask, BayerPattern, CircularConvolution, ConvKernel, bayer_forward, parse_kernel_spec
from .prox import DataTerm
from .schemes import SchemeConfig, run

__all__ = [
    "DeconvExperiment",
    "DemosaickExperiment",
    "Problem",
    "build_deconv",
    "build_demosaick",
    "deconv_problem",
    "demosaick_problem",
    "bilinear_demosaick",
    "score",
    "GridSearchSpec",
    "GridCell",
    "GridSearchResult",
    "grid_search",
    "SweepRow",
    "SweepResult",
    "alpha_sigma_sweep",
    "psnr_table",
]


def _fmt(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------


@dataclass
class DeconvExperiment:
    """Blur + additive Gaussian noise. ``kernel`` is a kernel spec string or a ConvKernel."""

    kernel: str | ConvKernel = "gaussian:1.6"
    sigma: float = 0.01
    crop: int = 12

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise sigma must be non-negative")
        if self.crop < 0:
            raise ValueError("crop must be non-negative")

    def make_kernel(self) -> ConvKernel:
        return self.kernel if isinstance(self.kernel, ConvKernel) else parse_kernel_spec(self.kernel)


@dataclass
class DemosaickExperiment:
    pattern: BayerPattern = field(default_factory=BayerPattern)
    crop: int = 5


@dataclass
class Problem:
    """One reconstruction instance: data term, ground truth, start point and scoring crop."""

    name: str
    data: DataTerm
    clean: np.ndarray
    u0: np.ndarray
    degraded: np.ndarray
    crop: int = 0


def _check_crop(border: int, shape) -> None:
    if 2 * border >= min(shape[-2:]):
        raise ValueError(f"crop {border} must be below half of min(width, height) = {min(shape[-2:])}")


def build_deconv(e: DeconvExperiment, clean, seed: int = 0, alpha: float = 1.0):
    """Return ``(data_term, degraded)``.

    The data term holds the unclamped noisy observation; ``degraded`` is
    its clamped copy for display and scoring.
    """
    clean = np.asarray(clean, dtype=np.float64)
    _check_crop(e.crop, clean.shape)
    op = CircularConvolution(e.make_kernel(), clean.shape)
    f = add_gaussian_noise(op.forward(clean), e.sigma, seed)
    return DataTerm(op, f, alpha), clamp01(f)


def build_demosaick(e: DemosaickExperiment, clean, alpha: float = 1.0):
    """Return ``(data_term, mosaic)`` for noise-free Bayer sampling of ``clean``."""
    clean = np.asarray(clean, dtype=np.float64)
    _check_crop(e.crop, clean.shape)
    op = BayerMask(e.pattern, clean.shape)
    mosaic = bayer_forward(e.pattern, clean)
    return DataTerm(op, mosaic, alpha), mosaic


def deconv_problem(e: DeconvExperiment, clean, seed: int = 0, name: str = "image") -> Problem:
    data, degraded = build_deconv(e, clean, seed)
    return Problem(name, data, np.asarray(clean, dtype=np.float64), data.f.copy(), degraded, e.crop)


def demosaick_problem(e: DemosaickExperiment, clean, name: str = "image") -> Problem:
    """Demosaicking instance started from the bilinear interpolation."""
    data, mosaic = build_demosaick(e, clean)
    start = bilinear_demosaick(mosaic, e.pattern)
    return Problem(name, data, np.asarray(clean, dtype=np.float64), start, start.copy(), e.crop)


_TENT = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]]) / 4.0


def bilinear_demosaick(mosaic, pattern: BayerPattern | None = None) -> np.ndarray:
    """Per-channel bilinear interpolation of the missing CFA samples.

    Implemented as normalized convolution with a 3x3 tent over each
    channel's sample positions, mirror boundary; measured samples are kept.
    """
    pattern = pattern or BayerPattern()
    m = np.asarray(mosaic, dtype=np.float64)
    if m.ndim == 3:
        if m.shape[0] != 1:
            raise ValueError("mosaic must have one channel")
        m = m[0]
    mask = pattern.mask(m.shape)
    out = np.empty(mask.shape)
    for c in range(3):
        num = ndimage.correlate(mask[c] * m, _TENT, mode="mirror")
        den = ndimage.correlate(mask[c], _TENT, mode="mirror")
        out[c] = np.where(mask[c] > 0, m, num / den)
    return out


def score(problem: Problem, u) -> float:
    """Crop-scored PSNR of the clamped reconstruction."""
    return psnr(crop(clamp01(u), problem.crop), crop(problem.clean, problem.crop))


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------


@dataclass
class GridSearchSpec:
    alphas: Sequence[float]
    betas_tv: Sequence[float] = (0.0,)
    betas_cross: Sequence[float] = (0.0,)

    def __post_init__(self):
        if not (self.alphas and self.betas_tv and self.betas_cross):
            raise ValueError("grids must be non-empty")
        if any(a <= 0 for a in self.alphas):
            raise ValueError("alpha values must be positive")
        if any(b < 0 for b in (*self.betas_tv, *self.betas_cross)):
            raise ValueError("beta values must be non-negative")

    def cells(self):
        """Cells in alpha-major, then beta_tv, then beta_cross order."""
        return [(a, bt, bc) for a in self.alphas for bt in self.betas_tv for bc in self.betas_cross]


@dataclass
class GridCell:
    alpha: float
    beta_tv: float
    beta_cross: float
    mean_psnr: float
    psnrs: list[float]
    stop_reasons: list[str]

    @property
    def diverged(self) -> bool:
        return "nonfinite" in self.stop_reasons


@dataclass
class GridSearchResult:
    best: GridCell
    cells: list[GridCell]
    problem_names: list[str]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "beta_tv", "beta_cross", "mean_psnr", *(f"psnr_{n}" for n in self.problem_names), "status"])
        for c in self.cells:
            status = "diverged" if c.diverged else "ok"
            w.writerow([_fmt(c.alpha), _fmt(c.beta_tv), _fmt(c.beta_cross), _fmt(c.mean_psnr), *map(_fmt, c.psnrs), status])
        return buf.getvalue()


def _run_cell(template: Mapping[str, Any], problem: Problem, cell) -> tuple[float, str, np.ndarray]:
    alpha, beta_tv, beta_cross = cell
    cfg = SchemeConfig(data=problem.data.with_alpha(alpha), beta_tv=beta_tv, beta_cross=beta_cross, **template)
    rep = run(cfg, problem.u0)
    if rep.stop_reason == "nonfinite":
        return -math.inf, rep.stop_reason, rep.u
    return score(problem, rep.u), rep.stop_reason, rep.u


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def grid_search(
    spec: GridSearchSpec,
    problems: Sequence[Problem],
    template: Mapping[str, Any],
    workers: int = 1,
) -> GridSearchResult:
    """Exhaustive search over (alpha, beta_tv, beta_cross).

    ``template`` holds the remaining :class:`SchemeConfig` keyword arguments
    (``scheme``, ``denoiser``, ``tau``, ``gamma``, ``max_iters``, ...).
    Each cell scores the mean crop PSNR over ``problems``; a cell where any
    run turns non-finite scores ``-inf``. Ties go to the earliest cell.
    """
    if not problems:
        raise ValueError("problem set is empty")
    template = {"scheme": "stacked", **template}
    cells = spec.cells()
    jobs = [(cell, p) for cell in cells for p in problems]
    results = _map(lambda job: _run_cell(template, job[1], job[0])[:2], jobs, workers)
    table = []
    n = len(problems)
    for i, cell in enumerate(cells):
        chunk = results[i * n : (i + 1) * n]
        psnrs = [r[0] for r in chunk]
        reasons = [r[1] for r in chunk]
        mean = -math.inf if any(math.isinf(v) and v < 0 for v in psnrs) else float(np.mean(psnrs))
        table.append(GridCell(*cell, mean, psnrs, reasons))
    best = table[0]
    for c in table[1:]:
        if c.mean_psnr > best.mean_psnr:
            best = c
    return GridSearchResult(best, table, [p.name for p in problems])


# ---------------------------------------------------------------------------
# alpha versus denoiser strength
# ---------------------------------------------------------------------------


@dataclass
class SweepRow:
    sigma: float
    alpha: float
    psnr: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    p: float
    r2: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sigma", "best_alpha", "best_psnr"])
        for r in self.rows:
            w.writerow([_fmt(r.sigma), _fmt(r.alpha), _fmt(r.psnr)])
        return buf.getvalue()

    def report(self) -> str:
        lines = [f"{'sigma':>8} {'best_alpha':>12} {'psnr':>8}"]
        lines += [f"{r.sigma:>8.4g} {r.alpha:>12.6g} {r.psnr:>8.3f}" for r in self.rows]
        lines.append(f"quadratic fit alpha = p * sigma^2: p = {self.p:.6g}, R^2 = {self.r2:.4f}")
        return "\n".join(lines)


def quadratic_fit(sigmas, alphas) -> tuple[float, float]:
    """Least-squares ``p`` for ``alpha = p * sigma**2`` and its R^2."""
    s2 = np.asarray(sigmas, dtype=np.float64) ** 2
    a = np.asarray(alphas, dtype=np.float64)
    p = float(np.dot(a, s2) / np.dot(s2, s2))
    if a.size < 2:
        return p, math.nan
    ss_res = float(np.sum((a - p * s2) ** 2))
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else math.nan)
    return p, r2


def alpha_sigma_sweep(
    sigmas: Sequence[float],
    problem: Problem | None,
    alphas: Sequence[float],
    template: Mapping[str, Any] | None = None,
    *,
    inner_iters: int = 100,
    workers: int = 1,
    objective: Callable[[float, float], float] | None = None,
) -> SweepResult:
    """Best data weight per denoiser strength.

    For every ``sigma`` the denoiser is the TV prox with ``lam = sigma**2``
    and ``alpha`` is grid-searched on ``problem``. ``objective(sigma,
    alpha)`` replaces the reconstruction PSNR when given (used for tests).
    """
    if not sigmas or not alphas:
        raise ValueError("sigmas and alphas must be non-empty")
    template = dict(template or {})
    template.setdefault("scheme", "pdhg2")
    jobs = [(s, a) for s in sigmas for a in alphas]
    if objective is None:
        if problem is None:
            raise ValueError("a problem is required unless an objective is given")

        def evaluate(job):
            s, a = job
            tmpl = {**template, "denoiser": TvProx(s * s, inner_iters=inner_iters)}
            return _run_cell(tmpl, problem, (a, template.get("beta_tv", 0.0), template.get("beta_cross", 0.0)))[0]

        template.pop("beta_tv", None)
        template.pop("beta_cross", None)
    else:

        def evaluate(job):
            return float(objective(*job))

    values = _map(evaluate, jobs, workers)
    rows = []
    n = len(alphas)
    for i, s in enumerate(sigmas):
        chunk = values[i * n : (i + 1) * n]
        j = int(np.argmax(chunk))  # first maximum on ties
        rows.append(SweepRow(float(s), float(alphas[j]), float(chunk[j])))
    p, r2 = quadratic_fit([r.sigma for r in rows], [r.alpha for r in rows])
    return SweepResult(rows, p, r2)


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


def psnr_table(results: Mapping[str, float | Mapping[str, float]]) -> tuple[str, str]:
    """Format per-image PSNRs plus an average row as (text, csv).

    Values are either a single PSNR or a mapping of column name to PSNR
    (e.g. ``{"all": ..., "R": ..., "G": ..., "B": ...}``).
    """
    rows = []
    columns: list[str] = []
    for name, val in results.items():
        cols = {"psnr": float(val)} if not isinstance(val, Mapping) else {k: float(v) for k, v in val.items()}
        for c in cols:
            if c not in columns:
                columns.append(c)
        rows.append((name, cols))
    avg = {c: float(np.mean([r[c] for _, r in rows if c in r])) for c in columns}
    rows.append(("average", avg))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["image", *columns])
    for name, cols in rows:
        w.writerow([name, *(_fmt(cols[c]) if c in cols else "" for c in columns)])

    width = max(len("image"), *(len(n) for n, _ in rows))
    lines = [f"{'image':<{width}} " + " ".join(f"{c:>8}" for c in columns)]
    for name, cols in rows:
        lines.append(f"{name:<{width}} " + " ".join(f"{cols[c]:>8.2f}" if c in cols else " " * 8 for c in columns))
    return "\n".join(lines), buf.getvalue()


def image_scores(clean, recon, border: int = 0) -> dict[str, float]:
    """Joint and per-channel crop PSNRs, keyed ``all`` and ``c0``, ``c1``, ..."""
    a = crop(clamp01(recon), border)
    b = crop(np.asarray(clean, dtype=np.float64), border)
    out = {"all": psnr(a, b)}
    if a.shape[0] > 1:
        names = "RGB" if a.shape[0] == 3 else [f"c{i}" for i in range(a.shape[0])]
        out.update({n: v for n, v in zip(names, psnr_per_channel(a, b))})
    return out
