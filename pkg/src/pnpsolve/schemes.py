"""Splitting schemes with a denoiser in place of the regularizer's prox.

Four schemes share one fixed-point equation ``u = G(u - t * grad_data(u))``:

* ``pg``      proximal gradient, ``u <- G(u - tau * grad_data(u))``
* ``admm``    ``v <- G(u + y/gamma)``, ``u <- prox_{data/gamma}(v - y/gamma)``,
  ``y <- y + gamma (u - v)``
* ``pdhg1``   primal-dual with the data term dualized on the range of A
* ``pdhg2``   primal-dual with an exact data prox in the primal step
* ``stacked`` ``pdhg2`` plus explicit TV and cross-channel dual blocks

The data term is always ``(alpha/2) ||A u - f||^2`` from
:class:`~pnpsolve.prox.DataTerm`.
"""

from __future__ import annotations

import csv
import functools
import io
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .denoisers import Denoiser
from .image import psnr
from .linops import ChannelGradientDifference, Gradient, Identity, Stacked, operator_norm
from .prox import DataTerm, prox_l1, prox_l21

__all__ = [
    "SCHEMES",
    "SchemeConfig",
    "SchemeState",
    "HistoryRow",
    "RunReport",
    "default_tau",
    "stacked_operator",
    "fixed_point_t",
    "fixed_point_residual",
    "fixed_point_init",
    "rescale_config",
    "run",
    "run_pg",
    "run_admm",
    "run_pdhg1",
    "run_pdhg2",
    "run_stacked_pdhg",
    "history_csv",
]

SCHEMES = ("pg", "admm", "pdhg1", "pdhg2", "stacked")
_ALIASES = {"stackedpdhg": "stacked", "stacked_pdhg": "stacked", "stacked-pdhg": "stacked"}

EPS = 1e-12


def _scheme_name(name: str) -> str:
    key = name.lower()
    key = _ALIASES.get(key, key)
    if key not in SCHEMES:
        raise ValueError(f"unknown scheme {name!r}; choose from {', '.join(SCHEMES)}")
    return key


@dataclass
class SchemeConfig:
    """Parameters of one scheme run.

    ``tau=None`` picks :func:`default_tau`. ``beta_tv`` and ``beta_cross``
    are only read by the stacked scheme. ``reference`` (a clean image)
    adds a PSNR column to the history; ``track_residual`` adds the
    fixed-point residual at the cost of one extra denoiser call per
    iteration.
    """

    scheme: str
    data: DataTerm
    denoiser: Denoiser
    tau: float | None = None
    gamma: float = 1.0
    theta: float = 1.0
    beta_tv: float = 0.0
    beta_cross: float = 0.0
    max_iters: int = 30
    tol: float = 1e-6
    track_residual: bool = False
    reference: np.ndarray | None = None

    def __post_init__(self):
        self.scheme = _scheme_name(self.scheme)
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.beta_tv < 0 or self.beta_cross < 0:
            raise ValueError("beta weights must be non-negative")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")

    @property
    def step(self) -> float:
        """Resolved primal step size."""
        return self.tau if self.tau is not None else default_tau(self)


@dataclass
class SchemeState:
    u: np.ndarray
    u_bar: np.ndarray | None = None
    y: np.ndarray | None = None
    z: list[np.ndarray] = field(default_factory=list)
    v: np.ndarray | None = None
    k: int = 0


@dataclass
class HistoryRow:
    k: int
    rel_change: float
    data_energy: float
    fixed_point_residual: float = math.nan
    psnr_vs_reference: float = math.nan


@dataclass
class RunReport:
    u: np.ndarray
    iterations: int
    stop_reason: str  # "tol", "max_iters" or "nonfinite"
    history: list[HistoryRow]
    state: SchemeState


# ---------------------------------------------------------------------------
# Step sizes and operators
# ---------------------------------------------------------------------------


def stacked_operator(shape, beta_tv: float = 0.0, beta_cross: float = 0.0) -> Stacked:
    """``[I; D_tv; D_cross]`` with only the blocks whose weight is positive."""
    ops = [Identity(shape)]
    if beta_tv > 0:
        ops.append(Gradient(shape))
    if beta_cross > 0:
        ops.append(ChannelGradientDifference(shape))
    return Stacked(ops)


@functools.lru_cache(maxsize=64)
def _stacked_norm_sq(shape, tv: bool, cross: bool) -> float:
    op = stacked_operator(shape, float(tv), float(cross))
    return operator_norm(op) ** 2


def _data_norm_sq(data: DataTerm) -> float:
    return data.operator_norm_sq()


def default_tau(cfg: SchemeConfig) -> float:
    """Step size used when ``cfg.tau`` is None.

    ``pg``: ``1/(alpha ||A||^2)``. Primal-dual schemes: ``0.95/(gamma c)``
    with ``c`` the squared norm of the stacked dual operator. ``admm``
    has no primal step; 1/gamma is returned for the fixed-point bookkeeping.
    """
    if cfg.scheme == "pg":
        return 1.0 / (cfg.data.alpha * _data_norm_sq(cfg.data))
    if cfg.scheme == "admm":
        return 1.0 / cfg.gamma
    if cfg.scheme == "pdhg1":
        c = 1.0 + _data_norm_sq(cfg.data)
    elif cfg.scheme == "pdhg2":
        c = 1.0
    else:
        c = _stacked_norm_sq(tuple(cfg.data.shape), cfg.beta_tv > 0, cfg.beta_cross > 0)
    return 0.95 / (cfg.gamma * c)


def _check_steps(cfg: SchemeConfig, tau: float) -> None:
    if cfg.scheme not in ("pdhg1", "pdhg2", "stacked") or cfg.tau is None:
        return
    if cfg.scheme == "pdhg1":
        c = 1.0 + _data_norm_sq(cfg.data)
    elif cfg.scheme == "pdhg2":
        c = 1.0
    else:
        c = _stacked_norm_sq(tuple(cfg.data.shape), cfg.beta_tv > 0, cfg.beta_cross > 0)
    if tau * cfg.gamma * c > 1.0 + 1e-12:
        warnings.warn(
            f"tau*gamma = {tau * cfg.gamma:.4g} exceeds 1/||K||^2 = {1.0 / c:.4g}; "
            "the scheme may not converge",
            stacklevel=3,
        )


# ---------------------------------------------------------------------------
# Fixed points
# ---------------------------------------------------------------------------


def fixed_point_t(cfg: SchemeConfig) -> float:
    """Gradient step ``t`` in the scheme's fixed-point equation.

    ``tau`` for ``pg``; ``1/gamma`` for the others, since the denoiser
    always acts on ``u + y/gamma`` with ``y = -grad_data(u)`` at rest.
    The explicit prior blocks of ``stacked`` are not part of the equation.
    """
    if cfg.scheme == "pg":
        return cfg.step
    return 1.0 / cfg.gamma


def fixed_point_residual(cfg: SchemeConfig, u) -> float:
    """``||u - G(u - t grad_data(u))|| / max(||u||, eps)``."""
    u = np.asarray(u, dtype=np.float64)
    t = fixed_point_t(cfg)
    g = cfg.denoiser(u - t * cfg.data.gradient(u))
    return float(np.linalg.norm(u - g) / max(np.linalg.norm(u), EPS))


def fixed_point_init(cfg: SchemeConfig, u0) -> dict:
    """Auxiliary initializations that make a fixed point ``u0`` stationary.

    Returns keyword arguments for :func:`run`: ``y0 = -grad_data(u0)`` and
    ``v0 = u0`` for ADMM; additionally ``z0 = alpha (A u0 - f)`` and
    ``u_bar0 = u0`` for PDHG1; ``y0`` and ``u_bar0`` for PDHG2.
    """
    u0 = np.asarray(u0, dtype=np.float64)
    y0 = -cfg.data.gradient(u0)
    if cfg.scheme == "admm":
        return {"y0": y0, "v0": u0.copy()}
    if cfg.scheme == "pdhg1":
        z0 = cfg.data.alpha * cfg.data.residual(u0)
        return {"y0": y0, "z0": [z0], "u_bar0": u0.copy()}
    if cfg.scheme in ("pdhg2", "stacked"):
        return {"y0": y0, "u_bar0": u0.copy()}
    return {}


def rescale_config(cfg: SchemeConfig, new_gamma: float) -> SchemeConfig:
    """Equivalent configuration with dual step ``new_gamma``.

    Keeps ``tau * gamma`` fixed and scales ``alpha`` and the beta weights by
    ``new_gamma / gamma``. With zero dual initializations (or duals scaled
    by the same factor) the u-iterates are unchanged.
    """
    if cfg.scheme == "pg":
        raise ValueError("proximal gradient has no dual step to rescale")
    if not new_gamma > 0:
        raise ValueError("new_gamma must be positive")
    if new_gamma == cfg.gamma:
        return replace(cfg)
    r = new_gamma / cfg.gamma
    c = cfg.step * cfg.gamma
    return replace(
        cfg,
        gamma=new_gamma,
        tau=None if cfg.scheme == "admm" and cfg.tau is None else c / new_gamma,
        data=cfg.data.with_alpha(cfg.data.alpha * r),
        beta_tv=cfg.beta_tv * r,
        beta_cross=cfg.beta_cross * r,
    )


# ---------------------------------------------------------------------------
# Iterations
# ---------------------------------------------------------------------------


def _finite(*arrays) -> bool:
    return all(a is None or bool(np.all(np.isfinite(a))) for a in arrays)


def _denoise(g: Denoiser, x: np.ndarray):
    if not np.all(np.isfinite(x)):
        return None
    out = g(x)
    return out if np.all(np.isfinite(out)) else None


def _step_pg(cfg, st, tau):
    arg = st.u - tau * cfg.data.gradient(st.u)
    u = _denoise(cfg.denoiser, arg)
    if u is None:
        return False
    st.u = u
    return True


def _step_admm(cfg, st, tau):
    gamma = cfg.gamma
    v = _denoise(cfg.denoiser, st.u + st.y / gamma)
    if v is None:
        return False
    u = cfg.data.prox(1.0 / gamma, v - st.y / gamma)
    st.y = st.y + gamma * (u - v)
    st.v, st.u = v, u
    return True


def _step_pdhg1(cfg, st, tau):
    gamma, data = cfg.gamma, cfg.data
    a_ubar = data.operator.forward(st.u_bar)
    z = st.z[0]
    z = z + gamma * a_ubar - gamma * data.prox_range(1.0 / gamma, z / gamma + a_ubar)
    g = _denoise(cfg.denoiser, st.y / gamma + st.u_bar)
    if g is None:
        return False
    y = st.y + gamma * st.u_bar - gamma * g
    u = st.u - tau * data.operator.adjoint(z) - tau * y
    st.u_bar = u + cfg.theta * (u - st.u)
    st.z, st.y, st.u = [z], y, u
    return True


def _step_pdhg2(cfg, st, tau, blocks=()):
    gamma = cfg.gamma
    zs = []
    for (op, prox, beta), z in zip(blocks, st.z):
        d_ubar = op.forward(st.u_bar)
        zs.append(z + gamma * d_ubar - gamma * prox(beta / gamma, z / gamma + d_ubar))
    g = _denoise(cfg.denoiser, st.y / gamma + st.u_bar)
    if g is None:
        return False
    y = st.y + gamma * st.u_bar - gamma * g
    arg = st.u - tau * y
    for (op, _, _), z in zip(blocks, zs):
        arg = arg - tau * op.adjoint(z)
    u = cfg.data.prox(tau, arg)
    st.u_bar = u + cfg.theta * (u - st.u)
    st.z, st.y, st.u = zs, y, u
    return True


def _prior_blocks(cfg: SchemeConfig):
    shape = cfg.data.shape
    blocks = []
    if cfg.beta_tv > 0:
        blocks.append((Gradient(shape), prox_l21, cfg.beta_tv))
    if cfg.beta_cross > 0:
        blocks.append((ChannelGradientDifference(shape), prox_l1, cfg.beta_cross))
    return blocks


def run(
    cfg: SchemeConfig,
    u0,
    *,
    y0=None,
    z0=None,
    v0=None,
    u_bar0=None,
    callback: Callable[[SchemeState], None] | None = None,
) -> RunReport:
    """Iterate ``cfg.scheme`` from ``u0``.

    Duals default to zero, ``v0`` and ``u_bar0`` to ``u0``. ``z0`` is a
    list with one array per dual block (the range-side dual for ``pdhg1``;
    the TV then cross-channel blocks for ``stacked``). Stops when the
    relative change of ``u`` is at most ``cfg.tol``, after ``cfg.max_iters``
    iterations, or as soon as an iterate turns non-finite; in the last case
    the report carries the last finite ``u``.
    """
    data = cfg.data
    u0 = np.array(u0, dtype=np.float64)
    if u0.shape != tuple(data.shape):
        raise ValueError(f"u0 shape {u0.shape} does not match data term {data.shape}")
    tau = cfg.step
    _check_steps(cfg, tau)

    st = SchemeState(u=u0)
    st.y = np.zeros_like(u0) if y0 is None else np.array(y0, dtype=np.float64)
    st.u_bar = u0.copy() if u_bar0 is None else np.array(u_bar0, dtype=np.float64)
    blocks = []
    if cfg.scheme == "admm":
        st.v = u0.copy() if v0 is None else np.array(v0, dtype=np.float64)
        step = _step_admm
    elif cfg.scheme == "pg":
        step = _step_pg
    elif cfg.scheme == "pdhg1":
        st.z = [np.zeros(data.operator.out_shape)] if z0 is None else [np.array(z, dtype=np.float64) for z in z0]
        step = _step_pdhg1
    else:
        blocks = _prior_blocks(cfg) if cfg.scheme == "stacked" else []
        if z0 is None:
            st.z = [np.zeros(op.out_shape) for op, _, _ in blocks]
        else:
            st.z = [np.array(z, dtype=np.float64) for z in z0]
        if len(st.z) != len(blocks):
            raise ValueError(f"expected {len(blocks)} dual blocks in z0, got {len(st.z)}")
        step = functools.partial(_step_pdhg2, blocks=blocks)

    history: list[HistoryRow] = []
    reason = "max_iters"
    last_u = st.u
    for k in range(1, cfg.max_iters + 1):
        u_prev = st.u
        ok = step(cfg, st, tau)
        rel = math.nan
        if ok and _finite(st.u, st.y, st.v, st.u_bar, *st.z):
            with np.errstate(over="ignore", invalid="ignore"):
                rel = float(np.linalg.norm(st.u - u_prev) / max(np.linalg.norm(u_prev), EPS))
        if not math.isfinite(rel):  # non-finite iterate, or norms overflowing
            st.u = u_prev
            reason = "nonfinite"
            break
        st.k = k
        last_u = st.u
        row = HistoryRow(k, rel, data.energy(st.u))
        if cfg.track_residual:
            row.fixed_point_residual = fixed_point_residual(cfg, st.u)
        if cfg.reference is not None:
            row.psnr_vs_reference = psnr(st.u, cfg.reference)
        history.append(row)
        if callback is not None:
            callback(st)
        if rel <= cfg.tol:
            reason = "tol"
            break
    return RunReport(last_u, len(history), reason, history, st)


def _runner(name):
    def runner(cfg: SchemeConfig, u0, **kwargs) -> RunReport:
        if cfg.scheme != name:
            cfg = replace(cfg, scheme=name)
        return run(cfg, u0, **kwargs)

    runner.__name__ = f"run_{name}"
    runner.__doc__ = f"Run the ``{name}`` scheme; see :func:`run`."
    return runner


run_pg = _runner("pg")
run_admm = _runner("admm")
run_pdhg1 = _runner("pdhg1")
run_pdhg2 = _runner("pdhg2")
run_stacked_pdhg = _runner("stacked")
run_stacked_pdhg.__name__ = "run_stacked_pdhg"


def _fmt(v: float) -> str:
    return "" if isinstance(v, float) and math.isnan(v) else repr(v)


def history_csv(history: list[HistoryRow]) -> str:
    """CSV with columns k, rel_change, data_energy, fixed_point_residual, psnr_vs_reference.

    Columns that were not tracked are left empty.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "rel_change", "data_energy", "fixed_point_residual", "psnr_vs_reference"])
    for r in history:
        w.writerow([r.k, _fmt(r.rel_change), _fmt(r.data_energy), _fmt(r.fixed_point_residual), _fmt(r.psnr_vs_reference)])
    return buf.getvalue()
