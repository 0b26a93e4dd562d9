"""Quadratic data terms and closed-form proximal operators."""

from __future__ import annotations

import numpy as np

from .image import check_same_shape
from .linops import BayerMask, CircularConvolution, Identity, LinearOperator, operator_norm

__all__ = [
    "DataTerm",
    "data_energy",
    "data_gradient",
    "prox_data",
    "prox_range",
    "prox_l21",
    "prox_l1",
]


class DataTerm:
    """Weighted least-squares fidelity ``(alpha/2) * ||A u - f||^2``.

    ``operator`` must be an :class:`Identity`, :class:`CircularConvolution`
    or :class:`BayerMask`, for which the proximal map has a closed form.
    """

    def __init__(self, operator: LinearOperator, f, alpha: float = 1.0):
        if not isinstance(operator, (Identity, CircularConvolution, BayerMask)):
            raise TypeError(f"no closed-form prox for {type(operator).__name__}")
        f = np.asarray(f, dtype=np.float64)
        if f.shape != operator.out_shape:
            raise ValueError(f"observation shape {f.shape} does not match operator range {operator.out_shape}")
        if not alpha > 0 or not np.isfinite(alpha):
            raise ValueError("alpha must be positive and finite")
        self.operator = operator
        self.f = f
        self.alpha = float(alpha)
        if isinstance(operator, CircularConvolution):
            self._f_hat = np.fft.rfft2(f)
        self._at_f = operator.adjoint(f)

    def with_alpha(self, alpha: float) -> "DataTerm":
        """Same operator and observation with a different weight."""
        new = object.__new__(DataTerm)
        new.__dict__.update(self.__dict__)
        if not alpha > 0 or not np.isfinite(alpha):
            raise ValueError("alpha must be positive and finite")
        new.alpha = float(alpha)
        return new

    def operator_norm_sq(self) -> float:
        """Squared spectral norm of the operator, estimated once and cached."""
        if "_norm_sq" not in self.__dict__:
            self._norm_sq = operator_norm(self.operator) ** 2
        return self._norm_sq

    @property
    def shape(self) -> tuple[int, ...]:
        """Shape of the unknown image."""
        return self.operator.in_shape

    def residual(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        check_same_shape(u, np.empty(self.shape))
        return self.operator.forward(u) - self.f

    def energy(self, u) -> float:
        r = self.residual(u)
        return 0.5 * self.alpha * float(np.vdot(r, r))

    def gradient(self, u) -> np.ndarray:
        return self.alpha * self.operator.adjoint(self.residual(u))

    def prox(self, t: float, v) -> np.ndarray:
        """``argmin_u 1/2 ||u - v||^2 + t * (alpha/2) ||A u - f||^2``."""
        v = np.asarray(v, dtype=np.float64)
        check_same_shape(v, np.empty(self.shape))
        c = t * self.alpha
        op = self.operator
        if isinstance(op, CircularConvolution):
            k_hat = op.spectrum
            num = np.fft.rfft2(v) + c * np.conj(k_hat) * self._f_hat
            den = 1.0 + c * (k_hat.real**2 + k_hat.imag**2)
            return np.fft.irfft2(num / den, s=v.shape[1:])
        if isinstance(op, BayerMask):
            return (v + c * self._at_f) / (1.0 + c * op.mask)
        return (v + c * self.f) / (1.0 + c)

    def prox_range(self, t: float, w) -> np.ndarray:
        """Prox of ``t * (alpha/2) ||. - f||^2`` on the operator's range."""
        c = t * self.alpha
        return (np.asarray(w, dtype=np.float64) + c * self.f) / (1.0 + c)


def data_energy(d: DataTerm, u) -> float:
    return d.energy(u)


def data_gradient(d: DataTerm, u) -> np.ndarray:
    return d.gradient(u)


def prox_data(d: DataTerm, t: float, v) -> np.ndarray:
    return d.prox(t, v)


def prox_range(d: DataTerm, t: float, w) -> np.ndarray:
    return d.prox_range(t, w)


def prox_l21(lam: float, p) -> np.ndarray:
    """Isotropic shrinkage of consecutive (horizontal, vertical) plane pairs.

    Each per-pixel 2-vector is scaled by ``max(0, 1 - lam/|p|)``; zero
    vectors stay zero.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape[0] % 2:
        raise ValueError(f"l2,1 prox needs an even plane count, got {p.shape[0]}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if lam == 0:
        return p.copy()
    c2, h, w = p.shape
    pairs = p.reshape(c2 // 2, 2, h, w)
    norm = np.sqrt(pairs[:, 0] ** 2 + pairs[:, 1] ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norm > lam, 1.0 - lam / norm, 0.0)
    return (pairs * scale[:, None]).reshape(c2, h, w)


def prox_l1(lam: float, p) -> np.ndarray:
    """Soft thresholding ``sign(p) * max(0, |p| - lam)``."""
    p = np.asarray(p, dtype=np.float64)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if lam == 0:
        return p.copy()
    return np.sign(p) * np.maximum(np.abs(p) - lam, 0.0)
