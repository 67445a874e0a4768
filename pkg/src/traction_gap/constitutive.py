"""Green-St.Venant stored energy, its rescaled versions and the limit quadratic form.

With ``C = F^T F`` the density is

    W(F) = mu |C - I|^2 + lambda/2 (Tr(C - I))^2     if det F > 0
         = +inf                                        otherwise

so that ``h^-2 W(I + h B) -> 4 mu |sym B|^2 + 2 lambda (Tr sym B)^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algebra import frob, frob_norm2

# Energy value for states with det F <= 0. Callers check determinants before
# summing, so this never enters a quadrature sum.
INFINITE_ENERGY = math.inf


@dataclass(frozen=True)
class Material:
    """Isotropic Lame pair. ``lam == 0`` is allowed (the pure ``|C - I|^2`` density)."""

    mu: float
    lam: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu!r}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam!r}")

    def v0_identity(self, dim: int) -> float:
        """V0(I) = 4 mu N + 2 lambda N^2."""
        return 4.0 * self.mu * dim + 2.0 * self.lam * dim * dim

    def upper_gamma(self, dim: int) -> float:
        return 4.0 * self.mu + 2.0 * self.lam * dim


def _greenlagrange_terms(m: Material, D: np.ndarray) -> np.ndarray:
    # D = C - I (times whatever scaling the caller uses)
    return m.mu * frob_norm2(D) + 0.5 * m.lam * np.trace(D, axis1=-2, axis2=-1) ** 2


def gsv_density(m: Material, F: np.ndarray):
    """Green-St.Venant density of one matrix or a stack ``(..., N, N)``.

    Returns ``INFINITE_ENERGY`` where ``det F <= 0``.
    """
    F = np.asarray(F, dtype=float)
    D = np.swapaxes(F, -1, -2) @ F - np.eye(F.shape[-1])
    val = _greenlagrange_terms(m, D)
    det = np.linalg.det(F)
    if np.ndim(val) == 0:
        return float(val) if det > 0 else INFINITE_ENERGY
    return np.where(det > 0, val, INFINITE_ENERGY)


def gsv_stress(m: Material, F: np.ndarray) -> np.ndarray:
    """First Piola stress DW(F) = F [4 mu (C - I) + 2 lambda Tr(C - I) I]."""
    F = np.asarray(F, dtype=float)
    n = F.shape[-1]
    D = np.swapaxes(F, -1, -2) @ F - np.eye(n)
    tr = np.trace(D, axis1=-2, axis2=-1)[..., None, None]
    return F @ (4.0 * m.mu * D + 2.0 * m.lam * tr * np.eye(n))


def v0_quadratic(m: Material, B: np.ndarray):
    """Limit quadratic form 4 mu |B|^2 + 2 lambda (Tr B)^2 on symmetric B."""
    B = np.asarray(B, dtype=float)
    if not np.allclose(B, np.swapaxes(B, -1, -2), rtol=0.0, atol=1e-12 * (1.0 + np.abs(B).max(initial=0.0))):
        raise ValueError("v0_quadratic expects a symmetric matrix; pass sym(B)")
    val = 4.0 * m.mu * frob_norm2(B) + 2.0 * m.lam * np.trace(B, axis1=-2, axis2=-1) ** 2
    return float(val) if np.ndim(val) == 0 else val


def v0_derivative(m: Material, B: np.ndarray) -> np.ndarray:
    """DV0(B) = 8 mu B + 4 lambda Tr(B) I, so that V0(B) = DV0(B).B / 2."""
    B = np.asarray(B, dtype=float)
    n = B.shape[-1]
    tr = np.trace(B, axis1=-2, axis2=-1)[..., None, None]
    return 8.0 * m.mu * B + 4.0 * m.lam * tr * np.eye(n)


def v0_bilinear(m: Material, A: np.ndarray, B: np.ndarray):
    """Polar form of V0: V0(A + B) = V0(A) + 2 v0_bilinear(A, B) + V0(B)."""
    return 0.5 * frob(v0_derivative(m, A), B)


def vh_density(m: Material, h: float, B: np.ndarray):
    """Rescaled density h^-2 W(I + h B).

    ``C - I`` is formed as ``h (B + B^T) + h^2 B^T B`` rather than from
    ``F^T F`` so that small ``h`` does not lose digits to cancellation.
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h!r}")
    B = np.asarray(B, dtype=float)
    n = B.shape[-1]
    Bt = np.swapaxes(B, -1, -2)
    D = h * (B + Bt) + h * h * (Bt @ B)
    val = _greenlagrange_terms(m, D) / (h * h)
    det = np.linalg.det(np.eye(n) + h * B)
    if np.ndim(val) == 0:
        return float(val) if det > 0 else INFINITE_ENERGY
    return np.where(det > 0, val, INFINITE_ENERGY)


def vh_stress(m: Material, h: float, B: np.ndarray) -> np.ndarray:
    """Derivative of vh_density with respect to B, i.e. h^-1 DW(I + h B)."""
    B = np.asarray(B, dtype=float)
    n = B.shape[-1]
    Bt = np.swapaxes(B, -1, -2)
    D = (B + Bt) + h * (Bt @ B)  # (C - I) / h
    tr = np.trace(D, axis1=-2, axis2=-1)[..., None, None]
    F = np.eye(n) + h * B
    return F @ (4.0 * m.mu * D + 2.0 * m.lam * tr * np.eye(n))
