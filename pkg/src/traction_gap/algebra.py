"""Small fixed-dimension matrix helpers and the skew-matrix parametrization.

Skew matrices are never stored raw: a 2x2 skew matrix is the scalar ``w``
and a 3x3 one is the axis vector ``a`` with ``W @ x == cross(a, x)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def skw(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M - np.swapaxes(M, -1, -2))


def frob(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Frobenius inner product A.B over the last two axes."""
    return np.einsum("...ij,...ij->...", A, B)


def frob_norm2(A: np.ndarray) -> np.ndarray:
    return frob(A, A)


@dataclass(frozen=True)
class SkewParam:
    """Minimal parameters of a skew-symmetric matrix.

    ``values`` has length 1 (N=2, the scalar ``w``) or 3 (N=3, the axis ``a``).
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float)).copy()
        if v.shape not in ((1,), (3,)):
            raise ValueError(f"SkewParam needs 1 (N=2) or 3 (N=3) values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def scalar(cls, w: float) -> "SkewParam":
        return cls(np.array([w]))

    @classmethod
    def axis(cls, a) -> "SkewParam":
        return cls(np.asarray(a, dtype=float))

    @classmethod
    def zero(cls, dim: int) -> "SkewParam":
        return cls(np.zeros(1 if dim == 2 else 3))

    @property
    def dim(self) -> int:
        return 2 if self.values.size == 1 else 3

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def matrix(self) -> np.ndarray:
        return skew_from_params(self)

    def square(self) -> np.ndarray:
        return skew_square(self)

    def canonical(self) -> "SkewParam":
        """Representative of the +/- pair with first nonzero component positive."""
        nz = np.flatnonzero(self.values)
        if nz.size and self.values[nz[0]] < 0:
            return SkewParam(-self.values)
        return self

    def to_list(self) -> list[float]:
        return [float(x) for x in self.values]


def skew_from_params(p: SkewParam) -> np.ndarray:
    if p.dim == 2:
        w = p.values[0]
        return np.array([[0.0, -w], [w, 0.0]])
    a1, a2, a3 = p.values
    return np.array([[0.0, -a3, a2], [a3, 0.0, -a1], [-a2, a1, 0.0]])


def skew_square(p: SkewParam) -> np.ndarray:
    """W @ W in closed form: -w^2 I (N=2) or a (x) a - |a|^2 I (N=3)."""
    if p.dim == 2:
        return -(p.values[0] ** 2) * np.eye(2)
    a = p.values
    return np.outer(a, a) - (a @ a) * np.eye(3)


def euler_rodrigues(p: SkewParam, theta: float) -> np.ndarray:
    """Rotation I + sin(theta) W + (1 - cos(theta)) W^2 for a unit parameter."""
    if abs(p.norm - 1.0) > 1e-12:
        raise ValueError(f"euler_rodrigues needs a unit skew parameter, got norm {p.norm!r}")
    W = skew_from_params(p)
    return np.eye(p.dim) + np.sin(theta) * W + (1.0 - np.cos(theta)) * skew_square(p)


def skew_basis(dim: int) -> list[SkewParam]:
    """Unit generators of the skew matrices: one for N=2, three for N=3."""
    if dim == 2:
        return [SkewParam.scalar(1.0)]
    return [SkewParam.axis(e) for e in np.eye(3)]
