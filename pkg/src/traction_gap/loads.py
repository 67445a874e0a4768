"""Dead loads: boundary traction f, body force g and their work L(v).

On a mesh every load is reduced to an exact nodal load vector ``F`` with
``L(v) = sum_a F_a . v_a`` for P1 fields ``v``. The resultant matrix
``T = sum_a F_a (x) x_a`` then represents L on linear fields:
``L(M x) = <M, T>``. The compatibility sign ``L(W^2 x) = <W^2, sym T>``
only depends on T.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import SkewParam, frob, skew_basis, skew_square, sym
from .mesh import AffineField, BoxDomain3, DisplacementField, Mesh, nodal_values

TRACTION_KINDS = ("zero", "normal_scaled", "per_edge")
BODY_KINDS = ("zero", "linear", "per_cell")


@dataclass(frozen=True)
class LoadSystem:
    """Traction and body force description.

    traction_kind: ``zero`` | ``normal_scaled`` (f = coefficient * n) | ``per_edge``
    body_kind: ``zero`` | ``linear`` (g = body_matrix @ x) | ``per_cell``
    """

    traction_kind: str = "zero"
    traction_coefficient: float = 0.0
    traction_values: np.ndarray | None = None
    body_kind: str = "zero"
    body_matrix: np.ndarray | None = None
    body_values: np.ndarray | None = None

    def __post_init__(self):
        if self.traction_kind not in TRACTION_KINDS:
            raise ValueError(f"traction kind must be one of {TRACTION_KINDS}, got {self.traction_kind!r}")
        if self.body_kind not in BODY_KINDS:
            raise ValueError(f"body kind must be one of {BODY_KINDS}, got {self.body_kind!r}")
        if not math.isfinite(self.traction_coefficient):
            raise ValueError("traction coefficient must be finite")
        if self.traction_kind == "per_edge" and self.traction_values is None:
            raise ValueError("per_edge traction needs traction_values")
        if self.body_kind == "linear" and self.body_matrix is None:
            raise ValueError("linear body force needs body_matrix")
        if self.body_kind == "per_cell" and self.body_values is None:
            raise ValueError("per_cell body force needs body_values")
        for name in ("traction_values", "body_matrix", "body_values"):
            val = getattr(self, name)
            if val is not None:
                arr = np.array(val, dtype=float)
                if not np.all(np.isfinite(arr)):
                    raise ValueError(f"{name} must be finite")
                object.__setattr__(self, name, arr)

    @classmethod
    def zero(cls) -> "LoadSystem":
        return cls()

    @classmethod
    def normal(cls, coefficient: float) -> "LoadSystem":
        return cls(traction_kind="normal_scaled", traction_coefficient=float(coefficient))

    @classmethod
    def linear_body(cls, M) -> "LoadSystem":
        return cls(body_kind="linear", body_matrix=np.asarray(M, dtype=float))

    def scaled(self, t: float) -> "LoadSystem":
        return LoadSystem(
            traction_kind=self.traction_kind,
            traction_coefficient=t * self.traction_coefficient,
            traction_values=None if self.traction_values is None else t * self.traction_values,
            body_kind=self.body_kind,
            body_matrix=None if self.body_matrix is None else t * self.body_matrix,
            body_values=None if self.body_values is None else t * self.body_values,
        )

    @property
    def is_zero(self) -> bool:
        trac = self.traction_kind == "zero" or (
            self.traction_kind == "normal_scaled" and self.traction_coefficient == 0.0)
        return trac and self.body_kind == "zero"


def load_vector(ls: LoadSystem, mesh: Mesh) -> np.ndarray:
    """Nodal load vector, exact for piecewise-linear test fields."""
    F = np.zeros((mesh.n_nodes, 2))
    if ls.traction_kind != "zero":
        if ls.traction_kind == "normal_scaled":
            f = ls.traction_coefficient * mesh.normals
        else:
            f = np.asarray(ls.traction_values, dtype=float)
            if f.shape != (len(mesh.boundary_edges), 2):
                raise ValueError(f"per_edge traction needs shape ({len(mesh.boundary_edges)}, 2), got {f.shape}")
        half = 0.5 * mesh.edge_lengths[:, None] * f
        np.add.at(F, mesh.boundary_edges[:, 0], half)
        np.add.at(F, mesh.boundary_edges[:, 1], half)
    if ls.body_kind == "linear":
        M = np.asarray(ls.body_matrix, dtype=float)
        if M.shape != (2, 2):
            raise ValueError("linear body force on a 2D mesh needs a 2x2 matrix")
        gx = mesh.nodes @ M.T  # g at the nodes; g is itself P1
        G = gx[mesh.triangles]  # (m, 3, 2)
        # int_T g . phi_b = |T|/12 (sum_a g_a + g_b)
        contrib = (G.sum(axis=1, keepdims=True) + G) * (mesh.areas[:, None, None] / 12.0)
        np.add.at(F, mesh.triangles.ravel(), contrib.reshape(-1, 2))
    elif ls.body_kind == "per_cell":
        g = np.asarray(ls.body_values, dtype=float)
        if g.shape != (mesh.n_triangles, 2):
            raise ValueError(f"per_cell body force needs shape ({mesh.n_triangles}, 2), got {g.shape}")
        contrib = np.repeat((g * mesh.areas[:, None] / 3.0)[:, None, :], 3, axis=1)
        np.add.at(F, mesh.triangles.ravel(), contrib.reshape(-1, 2))
    return F


def _box_resultant(ls: LoadSystem, box: BoxDomain3) -> np.ndarray:
    if ls.traction_kind == "per_edge" or ls.body_kind == "per_cell":
        raise ValueError("BoxDomain3 supports only zero, normal_scaled and linear loads")
    T = np.zeros((3, 3))
    if ls.traction_kind == "normal_scaled":
        T += ls.traction_coefficient * box.volume * np.eye(3)
    if ls.body_kind == "linear":
        M = np.asarray(ls.body_matrix, dtype=float)
        if M.shape != (3, 3):
            raise ValueError("linear body force on a 3D box needs a 3x3 matrix")
        T += M @ box.second_moment()
    return T


def resultant_matrix(ls: LoadSystem, domain) -> np.ndarray:
    """Matrix T with L(M x) = <M, T> for every constant M."""
    if isinstance(domain, BoxDomain3):
        return _box_resultant(ls, domain)
    F = load_vector(ls, domain)
    return F.T @ domain.nodes


def resultant_force(ls: LoadSystem, domain) -> np.ndarray:
    if isinstance(domain, BoxDomain3):
        _box_resultant(ls, domain)  # validates kinds
        return np.zeros(3)  # int n = 0 and M int x = 0 on a centered box
    return load_vector(ls, domain).sum(axis=0)


def eval_load_work(ls: LoadSystem, domain, v: DisplacementField) -> float:
    """L(v): boundary work plus body work."""
    if isinstance(domain, BoxDomain3):
        if not isinstance(v, AffineField) or v.dim != 3:
            raise ValueError("BoxDomain3 supports 3D affine fields only")
        return float(frob(v.M, _box_resultant(ls, domain)) + v.b @ resultant_force(ls, domain))
    vals = nodal_values(domain, v)
    return float(np.sum(load_vector(ls, domain) * vals))


def load_norm2(ls: LoadSystem, domain) -> float:
    """||f||^2_{L2(boundary)} + ||g||^2_{L2(domain)}."""
    total = 0.0
    if isinstance(domain, BoxDomain3):
        a, b, c = domain.half_widths
        area = 8.0 * (a * b + b * c + a * c)
        if ls.traction_kind == "normal_scaled":
            total += ls.traction_coefficient ** 2 * area
        if ls.body_kind == "linear":
            M = np.asarray(ls.body_matrix, dtype=float)
            total += float(frob(M.T @ M, domain.second_moment()))
        return total
    if ls.traction_kind == "normal_scaled":
        total += ls.traction_coefficient ** 2 * domain.edge_lengths.sum()
    elif ls.traction_kind == "per_edge":
        total += float(domain.edge_lengths @ np.sum(np.asarray(ls.traction_values) ** 2, axis=1))
    if ls.body_kind == "linear":
        M = np.asarray(ls.body_matrix, dtype=float)
        total += float(frob(M.T @ M, domain.second_moment()))
    elif ls.body_kind == "per_cell":
        total += float(domain.areas @ np.sum(np.asarray(ls.body_values) ** 2, axis=1))
    return total


@dataclass
class EquilibriumCheck:
    equilibrated: bool
    force_residual: np.ndarray
    moment_residual: np.ndarray
    tolerance: float

    def to_dict(self) -> dict:
        return {
            "equilibrated": self.equilibrated,
            "force_residual": [float(x) for x in self.force_residual],
            "moment_residual": [float(x) for x in np.atleast_1d(self.moment_residual)],
            "tolerance": self.tolerance,
        }


def _load_scale(ls: LoadSystem, domain) -> float:
    size = getattr(domain, "diameter", None)
    if size is None:
        size = 2.0 * float(np.linalg.norm(domain.half_widths))
    return math.sqrt(load_norm2(ls, domain)) * max(size, 1.0) * max(math.sqrt(domain.volume), 1.0)


def check_equilibrated(ls: LoadSystem, domain, rtol: float = 1e-10) -> EquilibriumCheck:
    """Work of the load on the rigid basis: N translations and the rotations W_k x.

    The moment residual for the rotation generated by axis e_k is the k-th
    component of the resultant moment (scalar component for N=2).
    """
    force = resultant_force(ls, domain)
    T = resultant_matrix(ls, domain)
    moment = np.array([frob(p.matrix(), T) for p in skew_basis(domain.dim)])
    tol = rtol * max(_load_scale(ls, domain), 1e-300)
    ok = bool(np.all(np.abs(force) <= tol) and np.all(np.abs(moment) <= tol))
    return EquilibriumCheck(ok, force, moment, tol)


@dataclass
class Compatibility:
    """Sign class of c(W) = L(W^2 x) over nonzero skew W.

    kind: ``strict`` (c < 0 for all W), ``weak`` (c <= 0 with a nonzero kernel)
    or ``violated`` (some W has c > 0; ``witness`` is one, normalized to |param| = 1).
    ``margin`` is the test quantity: Tr T (N=2) or the smallest pairwise
    eigenvalue sum of sym T (N=3); ``band`` is the zero band applied to it.
    """

    kind: str
    margin: float
    band: float
    kernel: list = field(default_factory=list)
    witness: SkewParam | None = None
    T: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "margin": self.margin,
            "band": self.band,
            "kernel": [p.to_list() for p in self.kernel],
            "witness": None if self.witness is None else self.witness.to_list(),
            "witness_value": None if self.witness is None else compatibility_value(self.T, self.witness),
        }


def compatibility_value(T: np.ndarray, p: SkewParam) -> float:
    """c(W) = <W^2, sym T> = L(W^2 x)."""
    return float(frob(skew_square(p), sym(np.asarray(T))))


def classify_T(T: np.ndarray, rtol: float = 1e-10) -> Compatibility:
    """Classify from the resultant matrix alone.

    N=2: c(W) = -w^2 Tr T. N=3: in the eigenbasis of sym T with eigenvalues
    t_1 <= t_2 <= t_3, c(a) = -sum_i a_i^2 (sum of the two other t's).
    """
    T = np.asarray(T, dtype=float)
    dim = T.shape[0]
    S = sym(T)
    band = rtol * max(float(np.linalg.norm(T)), 1e-300)
    if dim == 2:
        margin = float(np.trace(S))
        if margin > band:
            return Compatibility("strict", margin, band, T=T)
        if margin >= -band:
            return Compatibility("weak", margin, band, kernel=[SkewParam.scalar(1.0)], T=T)
        return Compatibility("violated", margin, band, witness=SkewParam.scalar(1.0), T=T)
    t, Q = np.linalg.eigh(S)
    # pair sum opposite each eigenvector: axis along q_i gives c = -(Tr S - t_i)
    pair = np.trace(S) - t
    margin = float(pair.min())
    if margin > band:
        return Compatibility("strict", margin, band, T=T)
    if margin >= -band:
        kernel = [SkewParam.axis(Q[:, i]).canonical() for i in range(3) if abs(pair[i]) <= band]
        return Compatibility("weak", margin, band, kernel=kernel, T=T)
    i = int(np.argmin(pair))
    return Compatibility("violated", margin, band, witness=SkewParam.axis(Q[:, i]).canonical(), T=T)


def classify_compatibility(ls: LoadSystem, domain, rtol: float = 1e-10) -> Compatibility:
    eq = check_equilibrated(ls, domain)
    if not eq.equilibrated:
        raise ValueError(
            "compatibility is only defined for equilibrated loads "
            f"(force residual {eq.force_residual}, moment residual {eq.moment_residual})")
    return classify_T(resultant_matrix(ls, domain), rtol)


@dataclass
class InfStatus:
    """Outcome of inf F: ``finite`` with the value, or ``minus_infinity`` with a witness."""

    kind: str
    value: float
    witness: SkewParam | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value,
                "witness": None if self.witness is None else self.witness.to_list()}


def inf_F_status(cls: Compatibility, min_E: float) -> InfStatus:
    """inf F = min E - sup_W L(W^2 x / 2).

    The sup is 0 (at W = 0) unless some W makes the load work positive, in
    which case tau * W*^2 x / 2 drives F to -inf as tau grows.
    """
    if cls.kind == "violated":
        return InfStatus("minus_infinity", -math.inf, cls.witness)
    return InfStatus("finite", float(min_E))
