"""Solvers: pure-traction linear elasticity, alternating minimization of F,
L-BFGS descent on F_h and the h-sweep experiment."""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .algebra import SkewParam
from .constitutive import Material
from .functionals import EnergyBreakdown, energy_and_grad_Fh, eval_F, eval_Fh
from .loads import (Compatibility, LoadSystem, check_equilibrated, classify_compatibility, inf_F_status,
                    load_norm2, load_vector)
from .mesh import Mesh, displacement_gradient, integrate_quadratic_energy, prestrain_load, stiffness_matrix, strain_field
from .rigid import remove_rigid, rigid_basis

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max_iter"
DIVERGED = "diverged"


@dataclass(frozen=True)
class DescentSettings:
    det_floor: float = 1e-8
    tol_g: float = 1e-9
    max_iter: int = 10_000
    backtrack: float = 0.5
    armijo: float = 1e-4
    wolfe: float = 0.9
    f_roundoff: float = 1e-12
    memory: int = 20
    guard_factor: float = 1e3  # K_guard

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SolveReport:
    field: np.ndarray
    value: float
    iterations: int
    residual: float
    status: str
    tolerance: float = 0.0
    witness: SkewParam | None = None
    history: list = field(default_factory=list)
    breakdown: EnergyBreakdown | None = None

    def to_dict(self) -> dict:
        out = {
            "value": self.value,
            "iterations": self.iterations,
            "residual": self.residual,
            "status": self.status,
            "tolerance": self.tolerance,
            "witness": None if self.witness is None else self.witness.to_list(),
        }
        if self.breakdown is not None:
            out["breakdown"] = self.breakdown.to_dict()
        return out


class SolverError(RuntimeError):
    pass


# --- linear elasticity -----------------------------------------------------

def _deflation(mesh: Mesh) -> np.ndarray:
    Z = np.column_stack([r.ravel() for r in rigid_basis(mesh)])
    Q, _ = np.linalg.qr(Z)
    return Q


def _projected_cg(K, b: np.ndarray, Z: np.ndarray, rtol: float, max_iter: int):
    """CG on the complement of span(Z) (Z orthonormal, K Z = 0)."""
    def proj(x):
        return x - Z @ (Z.T @ x)

    b = proj(b)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = r @ r
    bnorm = math.sqrt(b @ b)
    if bnorm == 0.0:
        return x, 0.0, 0
    for it in range(1, max_iter + 1):
        Ap = proj(K @ p)
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError(f"CG breakdown: p^T K p = {pAp:.3e} at iteration {it}")
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        if math.sqrt(rr_new) <= rtol * bnorm:
            # recompute the true residual once to guard against drift
            r = b - proj(K @ x)
            if math.sqrt(r @ r) <= rtol * bnorm:
                return proj(x), math.sqrt(r @ r), it
            rr_new = r @ r
            p = r.copy()
            rr = rr_new
            continue
        p = r + (rr_new / rr) * p
        rr = rr_new
    res = b - proj(K @ x)
    return proj(x), math.sqrt(res @ res), max_iter


def solve_linear_elasticity(mesh: Mesh, m: Material, ls: LoadSystem, prestrain=None,
                            rtol: float = 1e-12, max_iter: int | None = None) -> SolveReport:
    """Minimize int V0(E(v) - G) - L(v) over rigid-free P1 fields.

    The three rigid modes span the kernel of the stiffness matrix; CG runs on
    their Euclidean complement and the result is then made L2-orthogonal to
    the rigid fields.
    """
    eq = check_equilibrated(ls, mesh)
    if not eq.equilibrated:
        raise SolverError(f"load is not equilibrated: force {eq.force_residual}, moment {eq.moment_residual}")
    G = np.zeros((2, 2)) if prestrain is None else np.asarray(prestrain, dtype=float)
    K = stiffness_matrix(mesh, m)
    F = load_vector(ls, mesh)
    b = (F + prestrain_load(mesh, m, G)).ravel()
    Z = _deflation(mesh)
    x, res, its = _projected_cg(K, b, Z, rtol, max_iter or 10 * b.size)
    v = remove_rigid(mesh, x.reshape(-1, 2))
    value = integrate_quadratic_energy(mesh, m, v, G) - float(np.sum(F * v))
    scale = max(math.sqrt(b @ b), 1e-300)
    tol = 1e-10 * scale
    status = CONVERGED if res <= tol else MAX_ITER
    return SolveReport(v, value, its, res, status, tolerance=tol)


# --- minimization of F -----------------------------------------------------

def minimize_F(mesh: Mesh, m: Material, ls: LoadSystem, init=None, max_steps: int = 200,
               rtol: float = 1e-12, compatibility: Compatibility | None = None) -> SolveReport:
    """Alternate a prestrained linear solve (v-step) with the inner skew minimization (W-step)."""
    cls = compatibility or classify_compatibility(ls, mesh)
    if cls.kind == "violated":
        status = inf_F_status(cls, math.nan)
        zero = np.zeros((mesh.n_nodes, 2))
        return SolveReport(zero, -math.inf, 0, math.inf, DIVERGED, witness=status.witness)
    v = np.zeros((mesh.n_nodes, 2)) if init is None else np.array(init, dtype=float)
    bd = eval_F(mesh, m, ls, v)
    history = [bd.total]
    for step in range(1, max_steps + 1):
        G = 0.5 * bd.w_opt.square()
        lin = solve_linear_elasticity(mesh, m, ls, prestrain=G)
        v = lin.field
        bd = eval_F(mesh, m, ls, v)
        history.append(bd.total)
        scale = max(1.0, abs(bd.total))
        if history[-2] - history[-1] < rtol * scale:
            return SolveReport(v, bd.total, step, lin.residual, CONVERGED, tolerance=rtol * scale,
                               history=history, breakdown=bd)
    return SolveReport(v, bd.total, max_steps, math.nan, MAX_ITER, history=history, breakdown=bd)


# --- descent on F_h --------------------------------------------------------

def _two_loop(g: np.ndarray, S: deque, Y: deque) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y in reversed(list(zip(S, Y))):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((a, rho, s, y))
        q -= a * y
    if S:
        s, y = S[-1], Y[-1]
        q *= (s @ y) / (y @ y)
    for a, rho, s, y in reversed(alphas):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def divergence_bound(ls: LoadSystem, mesh, settings: DescentSettings) -> float:
    """Energy level below which a run is declared divergent: -10 K_guard (|f|^2 + |g|^2)."""
    return -10.0 * settings.guard_factor * load_norm2(ls, mesh)


def minimize_Fh(mesh: Mesh, m: Material, ls: LoadSystem, h: float, init=None,
                settings: DescentSettings = DescentSettings()) -> SolveReport:
    """L-BFGS with backtracking; trial states with det(I + h grad v) <= det_floor are rejected."""
    if not h > 0:
        raise ValueError("h must be positive")
    load = load_vector(ls, mesh)
    v = np.zeros((mesh.n_nodes, 2)) if init is None else np.array(init, dtype=float)
    if np.min(np.linalg.det(np.eye(2) + h * displacement_gradient(mesh, v))) <= settings.det_floor:
        raise SolverError("initial state violates the determinant constraint (infinite energy)")
    f, g = energy_and_grad_Fh(mesh, m, h, v, load)
    tol = settings.tol_g * (1.0 + float(np.linalg.norm(load)))
    bound = divergence_bound(ls, mesh, settings)
    S: deque = deque(maxlen=settings.memory)
    Y: deque = deque(maxlen=settings.memory)
    history = [f]
    x, gx = v.ravel(), g.ravel()
    for it in range(1, settings.max_iter + 1):
        gnorm = float(np.linalg.norm(gx))
        if gnorm <= tol:
            return SolveReport(x.reshape(-1, 2), f, it - 1, gnorm, CONVERGED, tolerance=tol, history=history)
        if load_norm2(ls, mesh) > 0 and f < bound:
            return SolveReport(x.reshape(-1, 2), f, it - 1, gnorm, DIVERGED, tolerance=tol, history=history)
        d = _two_loop(gx, S, Y)
        slope = d @ gx
        if slope >= 0:
            S.clear()
            Y.clear()
            d = -gx
            slope = d @ gx
        t = 1.0
        while True:
            xt = x + t * d
            vt = xt.reshape(-1, 2)
            dets = np.linalg.det(np.eye(2) + h * displacement_gradient(mesh, vt))
            if dets.min() > settings.det_floor:
                ft, gt = energy_and_grad_Fh(mesh, m, h, vt, load)
                if ft <= f + settings.armijo * t * slope:
                    break
                # approximate Wolfe: once the decrease drops below round-off in f,
                # accept on the directional derivative instead
                dslope = float(gt.ravel() @ d)
                if (ft <= f + settings.f_roundoff * abs(f)
                        and settings.wolfe * slope <= dslope <= (2 * settings.armijo - 1) * slope):
                    break
            t *= settings.backtrack
            if t < 1e-20:
                # no decrease possible at this resolution
                status = CONVERGED if gnorm <= 1e3 * tol else MAX_ITER
                return SolveReport(x.reshape(-1, 2), f, it, gnorm, status, tolerance=tol, history=history)
        gt = gt.ravel()
        s, y = xt - x, gt - gx
        if y @ s > 1e-16 * math.sqrt((y @ y) * (s @ s)):
            S.append(s)
            Y.append(y)
        x, gx, f = xt, gt, ft
        history.append(f)
    return SolveReport(x.reshape(-1, 2), f, settings.max_iter, float(np.linalg.norm(gx)), MAX_ITER,
                       tolerance=tol, history=history)


# --- h-sweep ---------------------------------------------------------------

@dataclass
class SweepStep:
    h: float
    Fh: float
    energy_error: float
    strain_error_l2: float
    sqrt_h_grad_l2: float
    grad_error_l1: float
    iterations: int
    status: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SweepReport:
    min_E: float
    steps: list
    linear: SolveReport
    k_obs: float
    settings: dict

    def to_dict(self) -> dict:
        return {"min_E": self.min_E, "k_obs": self.k_obs, "settings": self.settings,
                "steps": [s.to_dict() for s in self.steps]}


def _l2_matrix_norm(mesh: Mesh, A: np.ndarray) -> float:
    return math.sqrt(float(mesh.areas @ np.einsum("tij,tij->t", A, A)))


def _l1_matrix_norm(mesh: Mesh, A: np.ndarray) -> float:
    return float(mesh.areas @ np.sqrt(np.einsum("tij,tij->t", A, A)))


def gamma_sweep(mesh: Mesh, m: Material, ls: LoadSystem, h_list, seed: int = 0,
                settings: DescentSettings = DescentSettings(), perturbation: float = 1e-3) -> SweepReport:
    """Minimize F_h for each h (largest first) and compare rigid-free minimizers with the linear solution.

    Every run starts from the linear solution plus a small seeded rigid-free
    perturbation.
    """
    h_list = [float(h) for h in h_list]
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ValueError("h_list must be strictly decreasing")
    cls = classify_compatibility(ls, mesh)
    if cls.kind != "strict":
        raise ValueError(f"gamma_sweep needs a strictly compatible load, got {cls.kind}")
    lin = solve_linear_elasticity(mesh, m, ls)
    v0 = lin.field
    min_E = lin.value
    rng = np.random.default_rng(seed)
    grad0 = displacement_gradient(mesh, v0)
    E0 = strain_field(mesh, v0)
    norm2 = load_norm2(ls, mesh)
    steps, k_obs = [], 0.0
    for h in h_list:
        noise = rng.standard_normal((mesh.n_nodes, 2))
        scale = perturbation * max(float(np.abs(v0).max()), 0.0)
        init = v0 + scale * remove_rigid(mesh, noise)
        rep = minimize_Fh(mesh, m, ls, h, init=init, settings=settings)
        w = remove_rigid(mesh, rep.field)
        Fw = eval_Fh(mesh, m, ls, h, w)
        gw = displacement_gradient(mesh, w)
        steps.append(SweepStep(
            h=h,
            Fh=Fw,
            energy_error=abs(Fw - min_E),
            strain_error_l2=_l2_matrix_norm(mesh, strain_field(mesh, w) - E0),
            sqrt_h_grad_l2=math.sqrt(h) * _l2_matrix_norm(mesh, gw),
            grad_error_l1=_l1_matrix_norm(mesh, gw - grad0),
            iterations=rep.iterations,
            status=rep.status,
        ))
        if norm2 > 0:
            k_obs = max(k_obs, -min(Fw, rep.value) / norm2)
    return SweepReport(min_E, steps, lin, k_obs, settings.to_dict())
