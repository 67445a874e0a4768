"""Energy evaluators: linearized energy E, the gap functional F, its smoothed
family F_eps, the rescaled nonlinear energies F_h and their derivatives.

F(v) = min over skew W of  int V0(E(v) - W^2/2) - L(v).

Because V0 is quadratic and W is constant, only the mean strain enters the
inner problem:

    int V0(E - G) = int V0(E) + |Omega| (V0(G) - DV0(Ebar) . G),

so the inner minimization is over 1 (N=2) or 3 (N=3) real parameters.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .algebra import SkewParam, frob, skew_square, sym
from .constitutive import INFINITE_ENERGY, Material, v0_derivative, v0_quadratic, vh_density, vh_stress
from .loads import LoadSystem, eval_load_work, load_vector
from .mesh import AffineField, BoxDomain3, Mesh, displacement_gradient, nodal_values, strain_field

log = logging.getLogger(__name__)


class InnerMinimizationError(RuntimeError):
    pass


@dataclass
class EnergyBreakdown:
    """Split of F(v): total = elastic - load_work, correction = total - E(v) <= 0."""

    elastic: float
    load_work: float
    correction: float
    w_opt: SkewParam
    total: float
    linear_energy: float

    def to_dict(self) -> dict:
        return {
            "elastic": self.elastic,
            "load_work": self.load_work,
            "correction": self.correction,
            "w_opt": self.w_opt.to_list(),
            "total": self.total,
            "linear_energy": self.linear_energy,
        }


def strain_summary(domain, m: Material, v) -> tuple[float, np.ndarray, float]:
    """(int V0(E(v)), mean strain, |Omega|)."""
    E = strain_field(domain, v)
    vol = domain.volume
    if isinstance(domain, BoxDomain3):
        return v0_quadratic(m, E) * vol, E, vol
    elastic = float(domain.areas @ v0_quadratic(m, E))
    Ebar = np.einsum("t,tij->ij", domain.areas, E) / vol
    return elastic, Ebar, vol


def eval_E(domain, m: Material, ls: LoadSystem, v) -> float:
    """Linearized energy int V0(E(v)) - L(v)."""
    elastic, _, _ = strain_summary(domain, m, v)
    return elastic - eval_load_work(ls, domain, v)


# --- inner minimization over skew matrices ---------------------------------

def _gap_density(m: Material, Ebar: np.ndarray, p: np.ndarray) -> tuple[float, np.ndarray]:
    """V0(G) - DV0(Ebar) . G with G = W(p)^2 / 2, and its gradient in p."""
    dim = Ebar.shape[0]
    G = 0.5 * skew_square(SkewParam(p))
    S = v0_derivative(m, G - Ebar)  # DV0(G) - DV0(Ebar)
    val = 0.5 * frob(v0_derivative(m, G), G) - frob(v0_derivative(m, Ebar), G)
    # dG = (da (x) a + a (x) da)/2 - (a . da) I  (N=3), dG = -w dw I (N=2)
    if dim == 2:
        grad = np.array([-p[0] * np.trace(S)])
    else:
        grad = S @ p - np.trace(S) * p
    return float(val), grad


def inner_radius(m: Material, Ebar: np.ndarray) -> float:
    """Bound on |p| for any minimizer: V0(G) <= 4 V0(Ebar) and V0(G) >= mu (N-1) |p|^4."""
    dim = Ebar.shape[0]
    v = v0_quadratic(m, sym(Ebar))
    return (4.0 * v / (m.mu * (dim - 1))) ** 0.25


def start_schedule(dim: int, radius: float) -> list[np.ndarray]:
    """Deterministic starts: origin, then unit directions times 3 radii.

    N=3 uses the 26 directions of the 3x3x3 stencil, N=2 the two signs.
    """
    if dim == 2:
        dirs = [np.array([1.0]), np.array([-1.0])]
    else:
        dirs = [np.array(d, dtype=float) / np.linalg.norm(d)
                for d in itertools.product((-1, 0, 1), repeat=3) if any(d)]
    starts = [np.zeros(1 if dim == 2 else 3)]
    for r in (0.25, 0.5, 1.0):
        starts += [r * radius * d for d in dirs]
    return starts


@dataclass
class InnerResult:
    param: SkewParam
    value: float  # per unit volume: V0(Ebar - G) - V0(Ebar)
    converged_starts: int
    method: str


def inner_minimize(m: Material, Ebar: np.ndarray, gtol: float = 1e-13) -> InnerResult:
    """Multistart BFGS over the skew parameters, grid fallback if no start converges."""
    Ebar = sym(np.asarray(Ebar, dtype=float))
    dim = Ebar.shape[0]
    R = inner_radius(m, Ebar)
    if R == 0.0:
        return InnerResult(SkewParam.zero(dim), 0.0, 1, "trivial")
    scale = max(v0_quadratic(m, Ebar), 1e-300)

    def fun(p):
        val, grad = _gap_density(m, Ebar, p)
        return val / scale, grad / scale

    best_p, best_val, ok = None, math.inf, 0
    for x0 in start_schedule(dim, R):
        res = minimize(fun, x0, jac=True, method="BFGS", options={"gtol": gtol, "maxiter": 500})
        if res.success or np.linalg.norm(res.jac) <= 1e3 * gtol:
            ok += 1
            if res.fun < best_val:
                best_p, best_val = res.x, res.fun
    method = "multistart"
    if ok == 0:
        log.warning("inner multistart did not converge; falling back to grid search")
        gp, _ = inner_grid_oracle(m, Ebar, refinements=4)
        res = minimize(fun, gp.values, jac=True, method="BFGS", options={"gtol": gtol, "maxiter": 2000})
        if not (res.success or np.linalg.norm(res.jac) <= 1e3 * gtol):
            raise InnerMinimizationError(
                f"inner minimization failed: mean strain {Ebar.tolist()}, radius {R:.3e}, "
                f"last gradient norm {np.linalg.norm(res.jac):.3e}, message {res.message!r}")
        best_p, best_val, method = res.x, res.fun, "grid+polish"
    # value can only be <= 0 (p = 0 is admissible); clip round-off
    val = min(best_val * scale, 0.0)
    return InnerResult(SkewParam(best_p).canonical(), val, ok, method)


def inner_grid_oracle(m: Material, Ebar: np.ndarray, points: int | None = None,
                      refinements: int = 1) -> tuple[SkewParam, float]:
    """Brute-force inner minimum on a uniform grid of [-R, R]^k, zoomed ``refinements`` times.

    Defaults to 21 points per axis for N=3 and 10^4 points for N=2 (on [0, R],
    the objective being even in w). Returns the best grid point and its value
    per unit volume.
    """
    Ebar = sym(np.asarray(Ebar, dtype=float))
    dim = Ebar.shape[0]
    R = inner_radius(m, Ebar)
    if R == 0.0:
        return SkewParam.zero(dim), 0.0
    if dim == 2:
        pts = points or 10_000
        lo, hi = np.array([0.0]), np.array([R])
    else:
        pts = points or 21
        lo, hi = -R * np.ones(3), R * np.ones(3)
    best_p, best_v = None, math.inf
    for _ in range(refinements + 1):
        axes = [np.linspace(lo[i], hi[i], pts) for i in range(len(lo))]
        P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
        vals = _gap_density_batch(m, Ebar, P)
        k = int(np.argmin(vals))
        if vals[k] < best_v:
            best_p, best_v = P[k], float(vals[k])
        step = (hi - lo) / (pts - 1)
        lo, hi = best_p - 2 * step, best_p + 2 * step
    return SkewParam(best_p).canonical(), min(best_v, 0.0)


def _gap_density_batch(m: Material, Ebar: np.ndarray, P: np.ndarray) -> np.ndarray:
    dim = Ebar.shape[0]
    if dim == 2:
        G = -0.5 * (P[:, 0] ** 2)[:, None, None] * np.eye(2)
    else:
        G = 0.5 * (P[:, :, None] * P[:, None, :] - np.sum(P * P, 1)[:, None, None] * np.eye(3))
    return v0_quadratic(m, G) - frob(v0_derivative(m, Ebar), G)


# --- F and its 2D closed form ---------------------------------------------

def eval_F(domain, m: Material, ls: LoadSystem, v) -> EnergyBreakdown:
    """Gap functional by inner minimization (both N=2 and N=3)."""
    elastic0, Ebar, vol = strain_summary(domain, m, v)
    work = eval_load_work(ls, domain, v)
    inner = inner_minimize(m, Ebar)
    correction = vol * inner.value
    E = elastic0 - work
    return EnergyBreakdown(
        elastic=elastic0 + correction,
        load_work=work,
        correction=correction,
        w_opt=inner.param,
        total=E + correction,
        linear_energy=E,
    )


def trace_integral(domain, m: Material, v) -> float:
    """int DV0(I) . E(v)."""
    _, Ebar, vol = strain_summary(domain, m, v)
    return vol * float(frob(v0_derivative(m, np.eye(domain.dim)), Ebar))


def identity_energy(domain, m: Material) -> float:
    """int V0(I)."""
    return domain.volume * m.v0_identity(domain.dim)


def eval_F_closed(domain, m: Material, ls: LoadSystem, v) -> EnergyBreakdown:
    """N=2 only: F = E - (int V0(I))^-1 [(int DV0(I) . E(v))^-]^2 / 4."""
    if domain.dim != 2:
        raise ValueError("the closed form of F holds for N=2 only")
    elastic0, Ebar, vol = strain_summary(domain, m, v)
    work = eval_load_work(ls, domain, v)
    b = trace_integral(domain, m, v)
    c = identity_energy(domain, m)
    neg = max(-b, 0.0)
    correction = -0.25 * neg * neg / c
    # optimal -W^2/2 = s I with s = b^- / (2c), i.e. w^2 = 2 s
    w = math.sqrt(neg / c)
    E = elastic0 - work
    return EnergyBreakdown(elastic0 + correction, work, correction, SkewParam.scalar(w), E + correction, E)


def eval_a_star(domain: Mesh, v) -> float:
    """a* with a*^2 = |Omega|^-1 (int div v)^- (Green-St.Venant case, N=2)."""
    if domain.dim != 2:
        raise ValueError("a* is defined for N=2")
    div = np.trace(displacement_gradient(domain, v), axis1=1, axis2=2)
    total = float(domain.areas @ div)
    return math.sqrt(max(-total, 0.0) / domain.volume)


def phi_eps(eps: float, t: float) -> float:
    """C^2 regularization of (t^-)^2 from above."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if t <= 0:
        return t * t - eps * t + eps * eps / 3.0
    if t <= eps:
        return (eps - t) ** 3 / (3.0 * eps)
    return 0.0


def eval_F_eps(eps: float, domain, m: Material, ls: LoadSystem, v) -> float:
    if not eps > 0:
        raise ValueError("eps must be positive")
    if domain.dim != 2:
        raise ValueError("F_eps is defined for N=2")
    E = eval_E(domain, m, ls, v)
    return E - 0.25 * phi_eps(eps, trace_integral(domain, m, v)) / identity_energy(domain, m)


def first_variation_E(mesh: Mesh, m: Material, ls: LoadSystem, v, phi) -> float:
    """int DV0(E(v)) . E(phi) - L(phi)."""
    Ev = strain_field(mesh, v)
    Ep = strain_field(mesh, phi)
    inner = float(mesh.areas @ frob(v0_derivative(m, Ev), Ep))
    return inner - eval_load_work(ls, mesh, phi)


def first_variation_F(mesh: Mesh, m: Material, ls: LoadSystem, v, phi) -> float:
    """dE(v)[phi] + (int V0(I))^-1 (int DV0(I).E(v))^- (int DV0(I).E(phi)) / 2."""
    if mesh.dim != 2:
        raise ValueError("explicit first variation of F holds for N=2")
    b_v = trace_integral(mesh, m, v)
    b_phi = trace_integral(mesh, m, phi)
    c = identity_energy(mesh, m)
    return first_variation_E(mesh, m, ls, v, phi) + 0.5 * max(-b_v, 0.0) * b_phi / c


# --- rescaled nonlinear energies ------------------------------------------

def element_determinants(mesh: Mesh, h: float, v) -> np.ndarray:
    grads = displacement_gradient(mesh, v)
    return np.linalg.det(np.eye(2) + h * grads)


def stored_energy_h(domain, m: Material, h: float, v) -> float:
    """int h^-2 W(I + h grad v), or INFINITE_ENERGY if any det(I + h grad v) <= 0."""
    if not h > 0:
        raise ValueError("h must be positive")
    if isinstance(domain, BoxDomain3):
        if not isinstance(v, AffineField):
            raise ValueError("BoxDomain3 supports 3D affine fields only")
        dens = vh_density(m, h, v.M)
        return INFINITE_ENERGY if dens == INFINITE_ENERGY else dens * domain.volume
    grads = displacement_gradient(domain, v)
    if np.any(np.linalg.det(np.eye(2) + h * grads) <= 0):
        return INFINITE_ENERGY
    return float(domain.areas @ vh_density(m, h, grads))


def eval_Fh(domain, m: Material, ls: LoadSystem, h: float, v) -> float:
    """F_h(v) = int h^-2 W(I + h grad v) - L(v)."""
    stored = stored_energy_h(domain, m, h, v)
    if stored == INFINITE_ENERGY:
        return INFINITE_ENERGY
    return stored - eval_load_work(ls, domain, v)


def grad_Fh(mesh: Mesh, m: Material, ls: LoadSystem, h: float, v, load: np.ndarray | None = None) -> np.ndarray:
    """Nodal gradient of F_h: int h^-1 DW(I + h grad v) : grad phi_a - L(phi_a)."""
    grads = displacement_gradient(mesh, v)
    if np.any(np.linalg.det(np.eye(2) + h * grads) <= 0):
        raise ValueError("grad_Fh called at a state with infinite energy (det(I + h grad v) <= 0)")
    P = vh_stress(m, h, grads)
    contrib = np.einsum("tij,taj->tai", P, mesh.shape_grads) * mesh.areas[:, None, None]
    out = np.zeros((mesh.n_nodes, 2))
    np.add.at(out, mesh.triangles.ravel(), contrib.reshape(-1, 2))
    if load is None:
        load = load_vector(ls, mesh)
    return out - load


def energy_and_grad_Fh(mesh: Mesh, m: Material, h: float, v: np.ndarray, load: np.ndarray):
    """F_h and its nodal gradient from a precomputed load vector (for descent loops)."""
    grads = displacement_gradient(mesh, v)
    if np.any(np.linalg.det(np.eye(2) + h * grads) <= 0):
        return INFINITE_ENERGY, None
    dens = vh_density(m, h, grads)
    P = vh_stress(m, h, grads)
    contrib = np.einsum("tij,taj->tai", P, mesh.shape_grads) * mesh.areas[:, None, None]
    g = np.zeros((mesh.n_nodes, 2))
    np.add.at(g, mesh.triangles.ravel(), contrib.reshape(-1, 2))
    vals = nodal_values(mesh, v)
    return float(mesh.areas @ dens) - float(np.sum(load * vals)), g - load
