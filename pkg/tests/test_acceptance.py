"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest
from conftest import random_field

from traction_gap.algebra import SkewParam
from traction_gap.constitutive import Material
from traction_gap.experiments import compression_field, demo_nonconvexity
from traction_gap.functionals import (eval_E, eval_F, eval_F_closed, eval_F_eps, eval_Fh, first_variation_F,
                                      inner_grid_oracle, stored_energy_h, strain_summary)
from traction_gap.loads import LoadSystem, classify_compatibility, inf_F_status, load_norm2
from traction_gap.mesh import AffineField, displacement_gradient, l2_inner, strain_field
from traction_gap.rigid import project_rigid, remove_rigid, rigid_basis
from traction_gap.solvers import (DescentSettings, gamma_sweep, minimize_F, minimize_Fh,
                                  solve_linear_elasticity)

# min over a of int V0(A - (a (x) a - |a|^2 I)/2) on the unit cube, mu = lambda = 1,
# A = -(e1 e1 + e3 e3)/2 - e2 e2; obtained offline by exhaustive search and
# confirmed symbolically from the stationarity equations.
NONCONVEX_MIDPOINT = 7.0 / 4.0
K_GUARD = DescentSettings().guard_factor


@pytest.fixture
def verdict(request):
    def record(number, name, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {name} ({detail})"
        request.config.acceptance_lines.append(line)
        print(line)
        return passed
    return record


def _scale(mesh, m, ls, v):
    elastic, _, _ = strain_summary(mesh, m, v)
    return max(1.0, elastic, abs(eval_E(mesh, m, ls, v)))


def test_c01_closed_form_matches_inner_minimization(mesh8, mat, tension, rng, verdict):
    worst, worst_grid = 0.0, 0.0
    for k in range(100):
        v = random_field(rng, mesh8, shrink=1.0)
        closed = eval_F_closed(mesh8, mat, tension, v)
        inner = eval_F(mesh8, mat, tension, v)
        worst = max(worst, abs(closed.total - inner.total) / _scale(mesh8, mat, tension, v))
        if k < 10:
            _, Ebar, vol = strain_summary(mesh8, mat, v)
            _, grid_val = inner_grid_oracle(mat, Ebar, points=10_000, refinements=0)
            # the grid minimum is an upper bound within one grid cell of the true one
            gap = vol * grid_val - closed.correction
            worst_grid = max(worst_grid, gap / _scale(mesh8, mat, tension, v))
            assert gap >= -1e-12
    ok = worst <= 1e-10 and worst_grid <= 1e-6
    verdict(1, "closed form = inner minimization", ok, f"max rel {worst:.2e}, grid gap {worst_grid:.2e}")
    assert worst <= 1e-10
    assert worst_grid <= 1e-6


def test_c02_gap_identity(mesh8, mat, tension, verdict):
    v = AffineField(-np.eye(2))  # W^2 x / 2 with w^2 = 2
    bd = eval_F(mesh8, mat, tension, v)
    L = bd.load_work
    ok = (abs(bd.total - 2.0) <= 1e-10 and abs(-L - 2.0) <= 1e-10
          and abs(bd.linear_energy - 18.0) <= 1e-10 and bd.total < bd.linear_energy)
    verdict(2, "gap identity F = -L = 2 < E = 18", ok, f"F={bd.total!r}, -L={-L!r}, E={bd.linear_energy!r}")
    assert ok


def test_c03_minimum_coincidence_under_tension(mesh8, mat, tension, verdict):
    lin = solve_linear_elasticity(mesh8, mat, tension)
    mf = minimize_F(mesh8, mat, tension)
    rel = abs(mf.value - lin.value) / abs(lin.value)
    strain_err = float(np.abs(displacement_gradient(mesh8, lin.field) - np.eye(2) / 16).max())
    ok = rel <= 1e-8 and abs(lin.value + 1 / 16) <= 1e-8 / 16 and strain_err <= 1e-12
    verdict(3, "min F = min E = -1/16", ok, f"min F={mf.value!r}, min E={lin.value!r}, strain err {strain_err:.1e}")
    assert ok


def test_c04_gamma_sweep_convergence(mesh8, mat, tension, verdict):
    t0 = time.perf_counter()
    sweep = gamma_sweep(mesh8, mat, tension, [1e-1, 1e-2, 1e-3, 1e-4], seed=0)
    elapsed = time.perf_counter() - t0
    errs = [s.energy_error for s in sweep.steps]
    sq = [s.sqrt_h_grad_l2 for s in sweep.steps]
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    final_rel = errs[-1] / abs(sweep.min_E)
    ratios = [b / a for a, b in zip(sq, sq[1:])]  # one decade apart
    ok = decreasing and final_rel <= 1e-2 and max(ratios) <= 0.5 and elapsed <= 60
    verdict(4, "F_h sweep converges", ok,
            f"errors {[f'{e:.2e}' for e in errs]}, sqrt(h) ratios {[f'{r:.3f}' for r in ratios]}, {elapsed:.1f}s")
    assert ok


def test_c05_nonconvexity_in_3d(verdict):
    rep = demo_nonconvexity()
    v1, v2, mid = rep.values["F_v1"], rep.values["F_v2"], rep.values["F_midpoint"]
    grid_rel = abs(rep.values["F_midpoint_grid"] - mid) / mid
    ok = (abs(v1) <= 1e-10 and abs(v2) <= 1e-10 and mid >= NONCONVEX_MIDPOINT * (1 - 1e-6)
          and abs(mid - NONCONVEX_MIDPOINT) <= 1e-6 * NONCONVEX_MIDPOINT and grid_rel <= 1e-6 and rep.passed)
    verdict(5, "3D nonconvexity witness", ok,
            f"F(v1)={v1:.1e}, F(v2)={v2:.1e}, F(mid)={mid!r} vs frozen 7/4, grid rel {grid_rel:.1e}")
    assert ok


def test_c06_compression_blow_up(mesh8, mat, verdict):
    ls = LoadSystem.normal(-1.0)
    cls = classify_compatibility(ls, mesh8)
    status = inf_F_status(cls, math.nan)
    worst_rel, worst_el = 0.0, 0.0
    for k in range(1, 21):
        h = 2.0 ** -k
        v = compression_field(mesh8, h, 1.0)
        Fh = eval_Fh(mesh8, mat, ls, h, v)
        exact = -(-1.0 / (2 * h)) * (-2.0) * mesh8.volume  # -(f0/2h) Tr W^2 |Omega|
        worst_rel = max(worst_rel, abs(Fh - exact) / abs(exact))
        worst_el = max(worst_el, abs(stored_energy_h(mesh8, mat, h, v)))
    ok = worst_rel <= 1e-10 and worst_el <= 1e-12 and cls.kind == "violated" and status.kind == "minus_infinity"
    verdict(6, "compression unbounded below", ok,
            f"class {cls.kind}, inf {status.kind}, formula rel {worst_rel:.1e}, elastic {worst_el:.1e}")
    assert ok


def test_c07_first_variation(mesh8, mat, tension, rng, verdict):
    worst = 0.0
    eps = 1e-4
    for _ in range(20):
        v = random_field(rng, mesh8, shrink=1.0)
        phi = rng.standard_normal(v.shape)
        fd = (eval_F(mesh8, mat, tension, v + eps * phi).total
              - eval_F(mesh8, mat, tension, v - eps * phi).total) / (2 * eps)
        an = first_variation_F(mesh8, mat, tension, v, phi)
        worst = max(worst, abs(fd - an) / max(abs(an), 1.0))
    verdict(7, "first variation of F", worst <= 1e-6, f"max rel error {worst:.1e}")
    assert worst <= 1e-6


def test_c08_convexity_sampling_and_regularization(mesh8, mat, tension, rng, verdict):
    worst = -math.inf
    for _ in range(200):
        v1 = random_field(rng, mesh8, shrink=1.0)
        v2 = random_field(rng, mesh8, shrink=1.0)
        F1 = eval_F_closed(mesh8, mat, tension, v1).total
        F2 = eval_F_closed(mesh8, mat, tension, v2).total
        Fm = eval_F_closed(mesh8, mat, tension, 0.5 * (v1 + v2)).total
        scale = max(1.0, abs(F1), abs(F2))
        worst = max(worst, (Fm - 0.5 * (F1 + F2)) / scale)
    eps_list = [1.0, 1e-1, 1e-2, 1e-3, 1e-4]
    regular_ok = True
    for shrink in (0.0, 1.0, 3.0):
        v = random_field(rng, mesh8, shrink=shrink)
        F = eval_F_closed(mesh8, mat, tension, v).total
        vals = [eval_F_eps(e, mesh8, mat, tension, v) for e in eps_list]
        below = all(x <= F + 1e-12 * max(1.0, abs(F)) for x in vals)
        monotone = all(b >= a - 1e-12 * max(1.0, abs(F)) for a, b in zip(vals, vals[1:]))
        regular_ok &= below and monotone and abs(F - vals[-1]) <= 1e-3 * max(1.0, abs(F))
    ok = worst <= 1e-9 and regular_ok
    verdict(8, "2D convexity and F_eps below F", ok, f"max midpoint violation {worst:.1e}, F_eps ok {regular_ok}")
    assert ok


def test_c09_weak_compatibility(mesh8, mat, verdict):
    ls = LoadSystem.linear_body([[1.0, 0.0], [0.0, -1.0]])
    cls = classify_compatibility(ls, mesh8)
    v0 = solve_linear_elasticity(mesh8, mat, ls).field
    vals = [eval_F(mesh8, mat, ls, v0 - t * mesh8.nodes).total for t in (0.0, 1.0, 5.0)]
    scale = max(1.0, max(abs(x) for x in vals))
    spread = (max(vals) - min(vals)) / scale
    ok = spread <= 1e-9 and cls.kind == "weak"
    verdict(9, "weak compatibility flat direction", ok, f"class {cls.kind}, spread {spread:.1e}")
    assert ok


def test_c10_noncompact_sequence(mesh8, verdict):
    m = Material(1.0, 0.0)
    W = SkewParam.scalar(1.0).matrix()
    hs = [1e-1, 1e-2, 1e-3, 1e-4]
    worst, grads = 0.0, []
    for h in hs:
        z = AffineField(h ** -0.3 * W)
        Fh = eval_Fh(mesh8, m, LoadSystem.zero(), h, z)
        exact = h ** 0.8 * 2 * mesh8.volume
        worst = max(worst, abs(Fh - exact) / exact)
        grads.append(math.sqrt(float(mesh8.areas @ np.sum(displacement_gradient(mesh8, z) ** 2, axis=(1, 2)))))
    growth = [math.log(b / a) / math.log(h1 / h0) for (a, h0), (b, h1) in zip(zip(grads, hs), zip(grads[1:], hs[1:]))]
    ok = worst <= 1e-12 and all(abs(g + 0.3) <= 1e-12 for g in growth)
    verdict(10, "noncompact sequence", ok, f"max rel {worst:.1e}, gradient exponents {[round(g, 12) for g in growth]}")
    assert ok


def test_c11_rigid_projection(mesh8, mat, rng, verdict):
    worst = 0.0
    basis = rigid_basis(mesh8)
    for _ in range(50):
        v = rng.standard_normal((mesh8.n_nodes, 2))
        Pv = project_rigid(mesh8, v)
        r = remove_rigid(mesh8, v)
        worst = max(worst,
                    float(np.abs(project_rigid(mesh8, Pv) - Pv).max()),
                    float(np.abs(strain_field(mesh8, r) - strain_field(mesh8, v)).max()),
                    *(abs(l2_inner(mesh8, r, b)) for b in basis))
    verdict(11, "rigid projection properties", worst <= 1e-12, f"max defect {worst:.1e}")
    assert worst <= 1e-12


def test_c12_uniform_lower_bound(mesh8, mat, verdict):
    hs = [1e-1, 1e-2, 1e-3, 1e-4]
    loads = {
        "tension": LoadSystem.normal(1.0),
        "tension_x3": LoadSystem.normal(3.0),
        "body_strict": LoadSystem.linear_body([[1.0, 0.5], [0.5, 2.0]]),
        "weak": LoadSystem.linear_body([[1.0, 0.0], [0.0, -1.0]]),
    }
    records, limits = [], {}
    for name, ls in loads.items():
        norm2 = load_norm2(ls, mesh8)
        lin = solve_linear_elasticity(mesh8, mat, ls)
        limits[name] = -lin.value / norm2  # h-independent ceiling for -F_h / norm2
        for h in hs:
            rep = minimize_Fh(mesh8, mat, ls, h, init=lin.field)
            records.append((name, h, min(rep.history), norm2))
    k_obs = max(-F / n2 for _, _, F, n2 in records)
    below = [r for r in records if r[2] < -k_obs * r[3] * (1 + 1e-12)]
    # F_h may dip below min E by O(h^2) (weak load), so the linear ceiling is only approximate
    excess = max(-F / n2 - limits[name] for name, _, F, n2 in records)
    settles = True
    for name in loads:
        ks = [-F / n2 for nm, _, F, n2 in records if nm == name]
        steps = [abs(b - a) for a, b in zip(ks, ks[1:])]
        settles &= all(b < a for a, b in zip(steps, steps[1:]))
    ok = not below and k_obs <= 10 * K_GUARD and excess <= 1e-3 * k_obs and settles
    verdict(12, "uniform lower bound", ok, f"K_obs={k_obs:.6g} over {len(records)} runs, excess over -min E/norm {excess:.1e}, settles {settles}")
    assert ok
