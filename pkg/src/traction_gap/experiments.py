"""Scenario configuration and the demo catalog.

A scenario is a flat ``key = value`` text file with dotted keys. Keys that a
config omits fall back to the defaults of its demo, so ``demo = gap`` alone is
a complete config. See README.md for the key reference.
"""
from __future__ import annotations

import logging
import math
import platform
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .algebra import SkewParam, frob, sym
from .constitutive import Material, v0_quadratic
from .functionals import (eval_E, eval_F, eval_F_closed, eval_Fh, inner_grid_oracle, inner_minimize,
                          stored_energy_h)
from .loads import (LoadSystem, check_equilibrated, classify_compatibility, eval_load_work, inf_F_status,
                    load_norm2, resultant_matrix)
from .mesh import AffineField, BoxDomain3, displacement_gradient, generate_mesh, normalize_frame
from .solvers import DIVERGED, DescentSettings, SolverError, gamma_sweep, minimize_F, minimize_Fh, \
    solve_linear_elasticity

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEMOS = ("gap", "tension", "weak_compat", "compression", "noncompact", "nonconvexity3d", "gamma_sweep",
         "nonlocality")
DOMAIN_KINDS = ("unit_square", "rectangle", "box3")

DEFAULT_TOLERANCES = {
    "identity_rel": 1e-10,
    "min_coincidence_rel": 1e-8,
    "homogeneous_abs": 1e-12,
    "sweep_final_rel": 1e-2,
    "sqrt_h_decade_ratio": 0.5,
    "weak_flat_rel": 1e-9,
    "noncompact_rel": 1e-12,
    "compression_rel": 1e-10,
    "elastic_abs": 1e-12,
    "zero_abs": 1e-10,
    "oracle_rel": 1e-6,
    "w_opt_abs": 1e-6,
    "nonlocal_margin_rel": 1e-6,
}

_COMMON = {
    "domain.kind": "unit_square", "domain.n": "8", "domain.width": "1", "domain.height": "1",
    "domain.half_widths": "0.5 0.5 0.5",
    "material.mu": "1", "material.lambda": "1",
    "traction.kind": "zero", "traction.coefficient": "0",
    "body.kind": "zero",
    "seed": "0",
}
_SWEEP_H = "1e-1 1e-2 1e-3 1e-4"

DEMO_DEFAULTS = {
    "gap": {"traction.kind": "normal_scaled", "traction.coefficient": "1", "gap.w2": "2"},
    "tension": {"traction.kind": "normal_scaled", "traction.coefficient": "1", "h_list": _SWEEP_H},
    "gamma_sweep": {"traction.kind": "normal_scaled", "traction.coefficient": "1", "h_list": _SWEEP_H},
    "weak_compat": {"body.kind": "linear", "body.matrix": "1 0 0 -1", "weak.t_values": "0 1 5"},
    "compression": {"traction.kind": "normal_scaled", "traction.coefficient": "-1",
                    "h_list": " ".join(f"{2.0 ** -k!r}" for k in range(2, 18, 2)),
                    "compression.w": "1", "descent.max_iter": "2000"},
    "noncompact": {"material.lambda": "0", "h_list": _SWEEP_H, "noncompact.alpha": "0.3", "noncompact.w": "1"},
    "nonconvexity3d": {"domain.kind": "box3", "oracle.refinements": "3"},
    "nonlocality": {},
}

_STRING_KEYS = {"name", "demo", "domain.kind", "traction.kind", "body.kind"}
_INT_KEYS = {"domain.n", "seed", "descent.max_iter", "descent.memory", "oracle.refinements"}
_LIST_KEYS = {"domain.half_widths", "traction.values", "body.matrix", "body.values", "h_list", "weak.t_values"}
_FLOAT_KEYS = {"domain.width", "domain.height", "material.mu", "material.lambda", "traction.coefficient",
               "gap.w2", "compression.w", "noncompact.alpha", "noncompact.w", "descent.det_floor",
               "descent.tol_g", "descent.backtrack", "descent.armijo", "descent.guard_factor"}
KNOWN_KEYS = _STRING_KEYS | _INT_KEYS | _LIST_KEYS | _FLOAT_KEYS


class ConfigError(ValueError):
    """Invalid scenario configuration (unknown key, bad value, inconsistent demo/domain)."""


@dataclass(frozen=True)
class Scenario:
    name: str
    demo: str
    values: dict  # parsed dotted keys, defaults filled in
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def seed(self) -> int:
        return int(self.values.get("seed", 0))

    @property
    def material(self) -> Material:
        return Material(self.values["material.mu"], self.values["material.lambda"])

    @property
    def h_list(self) -> list[float]:
        return list(self.values.get("h_list", []))

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, values={**self.values, "seed": int(seed)})

    def echo(self) -> dict:
        out = {"name": self.name, "demo": self.demo}
        out.update({k: v for k, v in sorted(self.values.items())})
        out["tolerances"] = dict(sorted(self.tolerances.items()))
        return out

    def descent_settings(self) -> DescentSettings:
        kw = {k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith("descent.")}
        return DescentSettings(**kw)


# --- parsing ---------------------------------------------------------------

def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _STRING_KEYS:
            return raw
        if key in _INT_KEYS:
            val = int(raw)
            if val < 0:
                raise ValueError("must be nonnegative")
            return val
        if key in _LIST_KEYS:
            return [float(tok) for tok in raw.replace(",", " ").split()]
        val = float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None
    if not math.isfinite(val):
        raise ConfigError(f"{key!r} must be finite, got {raw!r}")
    return val


def parse_config_text(text: str) -> dict[str, str]:
    """Raw ``key -> string`` map; ``#`` starts a comment."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def scenario_from_mapping(raw: dict[str, str]) -> Scenario:
    raw = dict(raw)
    demo = raw.get("demo")
    if demo not in DEMOS:
        raise ConfigError(f"'demo' must be one of {DEMOS}, got {demo!r}")
    tolerances = dict(DEFAULT_TOLERANCES)
    for key in [k for k in raw if k.startswith("tol.")]:
        name = key[4:]
        if name not in tolerances:
            raise ConfigError(f"unknown tolerance {key!r}; known: {sorted(tolerances)}")
        tol = _parse_value(key, raw.pop(key))
        if not tol > 0:
            raise ConfigError(f"{key!r} must be positive")
        tolerances[name] = tol
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    merged = {**_COMMON, **DEMO_DEFAULTS[demo], **raw}
    values = {k: _parse_value(k, v) for k, v in merged.items() if k not in ("name", "demo")}
    sc = Scenario(name=raw.get("name", demo), demo=demo, values=values, tolerances=tolerances)
    _validate(sc)
    return sc


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return scenario_from_mapping(parse_config_text(text))


def default_scenario(demo: str) -> Scenario:
    return scenario_from_mapping({"demo": demo})


def _validate(sc: Scenario) -> None:
    v = sc.values
    kind = v["domain.kind"]
    if kind not in DOMAIN_KINDS:
        raise ConfigError(f"domain.kind must be one of {DOMAIN_KINDS}, got {kind!r}")
    if (sc.demo == "nonconvexity3d") != (kind == "box3"):
        raise ConfigError(f"demo {sc.demo!r} is inconsistent with domain.kind {kind!r} "
                          "(nonconvexity3d needs box3, every other demo a 2D mesh)")
    if v["domain.n"] < 1:
        raise ConfigError("domain.n must be at least 1")
    if sc.demo == "nonlocality" and v["domain.n"] % 2:
        raise ConfigError("nonlocality splits the square at x1 = 0 and needs an even domain.n")
    if len(v["domain.half_widths"]) != 3 or min(v["domain.half_widths"]) <= 0:
        raise ConfigError("domain.half_widths needs three positive numbers")
    try:
        sc.material
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    h = sc.h_list
    if sc.demo in ("tension", "gamma_sweep", "compression", "noncompact"):
        if not h:
            raise ConfigError(f"demo {sc.demo!r} needs a nonempty h_list")
        if min(h) <= 0 or any(b >= a for a, b in zip(h, h[1:])):
            raise ConfigError("h_list must be positive and strictly decreasing")
    if sc.demo == "compression" and not 0 < v["compression.w"] < 2:
        raise ConfigError("compression.w must lie in (0, 2)")
    if "body.matrix" in v and v["body.kind"] == "linear":
        dim = 3 if kind == "box3" else 2
        if len(v["body.matrix"]) != dim * dim:
            raise ConfigError(f"body.matrix needs {dim * dim} entries for a {dim}D domain")
    try:
        build_loads(sc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        sc.descent_settings()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def build_domain(sc: Scenario):
    v = sc.values
    kind = v["domain.kind"]
    if kind == "box3":
        return BoxDomain3(tuple(v["domain.half_widths"]))
    if kind == "unit_square":
        return normalize_frame(generate_mesh("unit_square", v["domain.n"]))
    return normalize_frame(generate_mesh("rectangle", v["domain.n"], v["domain.width"], v["domain.height"]))


def build_loads(sc: Scenario) -> LoadSystem:
    v = sc.values
    dim = 3 if v["domain.kind"] == "box3" else 2
    trac_vals = v.get("traction.values")
    body_mat = v.get("body.matrix")
    body_vals = v.get("body.values")
    return LoadSystem(
        traction_kind=v["traction.kind"],
        traction_coefficient=v["traction.coefficient"],
        traction_values=None if trac_vals is None else np.reshape(trac_vals, (-1, 2)),
        body_kind=v["body.kind"],
        body_matrix=None if body_mat is None else np.reshape(body_mat, (dim, -1)),
        body_values=None if body_vals is None else np.reshape(body_vals, (-1, 2)),
    )


# --- reports ---------------------------------------------------------------

@dataclass
class Check:
    """One numeric claim with the tolerance it was checked against."""

    name: str
    value: float
    reference: float | None
    tolerance: float | None
    relation: str  # "rel<=", "abs<=", ">", "<", "==" (string verdicts), "decreasing", ...
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def check_close(name: str, value: float, reference: float, tol: float, relative: bool = True) -> Check:
    err = abs(value - reference)
    if relative:
        err /= max(abs(reference), 1.0)
    return Check(name, value, reference, tol, "rel<=" if relative else "abs<=", bool(err <= tol))


def check_abs(name: str, value: float, tol: float) -> Check:
    return Check(name, value, 0.0, tol, "abs<=", bool(abs(value) <= tol))


def check_greater(name: str, value: float, bound: float) -> Check:
    return Check(name, value, bound, None, ">", bool(value > bound))


def check_label(name: str, value: str, expected: str) -> Check:
    return Check(name, value, expected, None, "==", value == expected)


@dataclass
class Report:
    scenario: dict
    demo: str
    steps: list = field(default_factory=list)  # {"h", "status", "metrics": {...}}
    checks: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    metric_tolerances: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "scenario": self.scenario,
            "demo": self.demo,
            "passed": self.passed,
            "verdicts": self.verdicts,
            "checks": [c.to_dict() for c in self.checks],
            "values": self.values,
            "steps": self.steps,
            "metric_tolerances": self.metric_tolerances,
            "provenance": self.provenance,
        }


def _provenance(sc: Scenario | None, settings: DescentSettings | None = None) -> dict:
    out = {
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    if sc is not None:
        out["tolerances"] = dict(sorted(sc.tolerances.items()))
    if settings is not None:
        out["descent"] = settings.to_dict()
    return out


COMPAT_LABELS = {"strict": "StrictlyCompatible", "weak": "WeaklyCompatible", "violated": "Violated"}
INF_LABELS = {"finite": "Finite", "minus_infinity": "MinusInfinity"}


def _sweep_steps(sweep) -> list:
    steps = []
    for s in sweep.steps:
        d = s.to_dict()
        steps.append({"h": d.pop("h"), "status": d.pop("status"), "metrics": d})
    return steps


def _sweep_checks(sc: Scenario, sweep, sweep_norm2: float) -> list:
    tol = sc.tolerances
    errs = [s.energy_error for s in sweep.steps]
    sq = [s.sqrt_h_grad_l2 for s in sweep.steps]
    hs = [s.h for s in sweep.steps]
    checks = [
        Check("energy_error_strictly_decreasing", errs[-1], None, None, "decreasing",
              all(b < a for a, b in zip(errs, errs[1:]))),
        Check("energy_error_final_rel", errs[-1] / max(abs(sweep.min_E), 1e-300), 0.0,
              tol["sweep_final_rel"], "abs<=", errs[-1] <= tol["sweep_final_rel"] * abs(sweep.min_E)),
        Check("sqrt_h_grad_decreasing", sq[-1], None, None, "decreasing", all(b < a for a, b in zip(sq, sq[1:]))),
        Check("uniform_lower_bound", min(s.Fh for s in sweep.steps), -sweep.k_obs * sweep_norm2, None, ">=",
              min(s.Fh for s in sweep.steps) >= -sweep.k_obs * sweep_norm2 * (1 + 1e-12)),
        Check("k_obs_below_guard", sweep.k_obs, 10 * sweep.settings["guard_factor"], None, "<=",
              sweep.k_obs <= 10 * sweep.settings["guard_factor"]),
    ]
    worst = 0.0
    for (h0, a), (h1, b) in zip(zip(hs, sq), zip(hs[1:], sq[1:])):
        decades = math.log10(h0 / h1)
        worst = max(worst, (b / a) ** (1.0 / decades))
    checks.append(Check("sqrt_h_grad_ratio_per_decade", worst, 0.0, tol["sqrt_h_decade_ratio"], "<=",
                        worst <= tol["sqrt_h_decade_ratio"]))
    checks.append(Check("sweep_runs_converged", sum(s.status != DIVERGED for s in sweep.steps), len(sweep.steps),
                        None, "==", all(s.status != DIVERGED for s in sweep.steps)))
    return checks


# --- demos -----------------------------------------------------------------

def demo_gap(sc: Scenario) -> Report:
    mesh, m, ls = build_domain(sc), sc.material, build_loads(sc)
    w = math.sqrt(sc.get("gap.w2"))
    p = SkewParam.scalar(w)
    v = AffineField(0.5 * p.square())
    bd = eval_F(mesh, m, ls, v)
    closed = eval_F_closed(mesh, m, ls, v)
    T = resultant_matrix(ls, mesh)
    L = float(frob(0.5 * p.square(), T))  # L(M x) = <M, T>
    E_ref = v0_quadratic(m, 0.5 * p.square()) * mesh.volume - L
    tol = sc.tolerances["identity_rel"]
    rep = Report(sc.echo(), sc.demo, provenance=_provenance(sc))
    rep.checks += [
        check_close("F_equals_minus_L", bd.total, -L, tol),
        check_close("E_value", bd.linear_energy, E_ref, tol),
        check_close("closed_form_equals_inner", closed.total, bd.total, tol),
        check_greater("gap_E_minus_F", bd.linear_energy - bd.total, 0.0),
    ]
    cls = classify_compatibility(ls, mesh)
    rep.verdicts = {"compatibility": COMPAT_LABELS[cls.kind], "gap_positive": bd.linear_energy > bd.total}
    rep.values = {"F": bd.total, "E": bd.linear_energy, "L": L, "gap": bd.linear_energy - bd.total,
                  "w_opt": bd.w_opt.to_list(), "breakdown": bd.to_dict(), "compatibility": cls.to_dict()}
    return rep


def _min_coincidence(sc: Scenario, mesh, m, ls, rep: Report):
    cls = classify_compatibility(ls, mesh)
    lin = solve_linear_elasticity(mesh, m, ls)
    mf = minimize_F(mesh, m, ls, compatibility=cls)
    tol = sc.tolerances["min_coincidence_rel"]
    rep.checks += [
        check_label("compatibility", COMPAT_LABELS[cls.kind], "StrictlyCompatible"),
        check_close("min_F_equals_min_E", mf.value, lin.value, tol),
        check_abs("w_opt_at_minimizer", mf.breakdown.w_opt.norm, sc.tolerances["w_opt_abs"]),
    ]
    if ls.traction_kind == "normal_scaled" and ls.body_kind == "zero":
        # homogeneous solution e I with DV0(e I) = f0 I
        e = ls.traction_coefficient / (8.0 * (m.mu + m.lam))
        ref = -ls.traction_coefficient ** 2 * mesh.volume / (8.0 * (m.mu + m.lam))
        grads = displacement_gradient(mesh, lin.field)
        rep.checks += [
            check_close("min_E_homogeneous", lin.value, ref, tol),
            check_abs("homogeneous_strain_error", float(np.abs(grads - e * np.eye(2)).max()),
                      sc.tolerances["homogeneous_abs"]),
        ]
    status = inf_F_status(cls, lin.value)
    coincide = rep.check("min_F_equals_min_E").passed
    rep.verdicts.update({"compatibility": COMPAT_LABELS[cls.kind], "inf_F": INF_LABELS[status.kind],
                         "min_coincidence": "min F = min E" if coincide else "min F != min E"})
    rep.values.update({"min_F": mf.value, "min_E": lin.value, "min_F_iterations": mf.iterations,
                       "compatibility": cls.to_dict()})
    return lin


def demo_tension(sc: Scenario) -> Report:
    mesh, m, ls = build_domain(sc), sc.material, build_loads(sc)
    settings = sc.descent_settings()
    rep = Report(sc.echo(), sc.demo, provenance=_provenance(sc, settings))
    _min_coincidence(sc, mesh, m, ls, rep)
    _attach_sweep(sc, mesh, m, ls, settings, rep)
    return rep


def demo_gamma_sweep(sc: Scenario) -> Report:
    mesh, m, ls = build_domain(sc), sc.material, build_loads(sc)
    settings = sc.descent_settings()
    rep = Report(sc.echo(), sc.demo, provenance=_provenance(sc, settings))
    cls = classify_compatibility(ls, mesh)
    rep.checks.append(check_label("compatibility", COMPAT_LABELS[cls.kind], "StrictlyCompatible"))
    rep.verdicts["compatibility"] = COMPAT_LABELS[cls.kind]
    if cls.kind == "strict":
        _attach_sweep(sc, mesh, m, ls, settings, rep)
    return rep


def _attach_sweep(sc, mesh, m, ls, settings, rep: Report):
    sweep = gamma_sweep(mesh, m, ls, sc.h_list, seed=sc.seed, settings=settings)
    rep.steps = _sweep_steps(sweep)
    rep.checks += _sweep_checks(sc, sweep, load_norm2(ls, mesh))
    rep.metric_tolerances = {"energy_error": sc.tolerances["sweep_final_rel"] * abs(sweep.min_E),
                             "grad_error_l1": None, "sqrt_h_grad_l2": None, "strain_error_l2": None,
                             "Fh": None, "iterations": None}
    diverged = any(s.status == DIVERGED for s in sweep.steps)
    rep.verdicts["sweep"] = "Diverged" if diverged else "Converged"
    rep.values.update({"sweep_min_E": sweep.min_E, "k_obs": sweep.k_obs,
                       "lower_bound": -sweep.k_obs * load_norm2(ls, mesh), "load_norm2": load_norm2(ls, mesh)})


def demo_weak_compat(sc: Scenario) -> Report:
    mesh, m, ls = build_domain(sc), sc.material, build_loads(sc)
    rep = Report(sc.echo(), sc.demo, provenance=_provenance(sc))
    cls = classify_compatibility(ls, mesh)
    lin = solve_linear_elasticity(mesh, m, ls)
    mf = minimize_F(mesh, m, ls, compatibility=cls)
    scale = max(abs(lin.value), 1.0)
    ts = sc.get("weak.t_values")
    Fs, Es = [], []
    for t in ts:
        v = lin.field - t * mesh.nodes  # v0 - t x
        Fs.append(eval_F(mesh, m, ls, v).total)
        Es.append(eval_E(mesh, m, ls, v))
    spread = max(Fs) - min(Fs)
    tol = sc.tolerances["weak_flat_rel"]
    rep.checks += [
        check_label("compatibility", COMPAT_LABELS[cls.kind], "WeaklyCompatible"),
        Check("F_flat_along_minus_x", spread / scale, 0.0, tol, "abs<=", spread <= tol * scale),
        check_close("F_equals_min_E", Fs[0], lin.value, tol),
        check_close("min_F_equals_min_E", mf.value, lin.value, sc.tolerances["min_coincidence_rel"]),
    ]
    # the shifted fields minimize F but not E: argmin F is strictly larger
    for t, E in zip(ts, Es):
        if t != 0:
            rep.checks.append(check_greater(f"E_excess_t={t:g}", E - lin.value, 0.0))
    rep.verdicts = {"compatibility": COMPAT_LABELS[cls.kind], "inf_F": INF_LABELS[inf_F_status(cls, lin.value).kind],
                    "extra_minimizers": all(E > lin.value for t, E in zip(ts, Es) if t != 0)}
    rep.values = {"t_values": ts, "F_values": Fs, "E_values": Es, "min_E": lin.value, "min_F": mf.value,
                  "compatibility": cls.to_dict()}
    return rep


def compression_field(mesh, h: float, w: float) -> np.ndarray:
    """v = h^-1 (R - I) x with R the rotation of angle theta, 1 - cos(theta) = w^2 / 2.

    Then Tr(R - I) = Tr W^2 / 2 and I + h grad v = R is stress free.
    """
    theta = math.acos(1.0 - 0.5 * w * w)
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return mesh.nodes @ (R - np.eye(2)).T / h


def demo_compression(sc: Scenario) -> Report:
    mesh, m, ls = build_domain(sc), sc.material, build_loads(sc)
    settings = sc.descent_settings()
    rep = Report(sc.echo(), sc.demo, provenance=_provenance(sc, settings))
    cls = classify_compatibility(ls, mesh)
    status = inf_F_status(cls, math.nan)
    mf = minimize_F(mesh, m, ls, compatibility=cls)
    w = sc.get("compression.w")
    f0 = ls.traction_coefficient if ls.traction_kind == "normal_scaled" else math.nan
    trW2 = -2.0 * w * w
    tol_rel, tol_el = sc.tolerances["compression_rel"], sc.tolerances["elastic_abs"]
    worst_rel, worst_el, statuses = 0.0, 0.0, []
    for h in sc.h_list:
        v = compression_field(mesh, h, w)
        Fh = eval_Fh(mesh, m, ls, h, v)
        formula = -(f0 / (2.0 * h)) * trW2 * mesh.volume
        elastic = stored_energy_h(mesh, m, h, v)
        worst_rel = max(worst_rel, abs(Fh - formula) / abs(formula))
        worst_el = max(worst_el, abs(elastic))
        try:
            desc = minimize_Fh(mesh, m, ls, h, init=v, settings=settings)
            d_val, d_status, d_it = desc.value, desc.status, desc.iterations
        except SolverError as exc:
            log.warning("descent at h=%g failed: %s", h, exc)
            d_val, d_status, d_it = math.nan, "error", 0
        statuses.append(d_status)
        rep.steps.append({"h": h, "status": d_status, "metrics": {
            "Fh_sequence": Fh, "Fh_formula": formula, "elastic_term": elastic,
            "Fh_descent": d_val, "iterations": d_it}})
    rep.metric_tolerances = {"Fh_sequence": tol_rel, "elastic_term": tol_el}
    rep.checks += [
        check_label("compatibility", COMPAT_LABELS[cls.kind], "Violated"),
        check_label("inf_F", INF_LABELS[status.kind], "MinusInfinity"),
        check_label("minimize_F_status", mf.status, DIVERGED),
        Check("sequence_matches_formula", worst_rel, 0.0, tol_rel, "abs<=", worst_rel <= tol_rel),
        check_abs("elastic_term", worst_el, tol_el),
    ]
    # energy along the sequence is unbounded below: it scales like 1/h
    seq = [s["metrics"]["Fh_sequence"] for s in rep.steps]
    rep.checks.append(Check("sequence_unbounded", seq[-1], seq[0], None, "decreasing",
                            all(b < a for a, b in zip(seq, seq[1:]))))
    rep.verdicts = {"compatibility": COMPAT_LABELS[cls.kind], "inf_F": INF_LABELS[status.kind],
                    "sweep": "Diverged" if DIVERGED in statuses else "Unbounded"}
    rep.values = {"witness": None if status.witness is None else status.witness.to_list(),
                  "compatibility": cls.to_dict(), "guard_bound": -10 * settings.guard_factor * load_norm2(ls, mesh)}
    return rep


def demo_noncompact(sc: Scenario) -> Report:
    mesh, m, ls = build_domain(sc), sc.material, build_loads(sc)
    rep = Report(sc.echo(), sc.demo, provenance=_provenance(sc))
    alpha, w = sc.get("noncompact.alpha"), sc.get("noncompact.w")
    W = SkewParam.scalar(w).matrix()
    tol = sc.tolerances["noncompact_rel"]
    worst, grads = 0.0, []
    for h in sc.h_list:
        z = AffineField(h ** -alpha * W)
        Fh = eval_Fh(mesh, m, ls, h, z)
        # C - I = h^(2-2a) W^T W = h^(2-2a) w^2 I, so W(C) = (2 mu + 2 lambda) h^(4-4a) w^4
        formula = h ** (2 - 4 * alpha) * w ** 4 * (2 * m.mu + 2 * m.lam) * mesh.volume - eval_load_work(ls, mesh, z)
        g = math.sqrt(2.0) * w * h ** -alpha * math.sqrt(mesh.volume)  # ||grad z||_L2
        g_num = math.sqrt(float(mesh.areas @ np.sum(displacement_gradient(mesh, z) ** 2, axis=(1, 2))))
        worst = max(worst, abs(Fh - formula) / max(abs(formula), 1e-300))
        grads.append(g_num)
        rep.steps.append({"h": h, "status": "evaluated", "metrics": {
            "Fh": Fh, "Fh_formula": formula, "grad_l2": g_num, "grad_formula": g}})
    rep.metric_tolerances = {"Fh": tol}
    hs = sc.h_list
    slope = math.log(grads[-1] / grads[0]) / math.log(hs[-1] / hs[0]) if len(hs) > 1 else -alpha
    rep.checks += [
        Check("Fh_matches_closed_form", worst, 0.0, tol, "abs<=", worst <= tol),
        check_close("grad_growth_exponent", slope, -alpha, 1e-10, relative=False),
        Check("grad_unbounded", grads[-1], grads[0], None, "increasing", all(b > a for a, b in zip(grads, grads[1:]))),
    ]
    rep.verdicts = {"energy_to_zero": all(b["metrics"]["Fh"] < a["metrics"]["Fh"]
                                          for a, b in zip(rep.steps, rep.steps[1:])),
                    "gradient_blows_up": alpha > 0}
    rep.values = {"alpha": alpha, "w": w, "grad_exponent": slope}
    return rep


NONCONVEX_AXES = (np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]))


def demo_nonconvexity(material: Material | None = None, box: BoxDomain3 | None = None,
                      tolerances: dict | None = None, refinements: int = 3, scenario: dict | None = None) -> Report:
    """F on v_i = W_i^2 x (axes e3, e1) and their midpoint, zero load on a box."""
    m = material or Material(1.0, 1.0)
    box = box or BoxDomain3()
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    ls = LoadSystem.zero()
    rep = Report(scenario or {"demo": "nonconvexity3d", "material": [m.mu, m.lam],
                              "half_widths": list(box.half_widths)}, "nonconvexity3d")
    rep.provenance = _provenance(None)
    rep.provenance["tolerances"] = dict(sorted(tol.items()))
    Wsq = [SkewParam.axis(a).square() for a in NONCONVEX_AXES]
    for i, S in enumerate(Wsq, 1):
        bd = eval_F(box, m, ls, AffineField(S))
        G = 0.5 * bd.w_opt.square()
        rep.checks += [check_abs(f"F_v{i}", bd.total, tol["zero_abs"]),
                       check_abs(f"w_opt_v{i}_realizes_W{i}^2", float(np.abs(G - S).max()), tol["w_opt_abs"])]
        rep.values[f"F_v{i}"] = bd.total
        rep.values[f"w_opt_v{i}"] = bd.w_opt.to_list()
    A = 0.5 * (Wsq[0] + Wsq[1])
    mid = eval_F(box, m, ls, AffineField(A))
    inner = inner_minimize(m, A)
    grid_p, grid_val = inner_grid_oracle(m, A, refinements=refinements)
    elastic = v0_quadratic(m, sym(A)) * box.volume
    grid_F = elastic + box.volume * grid_val
    rel = abs(grid_F - mid.total) / abs(mid.total)
    rep.checks += [
        check_greater("F_midpoint_positive", mid.total, 0.0),
        Check("grid_vs_multistart", rel, 0.0, tol["oracle_rel"], "abs<=", rel <= tol["oracle_rel"]),
        check_greater("convexity_violation", mid.total - 0.5 * (rep.values["F_v1"] + rep.values["F_v2"]), 0.0),
    ]
    rep.verdicts = {"convex": False if rep.check("F_midpoint_positive").passed else None}
    rep.values.update({"midpoint_strain": A.tolist(), "F_midpoint": mid.total, "F_midpoint_grid": grid_F,
                       "w_opt_midpoint": mid.w_opt.to_list(), "grid_point": grid_p.to_list(),
                       "multistart_converged_starts": inner.converged_starts, "grid_refinements": refinements,
                       "margin": mid.total - 0.5 * (rep.values["F_v1"] + rep.values["F_v2"])})
    return rep


def _demo_nonconvexity_scenario(sc: Scenario) -> Report:
    return demo_nonconvexity(sc.material, build_domain(sc), sc.tolerances,
                             refinements=sc.get("oracle.refinements"), scenario=sc.echo())


def nonlocality_field(mesh) -> np.ndarray:
    """v = -x + x1^2 e1: the divergence is not uniform across the two halves."""
    x = mesh.nodes
    v = -x.copy()
    v[:, 0] += x[:, 0] ** 2
    return v


def demo_nonlocality(sc: Scenario) -> Report:
    mesh, m, ls = build_domain(sc), sc.material, build_loads(sc)
    rep = Report(sc.echo(), sc.demo, provenance=_provenance(sc))
    left = mesh.nodes[mesh.triangles].mean(axis=1)[:, 0] < 0
    masks = (left, ~left)
    halves = [(mesh.submesh(k), np.unique(mesh.triangles[k])) for k in masks]
    zero = LoadSystem.zero()

    def split(v):
        # the halves carry no load: superadditivity is a property of the inner minimization
        whole = eval_F(mesh, m, ls, v).total
        return whole, [eval_F(sub, m, zero, v[used]).total for sub, used in halves]

    scale_tol = sc.tolerances["nonlocal_margin_rel"]
    whole, parts = split(nonlocality_field(mesh))
    gap = whole - sum(parts)
    scale = max(abs(whole), 1.0)
    lin_whole, lin_parts = split(-mesh.nodes.copy())
    lin_gap = lin_whole - sum(lin_parts)
    rep.checks += [
        Check("superadditive_gap", gap / scale, 0.0, scale_tol, ">", gap > scale_tol * scale),
        check_abs("uniform_field_additive", lin_gap / max(abs(lin_whole), 1.0), sc.tolerances["identity_rel"]),
    ]
    rep.verdicts = {"local": not rep.check("superadditive_gap").passed}
    rep.values = {"F_whole": whole, "F_left": parts[0], "F_right": parts[1], "gap": gap,
                  "uniform_F_whole": lin_whole, "uniform_F_parts": lin_parts}
    return rep


_DISPATCH = {
    "gap": demo_gap,
    "tension": demo_tension,
    "gamma_sweep": demo_gamma_sweep,
    "weak_compat": demo_weak_compat,
    "compression": demo_compression,
    "noncompact": demo_noncompact,
    "nonconvexity3d": _demo_nonconvexity_scenario,
    "nonlocality": demo_nonlocality,
}


def run_scenario(sc: Scenario) -> Report:
    log.info("running scenario %s (demo %s)", sc.name, sc.demo)
    return _DISPATCH[sc.demo](sc)


def check_loads(sc: Scenario) -> dict:
    """Equilibrium, compatibility class and inf F status of a scenario's load."""
    domain, ls = build_domain(sc), build_loads(sc)
    eq = check_equilibrated(ls, domain)
    out = {"scenario": sc.name, "equilibrium": eq.to_dict()}
    if not eq.equilibrated:
        out["compatibility"] = None
        out["inf_F"] = None
        return out
    cls = classify_compatibility(ls, domain)
    min_E = math.nan
    if cls.kind != "violated" and not isinstance(domain, BoxDomain3):
        min_E = solve_linear_elasticity(domain, sc.material, ls).value
    status = inf_F_status(cls, min_E)
    out["compatibility"] = {**cls.to_dict(), "label": COMPAT_LABELS[cls.kind]}
    out["inf_F"] = {**status.to_dict(), "label": INF_LABELS[status.kind]}
    out["resultant_matrix"] = resultant_matrix(ls, domain).tolist()
    return out
