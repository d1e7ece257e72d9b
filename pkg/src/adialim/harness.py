"""Theorem-verification experiments over sweeps of the adiabatic parameter ``T``.

Each ``run_*`` function takes a :class:`SweepSpec` and returns an
:class:`ExperimentReport` whose verdict follows only from the declared
tolerances in ``spec.tolerances``.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from itertools import product

import numba
import numpy as np
from numpy.polynomial.legendre import leggauss

from . import __version__
from .exceptions import BelowNoiseFloor, DomainError, IntegrationError, InvariantViolation
from .profiles import Case, MassProfile, Space, spectral_projector, weight_matrix
from .propagators import DEFAULT_CONFIG, IntegratorConfig, evolve_batch, wkb_propagator
from .smearing import ModeGrid, TestFunction, bump, grid_for, propagate_grid, weak_limit_error
from .states import (
    adiabatic_limit_closed_form,
    hadamard_family,
    hadamard_remainder,
    kms_defect,
    kms_family,
    smoothing_report,
    vacuum_family,
    validate_hadamard,
)


class Experiment(str, enum.Enum):
    ADIABATIC_RATE = "adiabatic-rate"
    WKB_RATE = "wkb-rate"
    VACUUM_LIMIT = "vacuum-limit"
    KMS_LIMIT = "kms-limit"
    HADAMARD_LIMIT = "hadamard-limit"
    ENERGY_BOUNDS = "energy-bounds"
    INTERTWINING_AUDIT = "intertwining-audit"


LIMIT_EXPERIMENTS = (Experiment.VACUUM_LIMIT, Experiment.KMS_LIMIT, Experiment.HADAMARD_LIMIT)

DEFAULT_TOLERANCES = {
    Experiment.ADIABATIC_RATE: {"slope_target": -1.0, "slope_tol": 0.15, "residual_factor": 100.0},
    Experiment.WKB_RATE: {"slope_target": -1.0, "slope_tol": 0.2, "residual_factor": 100.0},
    Experiment.VACUUM_LIMIT: {"threshold": 1e-2},
    Experiment.KMS_LIMIT: {"threshold": 1e-2, "defect_min": 0.1, "defect_equal_max": 1e-10},
    Experiment.HADAMARD_LIMIT: {"threshold": 1e-2, "smoothing_order": 8},
    Experiment.ENERGY_BOUNDS: {"bound_slack": 1e-6},
    Experiment.INTERTWINING_AUDIT: {"residual_factor": 100.0},
}

DEFAULT_LATTICE = (-1.0, -0.5, 0.0, 0.5, 1.0)

NOISE_FACTOR = 10.0


@dataclass(frozen=True)
class SweepSpec:
    experiment: Experiment
    T_values: tuple
    profile: MassProfile
    grid: ModeGrid
    cfg: IntegratorConfig = DEFAULT_CONFIG
    state_params: dict = field(default_factory=dict)
    test_function: TestFunction = field(default_factory=bump)
    lattice: tuple = DEFAULT_LATTICE
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "experiment", Experiment(self.experiment))
        T = tuple(float(x) for x in self.T_values)
        if len(T) < 4:
            raise InvariantViolation("a sweep needs at least 4 values of T")
        if any(b <= a for a, b in zip(T, T[1:])):
            raise InvariantViolation("T_values must be strictly increasing")
        if T[0] < 1:
            raise InvariantViolation("T values must be >= 1")
        object.__setattr__(self, "T_values", T)
        tol = dict(DEFAULT_TOLERANCES[self.experiment])
        tol.update(self.tolerances)
        object.__setattr__(self, "tolerances", tol)

    def describe(self):
        return {
            "experiment": self.experiment.value,
            "T_values": list(self.T_values),
            "profile": self.profile.describe(),
            "grid": self.grid.describe(),
            "integrator": self.cfg.to_dict(),
            "state": dict(self.state_params),
            "test_function": self.test_function.describe(),
            "lattice": list(self.lattice),
            "tolerances": dict(self.tolerances),
        }


@dataclass
class ExperimentReport:
    experiment: str
    metric_name: str
    rows: list
    fitted_slope: float | None
    slope_ci: float | None
    verdict: str
    checks: dict
    extras: dict
    metadata: dict
    row_details: list = field(default_factory=list)
    run_info: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.verdict.startswith("pass")

    def to_dict(self, include_run_info=True):
        doc = {
            "experiment": self.experiment,
            "metric": self.metric_name,
            "rows": [[T, m] for T, m in self.rows],
            "row_details": self.row_details,
            "fitted_slope": self.fitted_slope,
            "slope_ci": self.slope_ci,
            "verdict": self.verdict,
            "checks": self.checks,
            "extras": self.extras,
            "metadata": self.metadata,
        }
        if include_run_info:
            doc["run_info"] = self.run_info
        return doc

    def to_json(self, include_run_info=True):
        return json.dumps(_jsonable(self.to_dict(include_run_info)), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def rows_csv(self):
        buf = io.StringIO()
        cols = ["T", self.metric_name, "n_nodes", "rel_tol", "max_residual"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for detail in self.row_details:
            w.writerow([repr(detail[c]) for c in cols])
        return buf.getvalue()

    def summary(self):
        lines = [f"experiment: {self.experiment}", f"verdict:    {self.verdict.upper()}"]
        if self.fitted_slope is not None:
            lines.append(f"slope:      {self.fitted_slope:.4f} +/- {self.slope_ci:.4f}")
        lines.append(f"{'T':>10}  {self.metric_name}")
        for T, m in self.rows:
            lines.append(f"{T:>10g}  {m:.6e}")
        lines.append("checks:")
        for name, chk in self.checks.items():
            mark = "ok  " if chk["passed"] else "FAIL"
            lines.append(f"  [{mark}] {name}: {chk['value']} (limit {chk['limit']})")
        for name, value in self.extras.items():
            lines.append(f"  {name}: {value}")
        return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def set_threads(n):
    """Set the worker count for the compiled mode sweeps; returns the count actually used."""
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


# -- rate fitting -----------------------------------------------------------


def fit_rate(rows, noise_floor=0.0):
    """Least-squares slope of ``log metric`` against ``log T``, discarding the smallest ``T``.

    Returns ``(slope, stderr)``. Raises :class:`BelowNoiseFloor` when any
    metric is at or below ``noise_floor``.
    """
    rows = sorted((float(T), float(m)) for T, m in rows)
    if len(rows) < 3:
        raise DomainError("need at least 3 rows to fit a rate")
    if any(m <= noise_floor or m <= 0 for _, m in rows):
        raise BelowNoiseFloor(f"metric at or below noise floor {noise_floor:.3e}")
    x = np.log([T for T, _ in rows[1:]])
    y = np.log([m for _, m in rows[1:]])
    xm = x - x.mean()
    sxx = float(xm @ xm)
    slope = float(xm @ (y - y.mean()) / sxx)
    n = x.size
    if n > 2:
        resid = y - y.mean() - slope * xm
        stderr = math.sqrt(float(resid @ resid) / (n - 2) / sxx)
    else:
        stderr = 0.0
    return slope, stderr


def _check(value, limit, passed):
    return {"value": value, "limit": limit, "passed": bool(passed)}


def _noise_floor(cfg, residual):
    return NOISE_FACTOR * max(cfg.rel_tol, residual)


def _rate_verdict(spec, rows, max_residual, checks):
    tol = spec.tolerances
    checks["pseudo_unitarity"] = _check(
        max_residual, tol["residual_factor"] * spec.cfg.rel_tol, max_residual <= tol["residual_factor"] * spec.cfg.rel_tol
    )
    try:
        slope, stderr = fit_rate(rows, _noise_floor(spec.cfg, max_residual))
    except BelowNoiseFloor:
        checks["slope"] = _check("below noise floor", None, True)
        ok = all(c["passed"] for c in checks.values())
        return None, None, "pass-degenerate" if ok else "fail"
    lo, hi = tol["slope_target"] - tol["slope_tol"], tol["slope_target"] + tol["slope_tol"]
    checks["slope"] = _check(slope, [lo, hi], lo <= slope <= hi)
    return slope, stderr, "pass" if all(c["passed"] for c in checks.values()) else "fail"


def _require_case(spec, allowed):
    if spec.profile.case not in allowed:
        raise DomainError(
            f"{spec.experiment.value} needs a case {'/'.join(c.value for c in allowed)} profile, got {spec.profile.case.value}"
        )


def _report(spec, metric_name, details, slope, stderr, verdict, checks, extras):
    rows = [(d["T"], d[metric_name]) for d in details]
    meta = spec.describe()
    meta["version"] = __version__
    meta["threads"] = numba.get_num_threads()
    return ExperimentReport(
        spec.experiment.value, metric_name, rows, slope, stderr, verdict, checks, extras, meta, details
    )


def _operator_norms(M):
    return np.linalg.norm(M, ord=2, axis=(-2, -1))


# -- experiments ------------------------------------------------------------


def run_adiabatic_rate(spec):
    """Energy-norm gap between the exact and adiabatic evolutions over ``[-1, 1]``."""
    _require_case(spec, (Case.A,))
    eps = spec.grid.nodes
    p = spec.profile
    w_out = weight_matrix(Space.ENERGY, eps, 1.0, p)
    w_in = np.linalg.inv(weight_matrix(Space.ENERGY, eps, -1.0, p))
    details = []
    for T in spec.T_values:
        exact = evolve_batch(eps, p, T, 1.0, -1.0, spec.cfg)
        adia = evolve_batch(eps, p, T, 1.0, -1.0, spec.cfg, adiabatic=True)
        gap = float(np.max(_operator_norms(w_out @ (exact.U - adia.U) @ w_in)))
        residual = float(max(exact.residuals.max(), adia.residuals.max()))
        details.append(
            {"T": T, "gap": gap, "n_nodes": spec.grid.n_nodes, "rel_tol": spec.cfg.rel_tol, "max_residual": residual}
        )
    max_res = max(d["max_residual"] for d in details)
    checks = {}
    rows = [(d["T"], d["gap"]) for d in details]
    slope, stderr, verdict = _rate_verdict(spec, rows, max_res, checks)
    return _report(spec, "gap", details, slope, stderr, verdict, checks, {"max_pseudo_unitarity_residual": max_res})


def run_wkb_rate(spec):
    """Operator-norm distance between the WKB factorisation and the integrated flow."""
    _require_case(spec, (Case.A,))
    eps = spec.grid.nodes
    p = spec.profile
    details = []
    for T in spec.T_values:
        exact = evolve_batch(eps, p, T, 1.0, -1.0, spec.cfg)
        approx = wkb_propagator(eps, p, T, 1.0, -1.0)
        err = float(np.max(_operator_norms(approx - exact.U)))
        details.append(
            {
                "T": T,
                "wkb_error": err,
                "n_nodes": spec.grid.n_nodes,
                "rel_tol": spec.cfg.rel_tol,
                "max_residual": float(exact.residuals.max()),
            }
        )
    max_res = max(d["max_residual"] for d in details)
    checks = {}
    rows = [(d["T"], d["wkb_error"]) for d in details]
    slope, stderr, verdict = _rate_verdict(spec, rows, max_res, checks)
    return _report(spec, "wkb_error", details, slope, stderr, verdict, checks, {"max_pseudo_unitarity_residual": max_res})


def _initial_family(spec):
    p = spec.profile
    sp = spec.state_params
    if spec.experiment is Experiment.VACUUM_LIMIT:
        return vacuum_family(p)
    if spec.experiment is Experiment.KMS_LIMIT:
        _require_case(spec, (Case.A,))
        return kms_family(p, sp.get("beta", 1.0))
    return hadamard_family(p, sp.get("b", "gaussian"), sp.get("c", "gaussian"), sp.get("d", "one"))


def run_limit_experiment(spec):
    """Weak-limit error of the pulled-back covariance over the ``T`` sweep.

    Passes iff the error decreases strictly along the sweep and its final
    value is below ``tolerances['threshold']``; the KMS and Hadamard
    variants add their closed-form checks.
    """
    if spec.experiment not in LIMIT_EXPERIMENTS:
        raise DomainError(f"{spec.experiment.value} is not a limit experiment")
    family = _initial_family(spec)
    p = spec.profile
    base = spec.grid
    family.check(base.nodes)
    details = []
    for T in spec.T_values:
        grid = grid_for(T, base.delta, base.R, base.n_nodes, base.measure_power)
        prop = propagate_grid(p, T, grid, spec.cfg)
        err = weak_limit_error(family, p, T, spec.test_function, grid, spec.cfg, propagators=prop)
        details.append(
            {
                "T": T,
                "error": float(err),
                "n_nodes": grid.n_nodes,
                "rel_tol": spec.cfg.rel_tol,
                "max_residual": float(prop.residuals.max()),
            }
        )
    errors = [d["error"] for d in details]
    tol = spec.tolerances
    checks = {
        "decreasing": _check(
            errors, "strictly decreasing", all(b < a for a, b in zip(errors, errors[1:]))
        ),
        "final_error": _check(errors[-1], tol["threshold"], errors[-1] < tol["threshold"]),
    }
    limit = adiabatic_limit_closed_form(family, p)
    worst = limit.check(base.nodes)
    extras = {
        "limit_min_eigenvalue": worst,
        "max_pseudo_unitarity_residual": max(d["max_residual"] for d in details),
    }
    if spec.experiment is Experiment.KMS_LIMIT:
        defect = kms_defect(limit, p, base.nodes)
        extras["kms_defect"] = defect
        if abs(p.m_minus - p.m_plus) > 0:
            checks["kms_defect"] = _check(defect, f"> {tol['defect_min']}", defect > tol["defect_min"])
        else:
            checks["kms_defect"] = _check(defect, f"<= {tol['defect_equal_max']}", defect <= tol["defect_equal_max"])
    if spec.experiment is Experiment.HADAMARD_LIMIT:
        order = int(tol["smoothing_order"])
        extras["initial_decay_bound"] = validate_hadamard(family, base.nodes, order)
        report = smoothing_report(hadamard_remainder(limit, p), base.nodes, order)
        extras["smoothing_report"] = report
        checks["remainder_decay"] = _check(report[-1], "finite", math.isfinite(report[-1]))
    verdict = "pass" if all(c["passed"] for c in checks.values()) else "fail"
    return _report(spec, "error", details, None, None, verdict, checks, extras)


def energy_bound_constant(profile, eps_min, n_quad=200):
    """``exp((1/2) integral_{-1}^{1} sup_eps |a'(t)| / a(t) dt)``; the sup sits at the smallest mode."""
    x, w = leggauss(n_quad)
    a = eps_min**2 + np.maximum(profile.m_sq(x), 0.0)
    return math.exp(0.5 * float(np.sum(w * np.abs(profile.m_sq_d1(x)) / a)))


def _lattice_pairs(lattice, ordered):
    pts = sorted(float(t) for t in lattice)
    if ordered:
        return [(t, s) for t, s in product(pts, pts) if t <= s]
    return [(t, s) for t, s in product(pts, pts) if t != s]


def run_energy_bounds(spec):
    """Weighted-norm suprema of ``U_T(t, s)`` for ``t <= s`` on the lattice and grid.

    Case A is measured in the energy norm against the Gronwall constant;
    cases B and C in their adapted spaces against 1.
    """
    p = spec.profile
    eps = spec.grid.nodes
    case = p.case
    space = {Case.A: Space.ENERGY, Case.B: Space.B, Case.C: Space.C}[case]
    slack = spec.tolerances["bound_slack"]
    bound = energy_bound_constant(p, float(eps.min())) if case is Case.A else 1.0
    pairs = _lattice_pairs(spec.lattice, ordered=True)
    details = []
    a_space_sup = 0.0
    for T in spec.T_values:
        sup = 0.0
        residual = 0.0
        for t, s in pairs:
            res = evolve_batch(eps, p, T, t, s, spec.cfg)
            residual = max(residual, float(res.residuals.max()))
            w_t = weight_matrix(space, eps, t, p)
            w_s_inv = np.linalg.inv(weight_matrix(space, eps, s, p))
            sup = max(sup, float(np.max(_operator_norms(w_t @ res.U @ w_s_inv))))
            if case is Case.A:
                wa = weight_matrix(Space.A, eps, t, p)
                a_space_sup = max(
                    a_space_sup, float(np.max(_operator_norms(wa @ res.U @ np.linalg.inv(wa))))
                )
        details.append(
            {"T": T, "sup_norm": sup, "n_nodes": spec.grid.n_nodes, "rel_tol": spec.cfg.rel_tol, "max_residual": residual}
        )
    worst = max(d["sup_norm"] for d in details)
    checks = {"bound": _check(worst, bound + slack, worst <= bound + slack)}
    extras = {"space": space.value, "bound": bound}
    if case is Case.A:
        extras["A_space_sup"] = a_space_sup
    verdict = "pass" if checks["bound"]["passed"] else "fail"
    return _report(spec, "sup_norm", details, None, None, verdict, checks, extras)


def run_intertwining_audit(spec):
    """Max of ``||P(t) U_ad(t, s) - U_ad(t, s) P(s)||`` over the lattice, grid and sweep."""
    p = spec.profile
    eps = spec.grid.nodes
    pairs = _lattice_pairs(spec.lattice, ordered=False)
    projectors = {t: spectral_projector(eps, t, p) for t in sorted(set(spec.lattice))}
    details = []
    for T in spec.T_values:
        worst = 0.0
        residual = 0.0
        for t, s in pairs:
            res = evolve_batch(eps, p, T, t, s, spec.cfg, adiabatic=True)
            residual = max(residual, float(res.residuals.max()))
            gap = projectors[t] @ res.U - res.U @ projectors[s]
            worst = max(worst, float(np.max(_operator_norms(gap))))
        details.append(
            {
                "T": T,
                "intertwining_residual": worst,
                "n_nodes": spec.grid.n_nodes,
                "rel_tol": spec.cfg.rel_tol,
                "max_residual": residual,
            }
        )
    limit = spec.tolerances["residual_factor"] * spec.cfg.rel_tol
    worst = max(d["intertwining_residual"] for d in details)
    max_res = max(d["max_residual"] for d in details)
    checks = {
        "intertwining": _check(worst, limit, worst <= limit),
        "pseudo_unitarity": _check(max_res, limit, max_res <= limit),
    }
    verdict = "pass" if all(c["passed"] for c in checks.values()) else "fail"
    return _report(spec, "intertwining_residual", details, None, None, verdict, checks, {})


_RUNNERS = {
    Experiment.ADIABATIC_RATE: run_adiabatic_rate,
    Experiment.WKB_RATE: run_wkb_rate,
    Experiment.VACUUM_LIMIT: run_limit_experiment,
    Experiment.KMS_LIMIT: run_limit_experiment,
    Experiment.HADAMARD_LIMIT: run_limit_experiment,
    Experiment.ENERGY_BOUNDS: run_energy_bounds,
    Experiment.INTERTWINING_AUDIT: run_intertwining_audit,
}


def run(spec):
    """Dispatch ``spec`` to its experiment; integrator failures propagate with diagnostics."""
    start = datetime.now(timezone.utc)
    try:
        report = _RUNNERS[spec.experiment](spec)
    except IntegrationError as exc:
        raise IntegrationError(f"{spec.experiment.value} aborted: {exc}") from exc
    end = datetime.now(timezone.utc)
    report.run_info = {"timestamp": start.isoformat(), "elapsed_seconds": (end - start).total_seconds()}
    return report

