"""Run configuration files (TOML, schema version 1).

A config names one experiment and optional tables overriding the defaults::

    schema_version = 1
    experiment = "vacuum-limit"

    [profile]
    case = "B"

Every problem found is reported together in one :class:`ConfigError`;
TOML syntax errors carry the line and column. :meth:`RunConfig.to_dict`
echoes the fully defaulted configuration, which is what reports embed.
"""

from __future__ import annotations

import copy
import difflib
import math
import re
from dataclasses import dataclass

import tomli

from .exceptions import AdialimError, ConfigError
from .harness import DEFAULT_LATTICE, DEFAULT_TOLERANCES, LIMIT_EXPERIMENTS, Experiment, SweepSpec
from .profiles import Case, MassProfile
from .propagators import _METHODS, IntegratorConfig
from .smearing import build_grid, bump
from .states import SHAPE_FUNCTIONS

SCHEMA_VERSION = 1

TOP_KEYS = ("schema_version", "experiment")
SECTIONS = {
    "profile": ("case", "shape", "m_minus", "m_plus", "m", "coeffs"),
    "grid": ("delta", "R", "n_nodes", "measure_power"),
    "sweep": ("T_values", "lattice"),
    "integrator": ("rel_tol", "abs_tol", "max_steps", "initial_step", "method"),
    "state": ("kind", "beta", "b", "c", "d"),
    "test_function": ("kind", "lo", "hi"),
    "verdict": tuple(sorted({k for tol in DEFAULT_TOLERANCES.values() for k in tol})),
    "output": ("directory", "formats"),
}

# Common misspellings and synonyms mapped to the key they most likely mean.
ALIASES = {
    "epsilon_max": "R",
    "eps_max": "R",
    "r": "R",
    "cutoff": "R",
    "epsilon_min": "delta",
    "eps_min": "delta",
    "nodes": "n_nodes",
    "num_nodes": "n_nodes",
    "T": "T_values",
    "t_values": "T_values",
    "rtol": "rel_tol",
    "atol": "abs_tol",
    "temperature": "beta",
    "mass_minus": "m_minus",
    "mass_plus": "m_plus",
    "version": "schema_version",
    "out": "directory",
    "out_dir": "directory",
}

PROFILE_SHAPES = ("smoothstep", "constant", "polynomial")
FORMATS = ("json", "csv", "summary")
STATE_KINDS = {
    Experiment.VACUUM_LIMIT: "vacuum",
    Experiment.KMS_LIMIT: "kms",
    Experiment.HADAMARD_LIMIT: "hadamard",
}
CASE_DEFAULT_MASSES = {"A": (1.0, 2.0), "B": (0.0, 1.0), "C": (1.0, 0.0)}
CASE_A_ONLY = (Experiment.ADIABATIC_RATE, Experiment.WKB_RATE, Experiment.KMS_LIMIT)

DEFAULT_T_VALUES = [16.0, 32.0, 64.0, 128.0, 256.0]
RATE_TOL = 1e-11
LIMIT_TOL = 1e-13


def _defaults(experiment):
    limit = experiment in LIMIT_EXPERIMENTS
    tol = LIMIT_TOL if limit else RATE_TOL
    return {
        "profile": {"case": "A", "shape": "smoothstep"},
        "grid": {"delta": 0.5, "R": 4.0, "n_nodes": 64 if limit else 33, "measure_power": 2},
        "sweep": {"T_values": list(DEFAULT_T_VALUES), "lattice": list(DEFAULT_LATTICE)},
        "integrator": {
            "rel_tol": tol,
            "abs_tol": tol,
            "max_steps": 10_000,
            "initial_step": 0.0,
            "method": "dop853",
        },
        "state": {"kind": STATE_KINDS.get(experiment, "none"), "beta": 1.0, "b": "gaussian", "c": "gaussian", "d": "one"},
        "test_function": {"kind": "bump", "lo": 0.5, "hi": 4.0},
        "verdict": dict(DEFAULT_TOLERANCES[experiment]),
        "output": {"directory": "adialim-out", "formats": list(FORMATS)},
    }


@dataclass(frozen=True)
class RunConfig:
    """A validated, fully defaulted run configuration."""

    schema_version: int
    experiment: Experiment
    profile: dict
    grid: dict
    sweep: dict
    integrator: dict
    state: dict
    test_function: dict
    verdict: dict
    output: dict

    def to_dict(self):
        doc = {"schema_version": self.schema_version, "experiment": self.experiment.value}
        for name in SECTIONS:
            doc[name] = copy.deepcopy(getattr(self, name))
        return doc

    def build_profile(self):
        return _build_profile(self.profile)

    def to_spec(self):
        g = self.grid
        tf = self.test_function
        state = {k: v for k, v in self.state.items() if k != "kind"} if self.experiment in LIMIT_EXPERIMENTS else {}
        return SweepSpec(
            experiment=self.experiment,
            T_values=tuple(self.sweep["T_values"]),
            profile=self.build_profile(),
            grid=build_grid(g["delta"], g["R"], g["n_nodes"], g["measure_power"]),
            cfg=IntegratorConfig(**self.integrator),
            state_params=state,
            test_function=bump(tf["lo"], tf["hi"]),
            lattice=tuple(self.sweep["lattice"]),
            tolerances=dict(self.verdict),
        )


def _build_profile(block):
    case = Case(block["case"])
    shape = block["shape"]
    if shape == "constant":
        return MassProfile.constant(block["m"])
    if shape == "polynomial":
        return MassProfile.polynomial(block["coeffs"], case)
    return MassProfile.smoothstep(block["m_minus"], block["m_plus"], case)


def _suggest(key, allowed):
    target = ALIASES.get(key)
    if target is None and key.lower() in ALIASES:
        target = ALIASES[key.lower()]
    if target in allowed:
        return target
    close = difflib.get_close_matches(key, allowed, n=1, cutoff=0.6)
    return close[0] if close else None


def _unknown(path, key, allowed, violations):
    hint = _suggest(key, allowed)
    msg = f"unknown key '{path}{key}'"
    if hint:
        msg += f"; did you mean '{hint}'?"
    violations.append(msg)


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


class _Checker:
    def __init__(self):
        self.violations = []

    def fail(self, msg):
        self.violations.append(msg)

    def number(self, where, v, lo=None, lo_open=False, integer=False):
        if integer and (not isinstance(v, int) or isinstance(v, bool)):
            self.fail(f"{where} must be an integer, got {v!r}")
            return False
        if not _is_number(v):
            self.fail(f"{where} must be a finite number, got {v!r}")
            return False
        if lo is not None and (v <= lo if lo_open else v < lo):
            self.fail(f"{where} must be {'>' if lo_open else '>='} {lo}, got {v!r}")
            return False
        return True

    def choice(self, where, v, options):
        if v not in options:
            self.fail(f"{where} must be one of {list(options)}, got {v!r}")
            return False
        return True


def parse_config(text):
    """Parse and validate TOML ``text``; raises :class:`ConfigError` listing every violation."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError([f"config is not valid UTF-8: {exc}"]) from exc
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ConfigError([f"TOML parse error: {exc}"], line, col) from exc
    return validate_config(raw)


def load_config(path):
    with open(path, "rb") as fh:
        return parse_config(fh.read())


def validate_config(raw):
    """Validate a parsed key-value tree against schema version 1."""
    chk = _Checker()
    all_keys = sorted(set(TOP_KEYS) | set(SECTIONS))

    for key in raw:
        if key not in TOP_KEYS and key not in SECTIONS:
            _unknown("", key, all_keys, chk.violations)

    version = raw.get("schema_version")
    if version is None:
        chk.fail("schema_version is required")
    elif version != SCHEMA_VERSION:
        chk.fail(f"unsupported schema_version {version!r} (this build reads {SCHEMA_VERSION})")

    exp_name = raw.get("experiment")
    experiment = None
    if exp_name is None:
        chk.fail("experiment is required")
    else:
        try:
            experiment = Experiment(exp_name)
        except ValueError:
            chk.fail(f"experiment must be one of {[e.value for e in Experiment]}, got {exp_name!r}")
    if experiment is None:
        raise ConfigError(chk.violations)

    merged = _defaults(experiment)
    for name, allowed in SECTIONS.items():
        block = raw.get(name, {})
        if not isinstance(block, dict):
            chk.fail(f"'{name}' must be a table")
            continue
        for key, value in block.items():
            if key not in allowed:
                _unknown(f"{name}.", key, allowed, chk.violations)
            elif name == "verdict" and key not in merged["verdict"]:
                chk.fail(f"verdict.{key} does not apply to experiment {experiment.value}")
            else:
                merged[name][key] = value

    _check_profile(chk, merged["profile"], experiment, raw.get("profile", {}))
    _check_grid(chk, merged["grid"])
    _check_sweep(chk, merged["sweep"])
    _check_integrator(chk, merged["integrator"], experiment)
    _check_state(chk, merged["state"], experiment)
    _check_test_function(chk, merged["test_function"], merged["grid"])
    _check_verdict(chk, merged["verdict"])
    _check_output(chk, merged["output"])

    if chk.violations:
        raise ConfigError(chk.violations)
    return RunConfig(SCHEMA_VERSION, experiment, **merged)


def _check_profile(chk, p, experiment, given):
    if not chk.choice("profile.case", p["case"], ("A", "B", "C")):
        return
    if not chk.choice("profile.shape", p["shape"], PROFILE_SHAPES):
        return
    shape = p["shape"]
    given = given if isinstance(given, dict) else {}
    if shape == "smoothstep":
        m_minus, m_plus = CASE_DEFAULT_MASSES[p["case"]]
        p.setdefault("m_minus", m_minus)
        p.setdefault("m_plus", m_plus)
        for key in ("m", "coeffs"):
            if key in given:
                chk.fail(f"profile.{key} is not used by shape 'smoothstep'")
        ok = chk.number("profile.m_minus", p["m_minus"], 0.0) & chk.number("profile.m_plus", p["m_plus"], 0.0)
    elif shape == "constant":
        if "m" not in p:
            chk.fail("profile.m is required for shape 'constant'")
            return
        ok = chk.number("profile.m", p["m"], 0.0, lo_open=True)
        if ok and p["case"] != "A":
            chk.fail("a constant positive mass is case 'A'")
            ok = False
    else:
        coeffs = p.get("coeffs")
        if not isinstance(coeffs, list) or not coeffs or not all(_is_number(c) for c in coeffs):
            chk.fail("profile.coeffs must be a non-empty list of numbers for shape 'polynomial'")
            return
        ok = True
    if ok:
        try:
            if shape == "smoothstep" and "case" not in given and ("m_minus" in given or "m_plus" in given):
                profile = MassProfile.smoothstep(p["m_minus"], p["m_plus"])
                p["case"] = profile.case.value
            else:
                profile = _build_profile(p)
        except (AdialimError, ValueError) as exc:
            chk.fail(f"profile: {exc}")
            return
        if experiment in CASE_A_ONLY and profile.case is not Case.A:
            chk.fail(f"experiment {experiment.value} requires profile.case = 'A', got {profile.case.value!r}")


def _check_grid(chk, g):
    ok = chk.number("grid.delta", g["delta"], 0.0, lo_open=True) & chk.number("grid.R", g["R"], 0.0, lo_open=True)
    if ok and g["delta"] >= g["R"]:
        chk.fail(f"grid.delta ({g['delta']}) must be smaller than grid.R ({g['R']})")
    chk.number("grid.n_nodes", g["n_nodes"], 16, integer=True)
    chk.number("grid.measure_power", g["measure_power"], 0, integer=True)


def _check_sweep(chk, s):
    T = s["T_values"]
    if not isinstance(T, list) or not all(_is_number(x) for x in T):
        chk.fail("sweep.T_values must be a list of numbers")
    else:
        if len(T) < 4:
            chk.fail(f"sweep.T_values needs at least 4 values, got {len(T)}")
        if any(b <= a for a, b in zip(T, T[1:])):
            chk.fail("sweep.T_values must be strictly increasing")
        if T and min(T) < 1:
            chk.fail("sweep.T_values must all be >= 1")
        s["T_values"] = [float(x) for x in T]
    lat = s["lattice"]
    if not isinstance(lat, list) or len(lat) < 2 or not all(_is_number(x) and -1 <= x <= 1 for x in lat):
        chk.fail("sweep.lattice must be a list of at least 2 times in [-1, 1]")
    else:
        s["lattice"] = [float(x) for x in lat]


def _check_integrator(chk, c, experiment):
    if chk.number("integrator.rel_tol", c["rel_tol"], 0.0, lo_open=True) and c["rel_tol"] > 1e-3:
        chk.fail(f"integrator.rel_tol must be <= 1e-3, got {c['rel_tol']!r}")
    chk.number("integrator.abs_tol", c["abs_tol"], 0.0, lo_open=True)
    chk.number("integrator.max_steps", c["max_steps"], 1000, integer=True)
    chk.number("integrator.initial_step", c["initial_step"], 0.0)
    chk.choice("integrator.method", c["method"], sorted(_METHODS))


def _check_state(chk, s, experiment):
    expected = STATE_KINDS.get(experiment, "none")
    if s["kind"] != expected:
        chk.fail(f"state.kind {s['kind']!r} does not match experiment {experiment.value} (expects {expected!r})")
    chk.number("state.beta", s["beta"], 0.0, lo_open=True)
    for key in ("b", "c", "d"):
        chk.choice(f"state.{key}", s[key], sorted(SHAPE_FUNCTIONS))


def _check_test_function(chk, tf, grid):
    chk.choice("test_function.kind", tf["kind"], ("bump",))
    ok = chk.number("test_function.lo", tf["lo"], 0.0, lo_open=True) & chk.number("test_function.hi", tf["hi"], 0.0)
    if not ok:
        return
    if tf["lo"] >= tf["hi"]:
        chk.fail(f"test_function.lo ({tf['lo']}) must be smaller than test_function.hi ({tf['hi']})")
    if _is_number(grid["delta"]) and _is_number(grid["R"]) and (tf["lo"] < grid["delta"] or tf["hi"] > grid["R"]):
        chk.fail("test_function support [lo, hi] must lie inside [grid.delta, grid.R]")


def _check_verdict(chk, v):
    for key, value in v.items():
        if key == "smoothing_order":
            chk.number(f"verdict.{key}", value, 0, integer=True)
        elif key == "slope_target":
            chk.number(f"verdict.{key}", value)
        else:
            chk.number(f"verdict.{key}", value, 0.0, lo_open=True)


def _check_output(chk, o):
    if not isinstance(o["directory"], str) or not o["directory"]:
        chk.fail("output.directory must be a non-empty string")
    fmts = o["formats"]
    if not isinstance(fmts, list) or not fmts or any(f not in FORMATS for f in fmts):
        chk.fail(f"output.formats must be a non-empty subset of {list(FORMATS)}")
