"""Command-line entry point.

``adialim run <config|preset> [--out DIR] [--threads N]`` runs one experiment
and writes ``report.json``, ``rows.csv`` and ``summary.txt``. It exits with 0
when the verdict passes, 2 when it fails and 1 on any error.
``adialim presets`` lists the built-in configurations and ``adialim validate``
checks a config file without running it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .config import load_config, parse_config
from .exceptions import AdialimError, ConfigError
from .harness import run as run_spec
from .harness import set_threads

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_FAIL = 2

_HEADER = "schema_version = 1\n"

# name -> (description, TOML text). Each description names the statement it checks.
PRESETS = {
    "adiabatic-rate-caseA": (
        "adiabatic theorem: exact vs adiabatic evolution gap decays like 1/T (case A, m 1->2)",
        _HEADER
        + 'experiment = "adiabatic-rate"\n'
        + '[profile]\ncase = "A"\nm_minus = 1.0\nm_plus = 2.0\n'
        + "[grid]\ndelta = 0.5\nR = 4.0\nn_nodes = 33\n",
    ),
    "wkb-rate": (
        "WKB factorisation: distance to the exact evolution decays like 1/T (case A)",
        _HEADER + 'experiment = "wkb-rate"\n[profile]\ncase = "A"\n',
    ),
    "intertwining-audit": (
        "adiabatic evolution intertwines the spectral projectors P(t) U = U P(s)",
        _HEADER + 'experiment = "intertwining-audit"\n[profile]\ncase = "A"\n',
    ),
    "energy-bounds": (
        "weighted energy estimates for the evolution, uniform in T (case B here; A and C via config)",
        _HEADER + 'experiment = "energy-bounds"\n[profile]\ncase = "B"\n',
    ),
    "vacuum-limit": (
        "vacuum at t=-1 converges weakly to the vacuum at t=+1 (case B, m 0->1)",
        _HEADER + 'experiment = "vacuum-limit"\n[profile]\ncase = "B"\n',
    ),
    "kms-defect": (
        "KMS state at t=-1 has a non-thermal adiabatic limit unless m(-1) = m(+1)",
        _HEADER + 'experiment = "kms-limit"\n[profile]\ncase = "A"\nm_minus = 1.0\nm_plus = 2.0\n[state]\nbeta = 1.0\n',
    ),
    "hadamard-limit": (
        "Hadamard state at t=-1 has a Hadamard adiabatic limit (smoothing remainder)",
        _HEADER + 'experiment = "hadamard-limit"\n[profile]\ncase = "A"\n[state]\nb = "gaussian"\nc = "gaussian"\nd = "one"\n',
    ),
}


def list_presets():
    width = max(len(name) for name in PRESETS)
    return "".join(f"{name:<{width}}  {desc}\n" for name, (desc, _) in PRESETS.items())


def resolve_config(source):
    """A preset name or a path to a TOML file."""
    if source in PRESETS and not os.path.exists(source):
        return parse_config(PRESETS[source][1])
    return load_config(source)


def _prepare_out_dir(path):
    os.makedirs(path, exist_ok=True)
    probe = os.path.join(path, ".adialim-write-test")
    with open(probe, "w") as fh:
        fh.write("")
    os.remove(probe)


def write_outputs(report, cfg, out_dir):
    formats = cfg.output["formats"]
    written = []
    for fmt, name, text in (
        ("json", "report.json", lambda: report.to_json()),
        ("csv", "rows.csv", report.rows_csv),
        ("summary", "summary.txt", report.summary),
    ):
        if fmt in formats:
            path = os.path.join(out_dir, name)
            with open(path, "w", newline="") as fh:
                fh.write(text())
            written.append(path)
    return written


def run(cfg, out_dir, threads=None, stream=None):
    """Run ``cfg`` and write its outputs to ``out_dir``; returns the exit code."""
    try:
        _prepare_out_dir(out_dir)
    except OSError as exc:
        print(f"error: cannot write to output directory {out_dir!r}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_ERROR
    used = set_threads(threads if threads is not None else (os.cpu_count() or 1))
    try:
        spec = cfg.to_spec()
        report = run_spec(spec)
    except AdialimError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    report.metadata["config"] = cfg.to_dict()
    report.metadata["threads"] = used
    try:
        write_outputs(report, cfg, out_dir)
    except OSError as exc:
        print(f"error: writing {exc.filename!r}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_ERROR
    (stream or sys.stdout).write(report.summary())
    return EXIT_PASS if report.passed else EXIT_FAIL


def _print_config_error(exc, source):
    where = f" (line {exc.line}, column {exc.column})" if exc.line is not None else ""
    print(f"error: invalid config {source!r}{where}:", file=sys.stderr)
    for v in exc.violations:
        print(f"  - {v}", file=sys.stderr)


def build_parser():
    parser = argparse.ArgumentParser(prog="adialim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"adialim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment from a config file or preset")
    p_run.add_argument("config", help="path to a TOML config, or a preset name")
    p_run.add_argument("--out", help="output directory (overrides output.directory)")
    p_run.add_argument("--threads", type=int, help="worker threads (default: logical processors)")
    sub.add_parser("presets", help="list built-in presets")
    p_val = sub.add_parser("validate", help="validate a config and print it with defaults filled in")
    p_val.add_argument("config")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        sys.stdout.write(list_presets())
        return EXIT_PASS
    try:
        cfg = resolve_config(args.config)
    except ConfigError as exc:
        _print_config_error(exc, args.config)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: cannot read config {args.config!r}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.command == "validate":
        sys.stdout.write(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        return EXIT_PASS
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    return run(cfg, args.out or cfg.output["directory"], args.threads)


if __name__ == "__main__":
    sys.exit(main())
