import csv
import json
import subprocess
import sys

import pytest

from adialim.cli import EXIT_ERROR, EXIT_FAIL, EXIT_PASS, PRESETS, list_presets, main
from adialim.config import SCHEMA_VERSION, parse_config
from adialim.exceptions import ConfigError
from adialim.harness import Experiment

FAST = """
schema_version = 1
experiment = "intertwining-audit"

[profile]
case = "C"

[sweep]
T_values = [2, 4, 8, 16]
"""

FAST_LIMIT = """
schema_version = 1
experiment = "vacuum-limit"

[profile]
case = "B"

[sweep]
T_values = [2, 4, 8, 16]
"""


def _violations(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value


# -- config grammar ------------------------------------------------------------------


def test_minimal_config_fills_documented_defaults():
    cfg = parse_config('schema_version = 1\nexperiment = "vacuum-limit"\n[profile]\ncase = "B"\n')
    doc = cfg.to_dict()
    assert doc["schema_version"] == SCHEMA_VERSION
    assert cfg.experiment is Experiment.VACUUM_LIMIT
    assert doc["profile"] == {"case": "B", "shape": "smoothstep", "m_minus": 0.0, "m_plus": 1.0}
    assert doc["grid"] == {"delta": 0.5, "R": 4.0, "n_nodes": 64, "measure_power": 2}
    assert doc["sweep"]["T_values"] == [16.0, 32.0, 64.0, 128.0, 256.0]
    assert doc["integrator"]["rel_tol"] == 1e-13
    assert doc["state"]["kind"] == "vacuum"
    assert doc["verdict"] == {"threshold": 1e-2}
    assert doc["output"]["formats"] == ["json", "csv", "summary"]


def test_rate_experiments_default_to_looser_tolerance():
    cfg = parse_config('schema_version = 1\nexperiment = "adiabatic-rate"\n')
    assert cfg.integrator["rel_tol"] == 1e-11 and cfg.grid["n_nodes"] == 33
    assert cfg.profile["m_minus"] == 1.0 and cfg.profile["m_plus"] == 2.0


def test_delta_not_below_R_names_both_keys():
    err = _violations('schema_version = 1\nexperiment = "vacuum-limit"\n[grid]\ndelta = 4.0\nR = 4.0\n')
    assert any("grid.delta" in v and "grid.R" in v for v in err.violations)


def test_unknown_key_suggests_R():
    err = _violations('schema_version = 1\nexperiment = "vacuum-limit"\n[grid]\nepsilon_max = 5.0\n')
    assert err.violations == ["unknown key 'grid.epsilon_max'; did you mean 'R'?"]


def test_close_misspelling_is_suggested():
    err = _violations('schema_version = 1\nexperiment = "vacuum-limit"\n[integrator]\nrel_toll = 1e-12\n')
    assert "did you mean 'rel_tol'?" in err.violations[0]


def test_all_violations_are_reported():
    err = _violations(
        'experiment = "kms-limit"\nbogus = 1\n[profile]\ncase = "B"\n[sweep]\nT_values = [4, 2]\n'
        '[state]\nbeta = -1.0\n[integrator]\nmax_steps = 10\n'
    )
    text = " | ".join(err.violations)
    for needle in ("schema_version", "'bogus'", "requires profile.case", "at least 4", "increasing", "state.beta", "max_steps"):
        assert needle in text
    assert len(err.violations) >= 7


def test_parse_error_has_line_and_column():
    err = _violations('schema_version = 1\nexperiment = "vacuum-limit"\n[grid\n')
    assert (err.line, err.column) == (3, 6)


@pytest.mark.parametrize(
    "body, needle",
    [
        ('schema_version = 2\nexperiment = "vacuum-limit"\n', "schema_version"),
        ('schema_version = 1\nexperiment = "nope"\n', "experiment must be one of"),
        ('schema_version = 1\nexperiment = "vacuum-limit"\n[state]\nkind = "kms"\n', "state.kind"),
        ('schema_version = 1\nexperiment = "vacuum-limit"\n[verdict]\nslope_tol = 0.1\n', "does not apply"),
        ('schema_version = 1\nexperiment = "vacuum-limit"\n[test_function]\nhi = 9.0\n', "inside"),
        ('schema_version = 1\nexperiment = "vacuum-limit"\n[profile]\ncase = "B"\nm_minus = 1.0\n', "profile"),
        ('schema_version = 1\nexperiment = "vacuum-limit"\n[grid]\nn_nodes = 3.5\n', "integer"),
        ('schema_version = 1\nexperiment = "vacuum-limit"\n[output]\nformats = ["pdf"]\n', "output.formats"),
        ('schema_version = 1\nexperiment = "vacuum-limit"\ngrid = 3\n', "table"),
    ],
)
def test_schema_violations(body, needle):
    assert any(needle in v for v in _violations(body).violations)


def test_masses_without_case_infer_it():
    cfg = parse_config('schema_version = 1\nexperiment = "vacuum-limit"\n[profile]\nm_minus = 1.0\nm_plus = 0.0\n')
    assert cfg.profile["case"] == "C"


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_is_valid(name):
    cfg = parse_config(PRESETS[name][1])
    spec = cfg.to_spec()
    assert len(spec.T_values) >= 4


# -- commands ------------------------------------------------------------------------


def test_presets_listing(capsys):
    assert main(["presets"]) == EXIT_PASS
    out = capsys.readouterr().out
    assert "vacuum-limit" in out and "energy-bounds" in out
    assert len(out.strip().splitlines()) == 7 == len(PRESETS)
    assert out == list_presets()


def test_validate_command(tmp_path, capsys):
    good = tmp_path / "good.toml"
    good.write_text(FAST)
    assert main(["validate", str(good)]) == EXIT_PASS
    assert json.loads(capsys.readouterr().out)["experiment"] == "intertwining-audit"
    bad = tmp_path / "bad.toml"
    bad.write_text('schema_version = 1\nexperiment = "vacuum-limit"\n[grid]\nepsilon_max = 1\n')
    assert main(["validate", str(bad)]) == EXIT_ERROR
    assert "did you mean 'R'" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.toml")]) == EXIT_ERROR


def test_run_writes_outputs(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text(FAST)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out), "--threads", "1"]) == EXIT_PASS
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"] == "pass"
    assert report["metadata"]["config"]["profile"]["case"] == "C"
    assert report["metadata"]["threads"] == 1
    rows = list(csv.reader(open(out / "rows.csv")))
    assert rows[0][0] == "T" and len(rows) == 5
    assert "verdict:    PASS" in (out / "summary.txt").read_text()
    assert "PASS" in capsys.readouterr().out


def test_run_fail_verdict_exits_2(tmp_path):
    cfg = tmp_path / "fail.toml"
    cfg.write_text(FAST_LIMIT + "[verdict]\nthreshold = 1e-30\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o"), "--threads", "1"]) == EXIT_FAIL


def test_run_unwritable_out_dir_exits_1(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text(FAST)
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", str(cfg), "--out", str(blocker / "sub")]) == EXIT_ERROR
    assert str(blocker) in capsys.readouterr().err


def test_run_rejects_bad_thread_count(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(FAST)
    assert main(["run", str(cfg), "--threads", "0", "--out", str(tmp_path / "o")]) == EXIT_ERROR


def test_run_is_byte_reproducible(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(FAST_LIMIT)
    docs = []
    for name in ("a", "b"):
        assert main(["run", str(cfg), "--out", str(tmp_path / name), "--threads", "1"]) == EXIT_PASS
        doc = json.loads((tmp_path / name / "report.json").read_text())
        doc.pop("run_info")
        docs.append(json.dumps(doc, sort_keys=True))
    assert docs[0] == docs[1]


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "adialim.cli", "presets"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0 and "adiabatic-rate-caseA" in proc.stdout
