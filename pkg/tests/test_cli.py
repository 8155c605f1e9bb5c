import csv
import json
from pathlib import Path

import pytest

from kacres.cli import EXIT_ERROR, EXIT_PASS, EXIT_VIOLATION, main
from kacres.config import ConfigError, parse
from kacres.report import CSV_COLUMNS

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_unknown_key_is_named():
    with pytest.raises(ConfigError) as exc:
        parse("experiment = verify-thm1\nparams.Q = 3\n")
    assert exc.value.key == "params.Q"
    assert "params.Q" in str(exc.value)


def test_empty_time_grid_rejected():
    with pytest.raises(ConfigError) as exc:
        parse("experiment = verify-thm1\nt_grid =\n")
    assert exc.value.key == "t_grid"


def test_unknown_experiment_exit_code(tmp_path, capsys):
    assert main(["no-such-thing", "--out", str(tmp_path)]) == EXIT_ERROR
    assert "experiment" in capsys.readouterr().err


def test_not_square_integrable_exit_code(tmp_path, capsys):
    assert main(["--config", str(CONFIGS / "thm1_not_l2.cfg"), "--out", str(tmp_path)]) == EXIT_ERROR
    assert "NotInL2Error" in capsys.readouterr().err


def test_missing_config_and_bad_seed(tmp_path):
    assert main(["verify-thm1", "--config", str(tmp_path / "none.cfg")]) == EXIT_ERROR
    assert main(["verify-thm1", "--seed", "-1"]) == EXIT_ERROR
    assert main(["verify-thm1", "--set", "oops"]) == EXIT_ERROR


def test_pass_outputs_and_reruns_identical(tmp_path):
    runs = []
    for i, threads in enumerate(("1", "3")):
        out = tmp_path / f"r{i}"
        code = main(["--config", str(CONFIGS / "thm1_M1N2.cfg"), "--seed", "7", "--threads", threads,
                     "--out", str(out)])
        assert code == EXIT_PASS
        runs.append(((out / "report.json").read_bytes(), (out / "table.csv").read_bytes()))
    assert runs[0] == runs[1]
    rep = json.loads(runs[0][0])
    assert rep["experiment"] == "verify-thm1" and rep["summary"]
    with open(tmp_path / "r0" / "table.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == len(rep["records"]) + 1


def test_violation_exit_code(tmp_path, capsys):
    # a long-time target far below what 50/Lambda can reach is reported, not hidden
    code = main(["--config", str(CONFIGS / "steady_M1N4.cfg"), "--set", "steady.n_states=2",
                 "--out", str(tmp_path)])
    assert code == EXIT_VIOLATION
    assert "FAIL steady_long_time" in capsys.readouterr().out
