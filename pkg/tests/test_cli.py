import csv
import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from clusterlaw.cli import ConfigError, ExperimentConfig, main, run


def body(text):
    lines = text.splitlines()
    assert lines[0].startswith("# ")
    return json.loads(lines[0][2:]), list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def test_oracle_check_passes(capsys):
    assert main(["oracle-check", "--n", "20", "--assert"]) == 0
    header, rows = body(capsys.readouterr().out)
    assert {r["status"] for r in rows} == {"PASS"}
    assert {r["mode"] for r in rows} == {"exact"}
    assert len(rows) == 4 * 21
    assert header["config"]["command"] == "oracle-check"
    assert set(header["columns"]) == set(rows[0])


def test_oracle_check_irrational_sequence(capsys):
    assert main(["oracle-check", "--l", "0.5", "--n", "14", "--assert"]) == 0
    _, rows = body(capsys.readouterr().out)
    assert {r["mode"] for r in rows} == {"float"}


def test_cluster_law_thresholds(capsys):
    main(["cluster-law", "--l", "1", "--n", "10000", "--beta", "0.3,0.5,0.7"])
    _, rows = body(capsys.readouterr().out)
    p = [float(r["probability"]) for r in rows]
    assert p[0] < 1e-10 and p[1] < 1e-10 and 0.5 < p[2] < 1.0
    assert [r["r"] for r in rows] == ["15", "100", "630"]


def test_ans_verify_assert_mode_reports_breach(capsys):
    status = main(["ans-verify", "--h", "1", "--q", "2", "--n", "1000,10000", "--assert"])
    out = capsys.readouterr()
    assert status == 1
    assert "tolerance breach" in out.err
    _, rows = body(out.out)
    assert float(rows[-1]["ratio"]) == pytest.approx(1.9003818529, rel=1e-9)


def test_outputs_are_deterministic():
    cfg = ExperimentConfig(command="simulate", n=[6], steps=2000, replicas=2, seed=4)
    _, a = run(cfg)
    _, b = run(ExperimentConfig.from_json(cfg.to_json()))
    assert a == b


def test_workers_keep_grid_order():
    cfg = ExperimentConfig(command="saddle", n=[300, 100, 200])
    _, serial = run(cfg)
    cfg.workers = 2
    _, pooled = run(cfg)
    assert serial.split("\n", 1)[1] == pooled.split("\n", 1)[1]
    _, rows = body(serial)
    assert [r["n"] for r in rows] == ["300", "100", "200"]


def test_json_format(tmp_path):
    out = tmp_path / "k.json"
    assert main(["kp", "--n", "500", "--kmax", "2", "--format", "json", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["header"]["clusterlaw_version"] == "0.1.0"
    assert len(doc["rows"]) == 2 * 3


def test_compare_and_coeffs(capsys):
    main(["compare", "--l", "2", "--n", "1000"])
    _, rows = body(capsys.readouterr().out)
    assert abs(float(rows[0]["sigma_rel_err"])) < 1e-5
    main(["coeffs", "--n", "3", "--exact"])
    _, rows = body(capsys.readouterr().out)
    assert [(r["numerator"], r["denominator"]) for r in rows] == [("1", "1"), ("1", "1"), ("3", "2"), ("13", "6")]


def test_config_file_and_flag_override(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"command": "saddle", "n": [50], "pf": {"l": 2.0}}))
    assert main(["saddle", "--config", str(path), "--window", "1,5"]) == 0
    header, rows = body(capsys.readouterr().out)
    assert header["config"]["pf"]["l"] == 2.0
    assert rows[0]["window"] == "[1,5]"


def test_config_errors_report_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n "command": "saddle",\n "n": [10,]\n}')
    assert main(["saddle", "--config", str(path)]) == 2
    assert "line 3" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"command": "saddle", "bogus": 1})


def test_module_errors_surface(capsys):
    assert main(["oracle-check", "--n", "40"]) == 2
    assert "oracle-check is limited" in capsys.readouterr().err
    assert main(["saddle", "--n", "100", "--l", "-1"]) == 2
    assert "must be positive" in capsys.readouterr().err


@given(st.lists(st.integers(1, 10**6), max_size=4), st.lists(st.floats(0, 1), max_size=3),
       st.sampled_from(["csv", "json"]), st.booleans(), st.integers(0, 2**31))
def test_config_round_trip(n, beta, fmt, flag, seed):
    cfg = ExperimentConfig(command="compare", n=n, beta=beta, format=fmt, assert_mode=flag, seed=seed,
                           window=[2, None])
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg
