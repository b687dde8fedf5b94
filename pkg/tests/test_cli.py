import csv
import json

import pytest

from conftest import small_scenario
from rrpcp import cli, io


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "small.json"
    doc = {"scenario": io.scenario_to_dict(small_scenario(horizon=30, delete_at=None)),
           "tracker": {"gamma": 1.5, "eps_window": 20}, "methods": ["nc", "basic"], "trials": 2}
    p.write_text(json.dumps(doc))
    return p


def test_generate_and_run(cfg_path, tmp_path, capsys):
    assert cli.main(["generate", "--config", str(cfg_path), "--out", str(tmp_path / "d.bin")]) == 0
    assert cli.main(["generate", "--config", str(cfg_path), "--out", str(tmp_path / "d.csv")]) == 0
    with open(tmp_path / "d.csv") as fh:
        assert sum(1 for _ in fh) == 331
    assert cli.main(["run", "--config", str(cfg_path), "--method", "nc", "--out", str(tmp_path / "r.csv")]) == 0
    rows = io.read_run_csv(tmp_path / "r.csv")
    assert {r["method"] for r in rows} == {"nc"} and len(rows) == 30
    assert "nc: mean error" in capsys.readouterr().out


def test_mc_with_archive(cfg_path, tmp_path):
    rc = cli.main(["mc", "--config", str(cfg_path), "--workers", "1", "--out", str(tmp_path / "m.csv"),
                   "--archive", str(tmp_path / "arch")])
    assert rc == 0
    assert sorted(p.name for p in (tmp_path / "arch").iterdir()) == ["trial_0000.csv", "trial_0001.csv"]
    t, stats = io.read_mc_csv(tmp_path / "m.csv")
    assert set(stats) == {"nc", "basic"} and len(t) == 30


def test_noise_curve_csv(tmp_path):
    out = tmp_path / "n.csv"
    assert cli.main(["noise-curve", "--dt-max", "3", "--trials", "500", "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert [r["dt"] for r in rows] == ["1", "2", "3"]
    assert float(rows[0]["analytic_plain"]) == pytest.approx(0.514)


def test_validate_small(capsys):
    assert cli.main(["validate", "--instances", "4"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 6


def test_bundled_config_resolves():
    assert cli.resolve_config("paper-fast").name == "paper-fast.json"
    assert io.load_config(cli.resolve_config("paper"))["trials"] == 50


@pytest.mark.parametrize("argv", [
    ["run", "--config", "nowhere.json", "--out", "x.csv"],
    ["noise-curve", "--dt-max", "0"],
    ["noise-curve", "--f", "1.5"],
    ["bogus"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert cli.main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_method_and_trials(cfg_path, tmp_path):
    base = ["mc", "--config", str(cfg_path), "--out", str(tmp_path / "m.csv")]
    assert cli.main(base + ["--method", "nc,xx"]) == 2
    assert cli.main(base + ["--trials", "0"]) == 2
