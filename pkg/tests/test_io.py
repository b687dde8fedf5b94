import json

import numpy as np
import pytest

from conftest import small_scenario
from rrpcp import io
from rrpcp.harness import run_on_dataset
from rrpcp.model import generate_sequence
from rrpcp.tracker import TrackerParams


def test_scenario_dict_roundtrip():
    cfg = small_scenario()
    assert io.scenario_from_dict(io.scenario_to_dict(cfg)) == cfg
    with pytest.raises(ValueError):
        io.scenario_from_dict(dict(io.scenario_to_dict(cfg), colour="red"))


def test_load_config_forms(tmp_path):
    cfg = small_scenario()
    bare = tmp_path / "bare.json"
    bare.write_text(json.dumps(io.scenario_to_dict(cfg)))
    doc = io.load_config(bare)
    assert doc["scenario"] == cfg and doc["methods"] == ("nc", "basic", "pj") and doc["trials"] == 1
    full = tmp_path / "full.json"
    full.write_text(json.dumps({"scenario": io.scenario_to_dict(cfg), "methods": ["nc"],
                                "tracker": {"gamma": 1.5, "subspace": {"tau_d": 10}}, "trials": 4}))
    doc = io.load_config(full)
    assert doc["tracker"].gamma == 1.5 and doc["tracker"].subspace.tau_d == 10
    assert doc["tracker"].subspace.f == cfg.f and doc["trials"] == 4
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"scenario": io.scenario_to_dict(cfg), "tracker": {"gama": 1}}))
    with pytest.raises(ValueError):
        io.load_config(bad)


def test_float_format_roundtrip():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17, np.pi):
        assert io.parse_float(io.format_float(x)) == x
    assert io.format_float(float("nan")) == "" and np.isnan(io.parse_float(""))


def test_run_and_mc_csv_roundtrip(tmp_path):
    data = generate_sequence(small_scenario(horizon=30, delete_at=None))
    rows = list(run_on_dataset(data, TrackerParams(gamma=1.5), ("nc",)).rows())
    io.write_run_csv(tmp_path / "r.csv", rows)
    back = io.read_run_csv(tmp_path / "r.csv")
    assert [r["t"] for r in back] == [r["t"] for r in rows]
    assert all(a["percentage_error"] == b["percentage_error"] or np.isnan(a["percentage_error"])
               for a, b in zip(rows, back))
    t = np.arange(3)
    stats = {"nc": {"mean": np.array([0.1, np.nan, 0.3]), "stderr": np.array([0.01, np.nan, 0.2]),
                    "n": np.array([2, 0, 2])}}
    io.write_mc_csv(tmp_path / "m.csv", t, stats)
    t2, s2 = io.read_mc_csv(tmp_path / "m.csv")
    assert np.array_equal(t, t2)
    for k in ("mean", "stderr", "n"):
        assert np.array_equal(stats["nc"][k], s2["nc"][k], equal_nan=True)


def test_dataset_binary_roundtrip(tmp_path):
    data = generate_sequence(small_scenario(horizon=10, add_at=None, delete_at=None))
    io.write_dataset_bin(tmp_path / "d.bin", data)
    M, L, S = io.read_dataset_bin(tmp_path / "d.bin")
    assert np.array_equal(M, data.stack("M").T) and np.array_equal(S, data.stack("S").T)
    (tmp_path / "junk.bin").write_bytes(b"nothing here")
    with pytest.raises(ValueError):
        io.read_dataset_bin(tmp_path / "junk.bin")
