"""Configuration documents, CSV metric files and the binary dataset layout."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import struct
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .l1solver import SolverTolerances
from .model import Dataset, ScenarioConfig, SupportEvent
from .subspace import SubspaceParams
from .tracker import METHODS, TrackerParams

__all__ = [
    "RUN_COLUMNS",
    "scenario_from_dict",
    "scenario_to_dict",
    "tracker_from_dict",
    "tracker_to_dict",
    "load_config",
    "format_float",
    "parse_float",
    "write_run_csv",
    "read_run_csv",
    "write_mc_csv",
    "read_mc_csv",
    "write_dataset_csv",
    "write_dataset_bin",
    "read_dataset_bin",
]

RUN_COLUMNS = (
    "t",
    "method",
    "percentage_error",
    "beta_sq",
    "beta_resid_sq",
    "eps_used",
    "rank_est",
    "status",
    "support_size",
    "wall_ms",
)

DATASET_MAGIC = b"RRPCP1"


def scenario_from_dict(d: dict[str, Any]) -> ScenarioConfig:
    d = dict(d)
    d["events"] = tuple(
        SupportEvent(time=int(e["time"]), add=tuple(e.get("add", ())), delete=tuple(e.get("delete", ())))
        for e in d.get("events", ())
    )
    d["sigma_sq"] = tuple(d["sigma_sq"])
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
    return ScenarioConfig(**d)


def scenario_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    d = dataclasses.asdict(cfg)
    d["sigma_sq"] = list(cfg.sigma_sq)
    d["events"] = [{"time": e.time, "add": list(e.add), "delete": list(e.delete)} for e in cfg.events]
    return d


def _subset(cls, d: dict[str, Any]):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**d)


def tracker_from_dict(d: dict[str, Any] | None, f: float) -> TrackerParams:
    d = dict(d or {})
    f = d.pop("f", f)
    sp = dict(d.pop("subspace", {}))
    sp.setdefault("f", f)
    tol = d.pop("tol", {})
    return _subset(
        TrackerParams,
        dict(d, f=f, subspace=_subset(SubspaceParams, sp), tol=_subset(SolverTolerances, tol)),
    )


def tracker_to_dict(p: TrackerParams) -> dict[str, Any]:
    return dataclasses.asdict(p)


def load_config(path: str | Path) -> dict[str, Any]:
    """Read a run document.

    Either a bare scenario (ScenarioConfig field names at top level) or an
    object with ``scenario`` and optional ``tracker``, ``methods``,
    ``trials``, ``master_seed`` and ``modcs_oracle`` keys.
    """
    doc = json.loads(Path(path).read_text())
    if "scenario" not in doc:
        doc = {"scenario": doc}
    scenario = scenario_from_dict(doc["scenario"])
    tracker = tracker_from_dict(doc.get("tracker"), scenario.f)
    methods = tuple(doc.get("methods", ("nc", "basic", "pj")))
    bad = set(methods) - set(METHODS)
    if bad or not methods:
        raise ValueError(f"methods must be a nonempty subset of {METHODS}")
    return {
        "scenario": scenario,
        "tracker": tracker,
        "methods": methods,
        "trials": int(doc.get("trials", 1)),
        "master_seed": int(doc.get("master_seed", scenario.seed)),
        "modcs_oracle": bool(doc.get("modcs_oracle", False)),
    }


def format_float(x) -> str:
    """17 significant digits; NaN becomes the empty (null) field."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return format(float(x), ".17g")


def parse_float(s: str) -> float:
    return float("nan") if s == "" else float(s)


def write_run_csv(path, rows: Iterable[dict[str, Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUN_COLUMNS)
        for r in rows:
            w.writerow(
                [
                    int(r["t"]),
                    r["method"],
                    format_float(r["percentage_error"]),
                    format_float(r["beta_sq"]),
                    format_float(r["beta_resid_sq"]),
                    format_float(r["eps_used"]),
                    int(r["rank_est"]),
                    r["status"],
                    int(r["support_size"]),
                    format_float(r["wall_ms"]),
                ]
            )


def read_run_csv(path) -> list[dict[str, Any]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != RUN_COLUMNS:
            raise ValueError(f"unexpected header {header}")
        out = []
        for row in reader:
            r = dict(zip(header, row))
            out.append(
                {
                    "t": int(r["t"]),
                    "method": r["method"],
                    "percentage_error": parse_float(r["percentage_error"]),
                    "beta_sq": parse_float(r["beta_sq"]),
                    "beta_resid_sq": parse_float(r["beta_resid_sq"]),
                    "eps_used": parse_float(r["eps_used"]),
                    "rank_est": int(r["rank_est"]),
                    "status": r["status"],
                    "support_size": int(r["support_size"]),
                    "wall_ms": parse_float(r["wall_ms"]),
                }
            )
        return out


def write_mc_csv(path, t: np.ndarray, stats: dict[str, dict[str, np.ndarray]]) -> None:
    """Wide per-frame table: ``t`` then ``<method>_mean, <method>_stderr, <method>_n``."""
    methods = list(stats)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"{m}_{k}" for m in methods for k in ("mean", "stderr", "n")])
        for j, tj in enumerate(t):
            row = [int(tj)]
            for m in methods:
                row += [
                    format_float(stats[m]["mean"][j]),
                    format_float(stats[m]["stderr"][j]),
                    int(stats[m]["n"][j]),
                ]
            w.writerow(row)


def read_mc_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    t = np.array([int(r[0]) for r in rows])
    stats: dict[str, dict[str, np.ndarray]] = {}
    for col, name in enumerate(header[1:], start=1):
        method, key = name.rsplit("_", 1)
        conv = int if key == "n" else parse_float
        stats.setdefault(method, {})[key] = np.array([conv(r[col]) for r in rows])
    return t, stats


def write_dataset_csv(path, data: Dataset) -> None:
    """One row per frame: ``t`` then the ``m`` values of M, of L and of S."""
    m = data.cfg.m
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"{p}{i}" for p in ("M", "L", "S") for i in range(m)])
        for fr in data.frames:
            w.writerow([fr.t] + [format_float(v) for v in np.concatenate([fr.M, fr.L, fr.S])])


def write_dataset_bin(path, data: Dataset) -> None:
    """Little-endian: ``b"RRPCP1"``, u32 m, u32 T, then per frame M|L|S as float64."""
    m, T = data.cfg.m, len(data.frames)
    block = np.empty((T, 3, m), dtype="<f8")
    for j, fr in enumerate(data.frames):
        block[j, 0], block[j, 1], block[j, 2] = fr.M, fr.L, fr.S
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC + struct.pack("<II", m, T))
        fh.write(block.tobytes())


def read_dataset_bin(path):
    """Returns ``(M, L, S)`` as ``T x m`` arrays."""
    raw = Path(path).read_bytes()
    if raw[:6] != DATASET_MAGIC:
        raise ValueError("bad magic; not an RRPCP1 dataset")
    m, T = struct.unpack_from("<II", raw, 6)
    block = np.frombuffer(raw, dtype="<f8", offset=14, count=3 * m * T).reshape(T, 3, m)
    return block[:, 0].copy(), block[:, 1].copy(), block[:, 2].copy()
