"""Command-line entry point: ``rrpcp {generate,run,mc,validate,noise-curve}``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import io
from .harness import RunConfig, noise_energy_curve, run_monte_carlo, run_single
from .model import generate_sequence
from .tracker import METHODS

_logger = logging.getLogger("rrpcp")


class UsageError(Exception):
    pass


def resolve_config(name: str) -> Path:
    """A path on disk, or the name of a bundled config (``paper.json``, ``paper-fast``)."""
    p = Path(name)
    if p.exists():
        return p
    stem = p.name if p.suffix == ".json" else p.name + ".json"
    bundled = resources.files("rrpcp") / "configs" / stem
    if bundled.is_file():
        return Path(str(bundled))
    raise UsageError(f"config not found: {name}")


def _load(args) -> RunConfig:
    doc = io.load_config(resolve_config(args.config))
    cfg = RunConfig(**doc)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, scenario=cfg.scenario.with_seed(args.seed), master_seed=args.seed)
    if getattr(args, "method", None):
        methods = tuple(m for group in args.method for m in group.split(",") if m)
        bad = set(methods) - set(METHODS)
        if bad:
            raise UsageError(f"unknown method(s) {sorted(bad)}; choose from {', '.join(METHODS)}")
        cfg = replace(cfg, methods=methods)
    if getattr(args, "trials", None) is not None:
        if args.trials < 1:
            raise UsageError("--trials must be >= 1")
        cfg = replace(cfg, trials=args.trials)
    return cfg


def cmd_generate(args) -> int:
    cfg = _load(args)
    data = generate_sequence(cfg.scenario)
    out = Path(args.out)
    if out.suffix == ".csv":
        io.write_dataset_csv(out, data)
    else:
        io.write_dataset_bin(out, data)
    print(f"wrote {len(data.frames)} frames (m={cfg.scenario.m}) to {out}")
    return 0


def _summary(trace, t0) -> str:
    e = trace.percentage_error
    with np.errstate(all="ignore"):
        mean = np.nanmean(e) if np.any(~np.isnan(e)) else float("nan")
    return (f"{trace.method}: mean error {mean:.4g}, median frame {np.nanmedian(trace.wall_ms):.3g} ms, "
            f"final rank {trace.rank_est[-1]}, flagged frames {len({t for t, _ in trace.flags})}")


def cmd_run(args) -> int:
    cfg = _load(args)
    metrics = run_single(cfg)
    io.write_run_csv(args.out, metrics.rows())
    for tr in metrics.traces.values():
        print(_summary(tr, cfg.scenario.t0))
    return 0


def cmd_mc(args) -> int:
    cfg = _load(args)

    def progress(done, total):
        _logger.info("trial %d/%d", done, total)

    result = run_monte_carlo(cfg, workers=args.workers, progress=progress)
    io.write_mc_csv(args.out, result.t, result.stats)
    if args.archive:
        arch = Path(args.archive)
        arch.mkdir(parents=True, exist_ok=True)
        for i, r in enumerate(result.trials):
            io.write_run_csv(arch / f"trial_{i:04d}.csv", r.rows())
    for m, st in result.stats.items():
        print(f"{m}: mean error over frames {np.nanmean(st['mean']):.4g} ({cfg.trials} trials)")
    return 0


def cmd_validate(args) -> int:
    from .validation import run_all

    results = run_all(seed=args.seed or 0, n_instances=args.instances)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def cmd_noise_curve(args) -> int:
    if args.dt_max < 1:
        raise UsageError("--dt-max must be >= 1")
    if not 0.0 < args.f < 1.0 or not 0.0 < args.theta < 1.0:
        raise UsageError("--f and --theta must lie in (0, 1)")
    curve = noise_energy_curve(args.f, args.theta, args.dt_max, args.trials, args.seed or 0)
    header = ["dt", "analytic_plain", "analytic_canceled", "empirical_plain", "empirical_canceled",
              "stderr_plain", "stderr_canceled"]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(header)
        for j, dt in enumerate(curve.dt):
            w.writerow([int(dt)] + [io.format_float(getattr(curve, k)[j]) for k in header[1:]])
    finally:
        if args.out:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rrpcp", description="Online low-rank plus sparse recovery experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, out=True):
        sp.add_argument("--config", required=True, help="JSON config path or bundled name (paper, paper-fast)")
        sp.add_argument("--seed", type=int, help="override scenario seed and master seed")
        if out:
            sp.add_argument("--out", required=True, help="output file")

    g = sub.add_parser("generate", help="write a synthetic dataset (.csv or binary)")
    with_config(g)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="single run, per-frame CSV")
    with_config(r)
    r.add_argument("--method", action="append", help=f"one of {', '.join(METHODS)}; repeat or comma-separate")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("mc", help="Monte Carlo run, per-frame mean and standard error")
    with_config(m)
    m.add_argument("--method", action="append")
    m.add_argument("--trials", type=int)
    m.add_argument("--workers", type=int, help="worker processes (default: RRPCP_THREADS or CPU count)")
    m.add_argument("--archive", help="directory for per-trial CSV files")
    m.set_defaults(func=cmd_mc)

    v = sub.add_parser("validate", help="solver oracle and invariant suites")
    v.add_argument("--seed", type=int)
    v.add_argument("--instances", type=int, default=100)
    v.set_defaults(func=cmd_validate)

    n = sub.add_parser("noise-curve", help="analytic vs oracle Monte Carlo noise energies")
    n.add_argument("--f", type=float, default=0.9)
    n.add_argument("--theta", type=float, default=0.4)
    n.add_argument("--dt-max", type=int, default=30)
    n.add_argument("--trials", type=int, default=20000)
    n.add_argument("--seed", type=int)
    n.add_argument("--out", help="CSV path (default: stdout)")
    n.set_defaults(func=cmd_noise_curve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the usage line
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rrpcp: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"rrpcp: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
