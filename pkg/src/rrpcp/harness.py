"""End-to-end runs, method comparison and Monte Carlo averaging."""
from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import tracker as trk
from .model import (
    Dataset,
    ScenarioConfig,
    SupportEvent,
    assemble_transition,
    build_mixing_matrix,
    generate_sequence,
)
from .subspace import orth_complement, train_initial
from .tracker import TrackerParams

__all__ = [
    "RunConfig",
    "MethodTrace",
    "Timeline",
    "RunMetrics",
    "MonteCarloResult",
    "percentage_error",
    "trial_seed",
    "run_single",
    "run_on_dataset",
    "run_monte_carlo",
    "extract_timeline",
    "NoiseCurve",
    "noise_energy_curve",
]

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig
    tracker: TrackerParams
    methods: tuple[str, ...] = ("nc", "basic", "pj")
    modcs_oracle: bool = False
    trials: int = 1
    master_seed: int = 0

    def __post_init__(self):
        if not self.methods:
            raise ValueError("at least one method is required")
        bad = set(self.methods) - set(trk.METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    @classmethod
    def from_document(cls, doc: dict) -> "RunConfig":
        return cls(**doc)


def percentage_error(S_true, S_hat) -> float:
    """``||S - S_hat|| / ||S||``; NaN (the null marker) when ``S`` is zero."""
    S_true = np.asarray(S_true, dtype=float)
    den = np.linalg.norm(S_true)
    if den == 0.0:
        return float("nan")
    return float(np.linalg.norm(S_true - np.asarray(S_hat, dtype=float)) / den)


def trial_seed(master_seed: int, i: int) -> int:
    """Seed of trial ``i``; depends only on ``(master_seed, i)``."""
    return int(np.random.SeedSequence([int(master_seed), int(i)]).generate_state(1)[0])


@dataclass
class MethodTrace:
    method: str
    t: np.ndarray
    percentage_error: np.ndarray
    beta_sq: np.ndarray
    beta_resid_sq: np.ndarray
    eps_used: np.ndarray
    rank_est: np.ndarray
    status: list[str]
    support_size: np.ndarray
    wall_ms: np.ndarray
    false_positives: np.ndarray  # |T_hat| on frames without foreground, else 0
    coh_new: np.ndarray  # max |P_hat^T u| over added directions
    coh_del: np.ndarray  # ||P_hat^T u|| for the decaying direction
    events: list[tuple[int, str]] = field(default_factory=list)
    flags: list[tuple[int, str]] = field(default_factory=list)

    def rows(self):
        for j in range(len(self.t)):
            yield {
                "t": int(self.t[j]),
                "method": self.method,
                "percentage_error": float(self.percentage_error[j]),
                "beta_sq": float(self.beta_sq[j]),
                "beta_resid_sq": float(self.beta_resid_sq[j]),
                "eps_used": float(self.eps_used[j]),
                "rank_est": int(self.rank_est[j]),
                "status": self.status[j],
                "support_size": int(self.support_size[j]),
                "wall_ms": float(self.wall_ms[j]),
            }


@dataclass
class Timeline:
    """When the subspace tracker reacted to the scheduled events (NaN if never)."""

    add_time: float = np.nan
    detection_time: float = np.nan
    first_estimate_time: float = np.nan
    merge_time: float = np.nan
    merge_coherence: float = np.nan
    delete_time: float = np.nan
    removal_time: float = np.nan


@dataclass
class RunMetrics:
    seed: int
    traces: dict[str, MethodTrace]
    timelines: dict[str, Timeline]

    def rows(self):
        for tr in self.traces.values():
            yield from tr.rows()


@dataclass
class MonteCarloResult:
    t: np.ndarray
    stats: dict[str, dict[str, np.ndarray]]
    trials: list[RunMetrics]


def _scheduled_directions(cfg: ScenarioConfig):
    """First post-training addition and deletion events: (time, indices)."""
    add = next(((e.time, e.add) for e in cfg.events if e.time > cfg.t0 and e.add), (None, ()))
    dele = next(((e.time, e.delete) for e in cfg.events if e.time > cfg.t0 and e.delete), (None, ()))
    return add, dele


def extract_timeline(trace: MethodTrace, cfg: ScenarioConfig) -> Timeline:
    (t_add, _), (t_del, _) = _scheduled_directions(cfg)
    tl = Timeline()
    t = trace.t
    if t_add is not None:
        tl.add_time = t_add
        after = t >= t_add
        busy = np.flatnonzero(after & (np.array(trace.status) != "stable"))
        if busy.size:
            tl.detection_time = float(t[busy[0]])
        for tt, ev in trace.events:
            if tt < t_add:
                continue
            if ev.startswith("detected:") and ev != "detected:0" and np.isnan(tl.first_estimate_time):
                tl.first_estimate_time = tt
            if ev.startswith("merged") and np.isnan(tl.merge_time):
                tl.merge_time = tt
                tl.merge_coherence = float(trace.coh_new[np.searchsorted(t, tt)])
    if t_del is not None:
        tl.delete_time = t_del
        gone = np.flatnonzero((t > t_del) & (trace.coh_del ** 2 < 0.5))
        if gone.size:
            tl.removal_time = float(t[gone[0]])
    return tl


def run_on_dataset(data: Dataset, params: TrackerParams, methods, modcs_oracle: bool = False,
                   seed: int = 0) -> RunMetrics:
    """Train on frames ``1..t0`` and stream the rest through each method."""
    cfg = data.cfg
    t0 = cfg.t0
    if t0 < 2:
        raise ValueError("need at least two training frames")
    M_train = data.stack("M", 1, t0)
    P0, G0 = train_initial(M_train, params.f, params.subspace)
    (_, add_idx), (_, del_idx) = _scheduled_directions(cfg)
    U_add = data.U[:, list(add_idx)]
    U_del = data.U[:, list(del_idx)]

    traces, timelines = {}, {}
    stream = data.frames[t0:]
    n = len(stream)
    for method in methods:
        state = trk.init_state(P0, G0, data.frames[t0 - 1].M, data.frames[t0 - 2].M, params, t=t0)
        cols = {k: np.full(n, np.nan) for k in (
            "percentage_error", "beta_sq", "beta_resid_sq", "eps_used", "wall_ms", "coh_new", "coh_del")}
        rank = np.zeros(n, dtype=int)
        support = np.zeros(n, dtype=int)
        fp = np.zeros(n, dtype=int)
        status: list[str] = []
        events, flags = [], []
        T_prev = np.zeros(0, dtype=int)
        for j, fr in enumerate(stream):
            T_pred = fr.T_t if modcs_oracle else T_prev
            tic = time.perf_counter()
            try:
                out, state = trk.step(method, fr.M, state, params, T_pred=T_pred)
            except Exception as exc:  # keep the run alive; record the failure
                _logger.exception("frame %d (%s) failed", fr.t, method)
                flags.append((fr.t, f"error:{type(exc).__name__}"))
                status.append(state.subspace.status.value)
                rank[j] = state.subspace.rank
                continue
            cols["wall_ms"][j] = 1e3 * (time.perf_counter() - tic)
            cols["percentage_error"][j] = percentage_error(fr.S, out.S_hat)
            cols["beta_sq"][j] = out.beta_sq
            cols["beta_resid_sq"][j] = out.beta_resid_sq
            cols["eps_used"][j] = out.eps_used
            rank[j] = out.rank
            support[j] = out.T_hat.size
            if not fr.S.any():
                fp[j] = out.T_hat.size
            status.append(out.status)
            events += [(fr.t, e) for e in out.subspace_events]
            flags += [(fr.t, fl) for fl in out.flags]
            basis = state.subspace.basis
            if U_add.shape[1]:
                cols["coh_new"][j] = float(np.max(np.abs(basis.T @ U_add))) if basis.shape[1] else 0.0
            if U_del.shape[1]:
                cols["coh_del"][j] = float(np.linalg.norm(basis.T @ U_del[:, 0]))
            T_prev = out.T_hat
        tr = MethodTrace(
            method=method,
            t=np.array([fr.t for fr in stream]),
            rank_est=rank,
            status=status,
            support_size=support,
            false_positives=fp,
            events=events,
            flags=flags,
            **cols,
        )
        traces[method] = tr
        timelines[method] = extract_timeline(tr, cfg)
    return RunMetrics(seed=seed, traces=traces, timelines=timelines)


def run_single(cfg: RunConfig, trial_seed_: int | None = None) -> RunMetrics:
    seed = cfg.scenario.seed if trial_seed_ is None else int(trial_seed_)
    data = generate_sequence(cfg.scenario.with_seed(seed))
    return run_on_dataset(data, cfg.tracker, cfg.methods, cfg.modcs_oracle, seed=seed)


def _run_trial(args):
    cfg, i = args
    return run_single(cfg, trial_seed(cfg.master_seed, i))


def _workers(trials: int, workers: int | None) -> int:
    if workers is None:
        env = os.environ.get("RRPCP_THREADS")
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(int(workers), trials))


def aggregate(trials: list[RunMetrics], methods) -> tuple[np.ndarray, dict]:
    """Per-frame mean and standard error of the percentage error across trials."""
    t = trials[0].traces[methods[0]].t
    stats = {}
    for m in methods:
        E = np.vstack([r.traces[m].percentage_error for r in trials])
        valid = ~np.isnan(E)
        n = valid.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = np.where(n > 0, np.nansum(E, axis=0) / np.maximum(n, 1), np.nan)
            if E.shape[0] > 1:
                sd = np.sqrt(np.nansum((E - mean) ** 2, axis=0) / np.maximum(n - 1, 1))
                stderr = np.where(n > 1, sd / np.sqrt(np.maximum(n, 1)), np.nan)
            else:
                stderr = np.full(E.shape[1], np.nan)
        stats[m] = {"mean": mean, "stderr": stderr, "n": n}
    return t, stats


def run_monte_carlo(cfg: RunConfig, workers: int | None = None, progress=None) -> MonteCarloResult:
    """Independent trials seeded from ``(master_seed, i)``, averaged per frame."""
    jobs = [(cfg, i) for i in range(cfg.trials)]
    nw = _workers(cfg.trials, workers)
    results: list[RunMetrics] = []
    if nw == 1:
        for job in jobs:
            results.append(_run_trial(job))
            if progress:
                progress(len(results), cfg.trials)
    else:
        with ProcessPoolExecutor(max_workers=nw) as pool:
            for r in pool.map(_run_trial, jobs):
                results.append(r)
                if progress:
                    progress(len(results), cfg.trials)
    t, stats = aggregate(results, cfg.methods)
    return MonteCarloResult(t=t, stats=stats, trials=results)


def with_trials(cfg: RunConfig, trials: int) -> RunConfig:
    return replace(cfg, trials=int(trials))


@dataclass
class NoiseCurve:
    """Noise energies after an addition, normalized by ``sum_i B_ii sigma_i^2``."""

    dt: np.ndarray
    analytic_plain: np.ndarray
    analytic_canceled: np.ndarray
    empirical_plain: np.ndarray
    empirical_canceled: np.ndarray
    stderr_plain: np.ndarray
    stderr_canceled: np.ndarray
    trials: int


def noise_energy_curve(f: float = 0.9, theta: float = 0.4, dt_max: int = 30, trials: int = 20000,
                       seed: int = 0, m: int = 8) -> NoiseCurve:
    """Oracle-mode Monte Carlo of ``||beta_t||^2`` and ``||beta_t - f beta_{t-1}||^2``.

    The estimated subspace is the exact span of the directions present
    before the addition, and the previous background is known exactly, so
    the only leakage comes from the newly added direction. All trials are
    propagated together through the generator's own transition matrices.
    """
    if dt_max < 1:
        raise ValueError("dt_max must be >= 1")
    if trials < 2:
        raise ValueError("need at least two trials for a standard error")
    tau = 2
    old, new = (0, 2), (1,)
    sigma_sq = np.zeros(m)
    sigma_sq[:3] = (4.0, 2.0, 1.0)
    cfg = ScenarioConfig(
        m=m, frame_h=1, frame_w=m, f=f, f_d=f / 2, theta=theta, sigma_sq=tuple(sigma_sq),
        events=(SupportEvent(time=1, add=old), SupportEvent(time=tau, add=new)),
        t0=tau - 1, T_total=tau + dt_max, k_objects=0, seed=seed,
    )
    s_u, s_x = np.random.SeedSequence(seed).spawn(2)
    U = build_mixing_matrix(m, s_u)
    P_perp = orth_complement(U[:, list(old)])
    B = np.sum((P_perp.T @ U[:, list(new)]) ** 2, axis=0)
    weight = float(np.sum(B * sigma_sq[list(new)]))

    rng = np.random.default_rng(s_x)
    events = {e.time: e for e in cfg.events}
    support: set[int] = set()
    X = np.zeros((m, trials))
    beta_prev = None
    plain, canceled = [], []
    for t in range(1, cfg.T_total + 1):
        ev = events.get(t)
        F, Q = assemble_transition(support, ev, cfg)
        X = F[:, None] * X + np.sqrt(Q)[:, None] * rng.standard_normal((m, trials))
        if ev is not None:
            support |= set(ev.add)
        beta = P_perp.T @ (U @ X)
        if t > tau:
            plain.append(np.sum(beta**2, axis=0) / weight)
            canceled.append(np.sum((beta - f * beta_prev) ** 2, axis=0) / weight)
        beta_prev = beta
    plain, canceled = np.array(plain), np.array(canceled)
    dt = np.arange(1, dt_max + 1)
    ana = np.array([expected_energy_ratio(f, theta, d) for d in dt])
    root_n = np.sqrt(trials)
    return NoiseCurve(
        dt=dt,
        analytic_plain=ana[:, 0],
        analytic_canceled=ana[:, 1],
        empirical_plain=plain.mean(axis=1),
        empirical_canceled=canceled.mean(axis=1),
        stderr_plain=plain.std(axis=1, ddof=1) / root_n,
        stderr_canceled=canceled.std(axis=1, ddof=1) / root_n,
        trials=trials,
    )


def expected_energy_ratio(f: float, theta: float, dt: int) -> tuple[float, float]:
    return trk.expected_noise_energy([1.0], [1.0], theta, f, dt)
