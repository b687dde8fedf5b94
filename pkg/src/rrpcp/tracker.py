"""Per-frame recovery of the sparse part given a tracked principal subspace.

Every step function takes the current frame and a :class:`TrackerState`
and returns ``(StepOutput, TrackerState)``; the input state is not mutated.
The four variants differ only in how the l1 problem is posed:

``nc``     noise-canceled: fit ``P_perp^T (M_t - s - f L_hat_{t-1})``
``basic``  fit ``P_perp^T (M_t - s)``
``modcs``  as ``nc`` but with a predicted support left unpenalized
``pj``     equality-constrained l1 over the stacked dictionary ``[P, P_perp, I]``
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import subspace as sub
from .l1solver import (
    DEFAULT_TOL,
    L1Problem,
    SolverReport,
    SolverTolerances,
    restricted_least_squares,
    solve_bp_eq,
    solve_bpdn,
)

__all__ = [
    "METHODS",
    "TrackerParams",
    "TrackerState",
    "StepOutput",
    "init_state",
    "step",
    "step_noise_canceled",
    "step_basic",
    "step_modcs",
    "step_pj",
    "expected_noise_energy",
]

_logger = logging.getLogger(__name__)

METHODS = ("nc", "basic", "pj", "modcs")


@dataclass(frozen=True)
class TrackerParams:
    f: float = 0.9
    gamma: float = 2.5
    eps_floor: float | None = None  # None -> 1e-6 * m
    eps_scale: float = 2.0
    eps_window: int = 1  # frames of residual energy averaged into eps; 1 = last frame only
    subspace: sub.SubspaceParams = field(default_factory=sub.SubspaceParams)
    tol: SolverTolerances = DEFAULT_TOL

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.eps_floor is not None and self.eps_floor <= 0:
            raise ValueError("eps_floor must be positive")
        if self.eps_window < 1:
            raise ValueError("eps_window must be >= 1")

    def floor(self, m: int) -> float:
        return 1e-6 * m if self.eps_floor is None else self.eps_floor


@dataclass
class TrackerState:
    subspace: sub.SubspaceEstimate
    P_perp: np.ndarray
    L_hat_prev: np.ndarray
    L_hat_prev2: np.ndarray
    beta_hat_prev: np.ndarray
    beta_hat_prev2: np.ndarray
    perp_version: int = 0
    t: int = 0
    noise_hist: tuple = ()  # recent history-noise energies, newest last

    @property
    def m(self) -> int:
        return self.P_perp.shape[0]


@dataclass
class StepOutput:
    S_hat: np.ndarray
    L_hat: np.ndarray
    T_hat: np.ndarray
    eps_used: float
    residual_sq: float
    S_raw: np.ndarray
    report: SolverReport | None = None
    beta_sq: float = 0.0  # ||P_perp^T L_hat_t||^2
    beta_resid_sq: float = 0.0  # ||P_perp^T (L_hat_t - f L_hat_{t-1})||^2
    flags: list = field(default_factory=list)
    subspace_events: list = field(default_factory=list)
    status: str = "stable"
    rank: int = 0


def init_state(P0, G0, L_prev=None, L_prev2=None, params: TrackerParams | None = None,
               t: int = 0) -> TrackerState:
    """Tracker state right after training.

    ``L_prev`` and ``L_prev2`` seed the background history (typically the last
    two training frames); zeros when not given.
    """
    params = params or TrackerParams()
    P0 = np.asarray(P0, dtype=float)
    m = P0.shape[0]
    est = sub.SubspaceEstimate.from_training(P0, G0, params.subspace)
    P_perp = sub.orth_complement(est.basis)
    L1 = np.zeros(m) if L_prev is None else np.asarray(L_prev, dtype=float)
    L2 = np.zeros(m) if L_prev2 is None else np.asarray(L_prev2, dtype=float)
    return TrackerState(
        subspace=est,
        P_perp=P_perp,
        L_hat_prev=L1,
        L_hat_prev2=L2,
        beta_hat_prev=P_perp.T @ L1,
        beta_hat_prev2=P_perp.T @ L2,
        perp_version=est.version,
        t=t,
    )


def _advance_subspace(state: TrackerState, params: TrackerParams):
    f = params.f
    diff = state.L_hat_prev - f * state.L_hat_prev2
    beta_prev_sq = float(state.beta_hat_prev @ state.beta_hat_prev)
    est, P_hat = sub.update(state.subspace, diff, beta_prev_sq, params.subspace)
    if est.version != state.perp_version:
        P_perp = sub.orth_complement(P_hat)
    else:
        P_perp = state.P_perp
    return est, P_perp


def _refine(S_raw, A, b, gamma):
    T_hat = np.flatnonzero(S_raw >= gamma)
    ls = restricted_least_squares(A, T_hat, b)
    flags = []
    if T_hat.size > A.shape[0]:
        flags.append("support_exceeds_measurements")
    elif ls.ill_conditioned:
        flags.append("ill_conditioned_ls")
    return ls.solution, T_hat, flags


def _finish(M, S_raw, A, b, b_ls, eps, report, state, est, P_perp, params, extra_flags=()):
    f = params.f
    S_hat, T_hat, flags = _refine(S_raw, A, b_ls, params.gamma)
    flags = list(extra_flags) + flags
    if report is not None and not report.converged:
        flags.append("solver_not_converged")
    L_hat = M - S_hat
    beta_hat = P_perp.T @ L_hat
    resid = P_perp.T @ (L_hat - f * state.L_hat_prev)
    out = StepOutput(
        S_hat=S_hat,
        L_hat=L_hat,
        T_hat=T_hat,
        eps_used=eps,
        residual_sq=float(np.sum((A @ S_hat - b) ** 2)),
        S_raw=S_raw,
        report=report,
        beta_sq=float(beta_hat @ beta_hat),
        beta_resid_sq=float(resid @ resid),
        flags=flags,
        subspace_events=list(est.events),
        status=est.status.value,
        rank=est.rank,
    )
    new_state = TrackerState(
        subspace=est,
        P_perp=P_perp,
        L_hat_prev=L_hat,
        L_hat_prev2=state.L_hat_prev,
        beta_hat_prev=beta_hat,
        beta_hat_prev2=state.beta_hat_prev,
        perp_version=est.version,
        t=state.t + 1,
    )
    return out, new_state


def _solve(prob: L1Problem, tol):
    report = solve_bpdn(prob, tol)
    if not report.converged:
        _logger.warning("l1 solve did not certify optimality (gap %.3e)", report.gap)
    return report


def _cs_step(M_t, state, params, canceled: bool, excluded=()):
    M_t = np.asarray(M_t, dtype=float)
    f = params.f
    est, P_perp = _advance_subspace(state, params)
    A = P_perp.T
    if canceled:
        b = A @ (M_t - f * state.L_hat_prev)
        noise = A @ (state.L_hat_prev - f * state.L_hat_prev2)
    else:
        b = A @ M_t
        noise = A @ state.L_hat_prev
    hist = (state.noise_hist + (float(noise @ noise),))[-params.eps_window:]
    eps = max(params.eps_scale * float(np.mean(hist)), params.floor(len(M_t)))
    report = _solve(L1Problem(A, b, eps, excluded), params.tol)
    out, new_state = _finish(M_t, report.solution, A, b, b, eps, report, state, est, P_perp, params)
    new_state.noise_hist = hist
    return out, new_state


def step_noise_canceled(M_t, state: TrackerState, params: TrackerParams):
    """Recover ``S_t`` using the AR prediction ``f L_hat_{t-1}`` to cancel background leakage."""
    return _cs_step(M_t, state, params, canceled=True)


def step_basic(M_t, state: TrackerState, params: TrackerParams):
    return _cs_step(M_t, state, params, canceled=False)


def step_modcs(M_t, T_pred: Iterable[int], state: TrackerState, params: TrackerParams):
    """Noise-canceled step with ``T_pred`` exempt from the l1 penalty."""
    return _cs_step(M_t, state, params, canceled=True, excluded=np.asarray(list(T_pred), dtype=int))


def step_pj(M_t, state: TrackerState, params: TrackerParams):
    """Baseline: l1 over coefficients and foreground jointly, equality constrained.

    The recovered foreground then goes through the same threshold and
    least-squares refinement as the other variants, fitted against
    ``P_perp^T M_t``.
    """
    M_t = np.asarray(M_t, dtype=float)
    m = len(M_t)
    est, P_perp = _advance_subspace(state, params)
    dictionary = np.hstack([est.basis, P_perp, np.eye(m)])
    report = solve_bp_eq(dictionary, M_t, params.tol)
    if not report.converged:
        _logger.debug("PJ solve did not certify optimality (gap %.3e)", report.gap)
    S_raw = report.solution[-m:]
    A = P_perp.T
    b = A @ M_t
    return _finish(M_t, S_raw, A, b, b, 0.0, report, state, est, P_perp, params)


def step(method: str, M_t, state: TrackerState, params: TrackerParams, T_pred=()):
    if method == "nc":
        return step_noise_canceled(M_t, state, params)
    if method == "basic":
        return step_basic(M_t, state, params)
    if method == "modcs":
        return step_modcs(M_t, T_pred, state, params)
    if method == "pj":
        return step_pj(M_t, state, params)
    raise ValueError(f"unknown method {method!r}")


def expected_noise_energy(B_diag, sigma_sq_on_delta, theta: float, f: float, dt: int):
    """Expected ``||beta_t||^2`` and ``||beta_t - f beta_hat_{t-1}||^2``, ``dt`` frames after an addition.

    ``B_diag`` is the per-direction coupling ``||P_perp^T u_i||^2`` of each
    added direction ``u_i`` into the estimated complement.
    """
    if dt < 1:
        raise ValueError("dt must be >= 1")
    B = np.asarray(B_diag, dtype=float)
    s2 = np.asarray(sigma_sq_on_delta, dtype=float)
    weight = float(np.sum(B * s2))
    e_plain = (1.0 - (1.0 - theta) * f ** (2 * dt)) * weight
    e_canceled = (1.0 - f**2) * weight
    return e_plain, e_canceled
