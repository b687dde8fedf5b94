"""Independent oracles and invariant suites behind the ``validate`` command."""
from __future__ import annotations

import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from . import io
from . import subspace as sub
from . import tracker as trk
from .harness import run_on_dataset
from .l1solver import L1Problem, solve_bpdn
from .model import ScenarioConfig, SupportEvent, generate_sequence

__all__ = [
    "CheckResult",
    "lp_l1_oracle",
    "random_instance",
    "check_solver_vs_lp",
    "check_projector_identity",
    "check_stream_invariants",
    "check_csv_roundtrip",
    "run_all",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _lp(w, A_eq=None, b_eq=None, cuts=None):
    """``min w^T (p + n)`` over ``s = p - n`` with optional linear constraints on ``s``."""
    q = len(w)
    c = np.concatenate([w, w])
    A_ub, b_ub = [], []
    if cuts is not None:
        for g, h in cuts:  # g^T s <= h
            A_ub.append(np.concatenate([g, -g]))
            b_ub.append(h)
    res = linprog(
        c,
        A_ub=np.array(A_ub) if A_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=None if A_eq is None else np.hstack([A_eq, -A_eq]),
        b_eq=b_eq,
        bounds=[(0, None)] * (2 * q),
        method="highs",
    )
    if res.status != 0:
        raise RuntimeError(f"LP oracle failed: {res.message}")
    return res.x[:q] - res.x[q:], float(res.fun)


def lp_l1_oracle(A, b, eps=0.0, excluded=(), rtol=1e-7, viol_tol=1e-6, max_cuts=2000) -> float:
    """Optimal weighted l1 value from linear programs only.

    ``eps == 0`` is a single LP. For ``eps > 0`` the ball constraint is
    replaced by tangent cuts added one at a time; each LP is a relaxation
    (lower bound) and the boundary point between its solution and the
    least-squares point is feasible (upper bound). Stops when the bounds
    agree to ``rtol`` or the relaxed solution violates the ball by at most
    ``viol_tol`` relative.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n, q = A.shape
    w = np.ones(q)
    w[list(excluded)] = 0.0
    if eps <= 0:
        return _lp(w, A_eq=A, b_eq=b)[1]
    if b @ b <= eps:
        return 0.0
    s_ls = np.linalg.lstsq(A, b, rcond=None)[0]
    if np.sum((A @ s_ls - b) ** 2) > eps:
        raise ValueError("infeasible instance")
    free = np.flatnonzero(w == 0)
    if free.size:
        c_free = np.linalg.lstsq(A[:, free], b, rcond=None)[0]
        if np.sum((A[:, free] @ c_free - b) ** 2) <= eps:
            return 0.0
    r_eps = np.sqrt(eps)
    cuts = []
    # a box of cuts along the measurement axes keeps the first LPs bounded
    for i in range(n):
        for sgn in (1.0, -1.0):
            g = sgn * A[i]
            cuts.append((g, r_eps + sgn * b[i]))
    upper = np.inf
    r0 = A @ s_ls - b
    prev, stalled = -np.inf, 0
    for _ in range(max_cuts):
        s, lower = _lp(w, cuts=cuts)
        viol = np.sum((A @ s - b) ** 2) / eps - 1.0
        # the relaxation is tight once its ball violation is at LP tolerance
        stalled = stalled + 1 if lower <= prev else 0
        prev = max(prev, lower)
        if viol <= viol_tol or (stalled >= 20 and viol <= 100 * viol_tol):
            return lower
        # boundary point on the segment from s_ls to s: feasible, so an upper
        # bound, and the tangent plane there is the next cut
        d = s - s_ls
        Ad = A @ d
        a2, a1, a0 = Ad @ Ad, 2 * (Ad @ r0), r0 @ r0 - eps
        lam = (-a1 + np.sqrt(max(a1 * a1 - 4 * a2 * a0, 0.0))) / (2 * a2)
        p = s_ls + lam * d
        upper = min(upper, float(np.abs(p) @ w))
        if upper - lower <= rtol * max(abs(upper), 1e-300):
            return 0.5 * (upper + lower)
        r = A @ p - b
        u = r / np.linalg.norm(r)
        cuts.append((A.T @ u, r_eps + u @ b))
    raise RuntimeError("cutting-plane oracle did not converge")


def random_instance(rng, kind: str, with_exclusions: bool):
    q = int(rng.integers(6, 26))
    n = int(rng.integers(3, q))
    A = rng.standard_normal((n, q))
    s0 = np.zeros(q)
    k = max(1, n // 3)
    s0[rng.choice(q, k, replace=False)] = rng.standard_normal(k) * 3
    noise = rng.standard_normal(n) * 0.1
    b = A @ s0 + noise
    eps = 0.0 if kind == "equality" else float(noise @ noise) * rng.uniform(0.5, 2.0)
    excl = tuple(rng.choice(q, int(rng.integers(1, 4)), replace=False)) if with_exclusions else ()
    return A, b, eps, excl


def check_solver_vs_lp(n_instances: int = 100, seed: int = 0, rtol: float = 1e-5) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    fails = 0
    for i in range(n_instances):
        kind = "equality" if i % 2 == 0 else "bpdn"
        A, b, eps, excl = random_instance(rng, kind, with_exclusions=(i // 2) % 2 == 1)
        ours = solve_bpdn(L1Problem(A, b, eps, excl)).objective
        ref = lp_l1_oracle(A, b, eps, excl)
        err = abs(ours - ref) / max(abs(ref), 1.0)
        worst = max(worst, err)
        fails += err > rtol
    return CheckResult(
        "solver matches LP oracle",
        fails == 0,
        f"{n_instances} instances, worst relative gap {worst:.2e} (tol {rtol:g})",
    )


def check_projector_identity(seed: int = 0, trials: int = 20) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        m = int(rng.integers(4, 64))
        r = int(rng.integers(0, m))
        P = np.linalg.qr(rng.standard_normal((m, max(r, 1))))[0][:, :r]
        Pp = sub.orth_complement(P)
        err = np.abs(P @ P.T + Pp @ Pp.T - np.eye(m)).max()
        err = max(err, np.abs(Pp.T @ Pp - np.eye(m - r)).max())
        worst = max(worst, err)
    return CheckResult("projector identity", worst < 1e-10, f"max deviation {worst:.2e}")


def _small_scenario(seed: int = 0) -> ScenarioConfig:
    m, t0 = 48, 300
    sigma = np.zeros(m)
    sigma[:7] = np.geomspace(400.0, 20.0, 7)
    return ScenarioConfig(
        m=m, frame_h=8, frame_w=6, f=0.9, f_d=0.1, theta=0.4, sigma_sq=tuple(sigma),
        events=(
            SupportEvent(time=1, add=(0, 1, 2, 4, 5, 6)),
            SupportEvent(time=t0 + 5, add=(3,)),
            SupportEvent(time=t0 + 60, delete=(1,)),
        ),
        t0=t0, T_total=t0 + 120, seed=seed,
    )


def check_stream_invariants(seed: int = 0) -> list[CheckResult]:
    """Additivity ``L_hat + S_hat = M`` and orthonormal bases on every frame of every method."""
    cfg = _small_scenario(seed)
    data = generate_sequence(cfg)
    params = trk.TrackerParams(gamma=1.5, eps_window=20)
    P0, G0 = sub.train_initial(data.stack("M", 1, cfg.t0), params.f, params.subspace)
    add_err = orth_err = perp_err = 0.0
    for method in trk.METHODS:
        state = trk.init_state(P0, G0, data.frames[cfg.t0 - 1].M, data.frames[cfg.t0 - 2].M, params)
        for fr in data.frames[cfg.t0:]:
            out, state = trk.step(method, fr.M, state, params, T_pred=fr.T_t)
            add_err = max(add_err, float(np.abs(out.L_hat - (fr.M - out.S_hat)).max()))
            B = state.subspace.basis
            if B.shape[1]:
                orth_err = max(orth_err, float(np.abs(B.T @ B - np.eye(B.shape[1])).max()))
            Pp = state.P_perp
            full = np.hstack([B, Pp])
            perp_err = max(perp_err, float(np.abs(full.T @ full - np.eye(cfg.m)).max()))
    return [
        CheckResult("L_hat = M - S_hat on every frame", add_err == 0.0, f"max |error| {add_err:.1e}"),
        CheckResult("orthonormal basis after every update", orth_err < 1e-10, f"max deviation {orth_err:.2e}"),
        CheckResult("complement consistent with basis", perp_err < 1e-10, f"max deviation {perp_err:.2e}"),
    ]


def check_csv_roundtrip(seed: int = 0) -> CheckResult:
    cfg = _small_scenario(seed)
    run = run_on_dataset(generate_sequence(cfg), trk.TrackerParams(gamma=1.5, eps_window=20), ("nc", "basic"))
    rows = list(run.rows())
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "run.csv"
        io.write_run_csv(path, rows)
        back = io.read_run_csv(path)
    ok = len(back) == len(rows)
    for a, b in zip(rows, back):
        for k in io.RUN_COLUMNS:
            x, y = a[k], b[k]
            if isinstance(x, float):
                ok &= (np.isnan(x) and np.isnan(y)) or x == y
            else:
                ok &= x == y
    return CheckResult("CSV round-trip is bit-exact", bool(ok), f"{len(rows)} rows")


def run_all(seed: int = 0, n_instances: int = 100) -> list[CheckResult]:
    results = [check_solver_vs_lp(n_instances, seed), check_projector_identity(seed)]
    results += check_stream_invariants(seed)
    results.append(check_csv_roundtrip(seed))
    return results
