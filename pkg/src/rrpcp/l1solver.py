"""Weighted l1 minimization under a quadratic data-fit budget.

Solves ``min sum_{i not in excluded} |s_i|  s.t.  ||A s - b||^2 <= eps`` by
ADMM with an exact projection onto the constraint set (so every returned
iterate is feasible), and stops on a primal-dual gap certificate. A polish
step re-solves the problem restricted to the identified support in closed
form, which usually certifies optimality long before ADMM alone would.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.linalg

from . import kernels

__all__ = [
    "InfeasibleProblemError",
    "SolverTolerances",
    "L1Problem",
    "SolverReport",
    "solve_bpdn",
    "solve_bp_eq",
    "restricted_least_squares",
    "weighted_l1",
    "dual_bound",
]

_logger = logging.getLogger(__name__)


class InfeasibleProblemError(ValueError):
    """The data-fit budget cannot be met by any ``s``."""


@dataclass(frozen=True)
class SolverTolerances:
    feasibility_tol: float = 1e-14  # on residual_sq, relative to ||b||^2
    optimality_tol: float = 1e-5  # relative, on the objective
    max_iter: int = 100_000
    chunk: int = 50
    admm_tol_abs: float = 1e-13
    admm_tol_rel: float = 1e-11


DEFAULT_TOL = SolverTolerances()


@dataclass
class L1Problem:
    A: np.ndarray
    b: np.ndarray
    eps: float = 0.0
    excluded: Iterable[int] = ()

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.eps = float(self.eps)
        self.excluded = np.unique(np.asarray(list(self.excluded), dtype=int))
        n, q = self.A.shape
        if self.b.shape != (n,):
            raise ValueError(f"b has length {self.b.size}, expected {n}")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.excluded.size and (self.excluded.min() < 0 or self.excluded.max() >= q):
            raise ValueError("excluded indices out of range")

    @property
    def weights(self) -> np.ndarray:
        w = np.ones(self.A.shape[1])
        w[self.excluded] = 0.0
        return w


@dataclass
class SolverReport:
    solution: np.ndarray
    objective: float
    residual_sq: float
    iterations: int
    converged: bool
    gap: float = np.nan
    lower_bound: float = np.nan
    polished: bool = False
    backend: str = field(default_factory=lambda: kernels.BACKEND)


def weighted_l1(s: np.ndarray, w: np.ndarray) -> float:
    return float(np.abs(s) @ w)


def dual_bound(A, b, eps, w, y) -> float:
    """Lower bound on the optimum from any multiplier ``y`` (made feasible here).

    The dual is ``max b^T y - sqrt(eps) ||y||`` s.t. ``|A^T y| <= w``, with
    equality ``A_i^T y = 0`` on zero-weight columns.
    """
    y = np.asarray(y, dtype=float)
    free = w == 0
    if free.any():
        Af = A[:, free]
        coef, *_ = np.linalg.lstsq(Af, y, rcond=None)
        y = y - Af @ coef
    g = np.abs(A.T @ y)
    pen = ~free
    if pen.any():
        ratio = np.max(g[pen] / w[pen])
        if ratio > 1.0:
            y = y / ratio
    return float(b @ y - np.sqrt(eps) * np.linalg.norm(y))


@dataclass
class _Geometry:
    """Thin SVD of A and the constraint data expressed in its coordinates."""

    V: np.ndarray  # q x k right singular vectors (C-contiguous)
    U: np.ndarray  # n x k left singular vectors
    sig: np.ndarray
    b1: np.ndarray
    budget: float  # radius^2 left after the out-of-range part of b

    @classmethod
    def build(cls, A, b, eps, feas_tol):
        n, q = A.shape
        U, sig, Vt = np.linalg.svd(A, full_matrices=False)
        if sig.size and sig[0] > 0:
            keep = sig > sig[0] * max(n, q) * np.finfo(float).eps
        else:
            keep = np.zeros(sig.size, dtype=bool)
        U, sig, Vt = U[:, keep], sig[keep], Vt[keep]
        b1 = U.T @ b
        out_sq = float(np.sum((b - U @ b1) ** 2))
        budget = eps - out_sq
        if budget < -feas_tol:
            raise InfeasibleProblemError(
                f"||b||^2 outside range(A) is {out_sq:.3e} > eps = {eps:.3e}"
            )
        return cls(
            V=np.ascontiguousarray(Vt.T),
            U=U,
            sig=np.ascontiguousarray(sig),
            b1=np.ascontiguousarray(b1),
            budget=max(budget, 0.0),
        )

    def multiplier(self, rho_u: np.ndarray) -> np.ndarray:
        """``y`` with ``A^T y`` closest to ``rho_u`` (min-norm least squares)."""
        return self.U @ ((self.V.T @ rho_u) / self.sig)


def _polish(A, b, eps, w, z, feas_tol):
    """Closed-form optimum on the support (and signs) read off ``z``.

    Returns ``(s, y)`` or ``None`` when the support does not admit one.
    """
    n, q = A.shape
    F = np.flatnonzero((z != 0) | (w == 0))
    if F.size > n and eps <= 0.0:
        return _polish_vertex(A, b, w, z, F, feas_tol)
    if F.size == 0 or F.size > n:
        return None
    AF = A[:, F]
    c = np.sign(z[F]) * w[F]
    if eps <= 0.0:
        sF, *_ = np.linalg.lstsq(AF, b, rcond=None)
        s = np.zeros(q)
        s[F] = sF
        if np.sum((A @ s - b) ** 2) > feas_tol:
            return None
        y, *_ = np.linalg.lstsq(AF.T, c, rcond=None)
        return s, y
    G = AF.T @ AF
    try:
        cond = np.linalg.cond(G)
    except np.linalg.LinAlgError:
        return None
    if not np.isfinite(cond) or cond > 1e12:
        return None
    s_ls = np.linalg.solve(G, AF.T @ b)
    r0 = float(np.sum((AF @ s_ls - b) ** 2))
    slack = eps - r0
    s = np.zeros(q)
    if not np.any(c):
        if slack < -feas_tol:
            return None
        s[F] = s_ls
        return s, np.zeros(n)
    if slack <= 0.0:
        return None
    Gc = np.linalg.solve(G, c)
    kappa = np.sqrt(slack / float(c @ Gc))
    s[F] = s_ls - kappa * Gc
    y = (b - A @ s) / kappa
    return s, y


def _polish_vertex(A, b, w, z, F, feas_tol):
    """Equality case with a degenerate support: pick a basis among ``F``.

    Columns are ranked by pivoted QR of ``A_F`` scaled by ``|z_F|``, so the
    basis favors large entries; the basic solution and its simplex dual
    then give a candidate and a bound.
    """
    n, q = A.shape
    scale = np.where(z[F] != 0, np.abs(z[F]), np.abs(z).max(initial=1.0))
    _, R, piv = scipy.linalg.qr(A[:, F] * scale, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > diag[0] * max(n, q) * np.finfo(float).eps)) if diag.size else 0
    if rank == 0:
        return None
    B = F[np.sort(piv[:rank])]
    AB = A[:, B]
    sB, *_ = np.linalg.lstsq(AB, b, rcond=None)
    s = np.zeros(q)
    s[B] = sB
    if np.sum((A @ s - b) ** 2) > feas_tol:
        return None
    sgn = np.where(sB != 0, np.sign(sB), np.sign(z[B]))
    y, *_ = np.linalg.lstsq(AB.T, sgn * w[B], rcond=None)
    return s, y


def _solve(prob: L1Problem, tol: SolverTolerances, equality: bool) -> SolverReport:
    A, b = prob.A, prob.b
    n, q = A.shape
    w = prob.weights
    eps = 0.0 if equality else prob.eps
    bb = float(b @ b)
    if bb <= eps or bb == 0.0:
        return SolverReport(np.zeros(q), 0.0, bb, 0, True, gap=0.0, lower_bound=0.0)

    feas = tol.feasibility_tol * bb
    geo = _Geometry.build(A, b, eps, feas)
    rho2 = 0.0 if equality else geo.budget
    if geo.sig.size == 0:
        raise InfeasibleProblemError("A is zero but b is not")

    # start from the min-norm solution of the (unbudgeted) fit
    s_ln = geo.V @ (geo.b1 / geo.sig)
    z = s_ln.copy()
    u = np.zeros(q)
    scale = np.max(np.abs(s_ln))
    rho = 1.0 / max(0.1 * scale, 1e-12)

    best_s, best_obj = None, np.inf
    best_lb = -np.inf
    polished = False
    iters = 0
    converged = False
    gap = np.inf

    def consider(s, from_polish=False):
        nonlocal best_s, best_obj, polished
        res = float(np.sum((A @ s - b) ** 2))
        if res > eps + feas:
            return
        obj = weighted_l1(s, w)
        if obj < best_obj:
            best_s, best_obj, polished = s.copy(), obj, from_polish

    target = tol.optimality_tol * 1e-2
    while iters < tol.max_iter:
        chunk = min(tol.chunk, tol.max_iter - iters)
        s, rho, it, admm_done = kernels.admm_chunk(
            geo.V, geo.sig, geo.b1, rho2, w, z, u, rho, chunk,
            tol.admm_tol_abs * max(scale, 1e-300), tol.admm_tol_rel,
        )
        iters += it
        s = np.asarray(s)
        consider(s)
        best_lb = max(best_lb, dual_bound(A, b, eps, w, geo.multiplier(rho * u)))
        pol = _polish(A, b, eps, w, z, feas)
        if pol is not None:
            sp, yp = pol
            consider(sp, from_polish=True)
            best_lb = max(best_lb, dual_bound(A, b, eps, w, yp))
        if best_s is not None:
            gap = best_obj - best_lb
            if best_obj == 0.0 or gap <= target * max(best_obj, 1e-300):
                converged = True
                break
        if admm_done:
            # ADMM met its own (tight) residual test; further chunks cannot help
            converged = best_s is not None and gap <= tol.optimality_tol * best_obj
            break

    if best_s is None:
        # no feasible iterate was recorded (only possible with max_iter < 1)
        best_s = kernels.project_ball(geo.V, geo.sig, geo.b1, rho2, z)[0]
        best_obj = weighted_l1(best_s, w)
    if not converged:
        _logger.debug("l1 solve hit the iteration cap with gap %.3e", gap)
    res = float(np.sum((A @ best_s - b) ** 2))
    return SolverReport(
        solution=best_s,
        objective=best_obj,
        residual_sq=res,
        iterations=iters,
        converged=converged,
        gap=float(gap),
        lower_bound=float(best_lb),
        polished=polished,
    )


def solve_bpdn(prob: L1Problem, tol: SolverTolerances = DEFAULT_TOL) -> SolverReport:
    """Weighted basis pursuit denoising; ``eps == 0`` takes the equality path."""
    return _solve(prob, tol, equality=prob.eps == 0.0)


def solve_bp_eq(A, b, tol: SolverTolerances = DEFAULT_TOL, excluded=()) -> SolverReport:
    """Basis pursuit: minimum l1 norm subject to ``A u = b``."""
    return _solve(L1Problem(A, b, 0.0, excluded), tol, equality=True)


@dataclass
class LSResult:
    solution: np.ndarray
    cond: float
    ill_conditioned: bool


def restricted_least_squares(A, T, b, cond_warn: float = 1e8) -> LSResult:
    """Minimum-norm least squares on the columns ``T``; zero elsewhere."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    T = np.asarray(list(T) if not isinstance(T, np.ndarray) else T, dtype=int)
    v = np.zeros(A.shape[1])
    if T.size == 0:
        return LSResult(v, 1.0, False)
    AT = A[:, T]
    v[T] = np.linalg.pinv(AT) @ b
    sv = np.linalg.svd(AT, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if AT.shape[1] > AT.shape[0]:
        cond = np.inf
    return LSResult(v, cond, cond > cond_warn)
