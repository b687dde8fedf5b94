"""Pure-numpy ADMM iterations; used when the compiled kernel is unavailable.

Must stay numerically equivalent to ``_admm.pyx``: same update order,
same step-size adaptation, same stopping test.
"""
from __future__ import annotations

import numpy as np

SECULAR_MAXIT = 100
ADAPT_EVERY = 10


def project_ball(V, sig, b1, rho2, v):
    """Project ``v`` onto ``{s : ||Sigma V^T s - b1||^2 <= rho2}``.

    ``V`` holds right singular vectors as columns; directions outside its
    span are unconstrained and pass through unchanged. Returns ``(s, lam)``.
    """
    c0 = V.T @ v
    if rho2 <= 0.0:
        c = b1 / sig
        return v + V @ (c - c0), np.inf
    t = sig * c0 - b1
    nrm2 = t @ t
    if nrm2 <= rho2:
        return v.copy(), 0.0
    lam = 0.0
    inv_rho = 1.0 / np.sqrt(rho2)
    sig2 = sig * sig
    for _ in range(SECULAR_MAXIT):
        den = 1.0 + lam * sig2
        r = t / den
        nr2 = r @ r
        nr = np.sqrt(nr2)
        phi = 1.0 / nr - inv_rho
        dphi = np.sum(r * r * sig2 / den) / (nr2 * nr)
        step = phi / dphi
        lam -= step
        if lam < 0.0:
            lam = 0.0
        if abs(step) <= 1e-15 * max(lam, 1e-300) or abs(phi) <= 1e-15 * inv_rho:
            break
    c = (c0 + lam * sig * b1) / (1.0 + lam * sig2)
    return v + V @ (c - c0), lam


def admm_chunk(V, sig, b1, rho2, w, z, u, rho, max_iter, tol_abs, tol_rel):
    """Run up to ``max_iter`` scaled-form ADMM iterations in place on ``z``, ``u``.

    Returns ``(s, rho, iters, converged)`` where ``s`` is the last projected
    (hence feasible) iterate.
    """
    q = z.shape[0]
    sq = np.sqrt(q)
    s = z
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        s, _ = project_ball(V, sig, b1, rho2, z - u)
        z_old = z.copy()
        a = s + u
        z[:] = np.sign(a) * np.maximum(np.abs(a) - w / rho, 0.0)
        u += s - z
        r = np.linalg.norm(s - z)
        d = rho * np.linalg.norm(z - z_old)
        eps_pri = sq * tol_abs + tol_rel * max(np.linalg.norm(s), np.linalg.norm(z))
        eps_dual = sq * tol_abs + tol_rel * rho * np.linalg.norm(u)
        if r <= eps_pri and d <= eps_dual:
            converged = True
            break
        if it % ADAPT_EVERY == 0:
            if r > 10.0 * d:
                rho *= 2.0
                u *= 0.5
            elif d > 10.0 * r:
                rho *= 0.5
                u *= 2.0
    return s, rho, it, converged
