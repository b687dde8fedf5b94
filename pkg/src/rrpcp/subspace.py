"""Principal-subspace estimation and recursive maintenance.

All variances are kept in the difference domain, i.e. they describe
``L_t - f L_{t-1}``, which is serially uncorrelated under the AR-1 model and
shares its eigenvectors with ``L_t``.
"""
from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

__all__ = [
    "Status",
    "SubspaceParams",
    "SubspaceEstimate",
    "train_initial",
    "orth_complement",
    "detect_trigger",
    "detect_new_directions",
    "rotate_new_directions",
    "remove_decayed",
    "update",
    "detection_threshold",
    "dump_snapshot",
    "load_snapshot",
]


class Status(str, Enum):
    STABLE = "stable"
    DETECTION = "detection"
    ROTATION = "rotation"


@dataclass(frozen=True)
class SubspaceParams:
    f: float = 0.9
    delta: float | None = None  # None: self-calibrating rule, see detection_threshold
    delta_factor: float = 3.0
    delta_window: int = 50
    delta_floor: float = 1e-6
    tau_d: int = 20
    tau_r: int = 20
    tau_del: int = 20
    xi_d: float = 2e-4
    xi_r: float = 2e-4
    identity_diag_min: float = 0.9999
    identity_offdiag_max: float = 0.01
    delete_frac: float = 0.05
    train_eig_frac: float = 1e-6

    def __post_init__(self):
        if min(self.tau_d, self.tau_r, self.tau_del) < 1:
            raise ValueError("buffer lengths must be >= 1")
        if not 0.0 < self.delete_frac < 1.0:
            raise ValueError("delete_frac must lie in (0, 1)")
        for name in ("xi_d", "xi_r", "delta_floor", "identity_diag_min", "identity_offdiag_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _empty_basis(m: int) -> np.ndarray:
    return np.zeros((m, 0))


@dataclass
class SubspaceEstimate:
    P_stable: np.ndarray
    G_stable: np.ndarray
    P_new: np.ndarray
    G_new: np.ndarray
    status: Status = Status.STABLE
    D: list = field(default_factory=list)
    D_del: list = field(default_factory=list)
    l: int = 0
    beta_history: deque = field(default_factory=lambda: deque(maxlen=50))
    version: int = 0  # bumped whenever the basis changes
    events: list = field(default_factory=list)  # what the last update did

    @classmethod
    def from_training(cls, P0, G0, params: SubspaceParams | None = None) -> "SubspaceEstimate":
        params = params or SubspaceParams()
        m = P0.shape[0]
        return cls(
            P_stable=np.asarray(P0, dtype=float),
            G_stable=np.asarray(G0, dtype=float),
            P_new=_empty_basis(m),
            G_new=np.zeros(0),
            beta_history=deque(maxlen=params.delta_window),
        )

    @property
    def m(self) -> int:
        return self.P_stable.shape[0]

    @property
    def basis(self) -> np.ndarray:
        return np.hstack([self.P_stable, self.P_new])

    @property
    def rank(self) -> int:
        return self.P_stable.shape[1] + self.P_new.shape[1]

    def copy(self) -> "SubspaceEstimate":
        return replace(
            self,
            D=list(self.D),
            D_del=list(self.D_del),
            beta_history=deque(self.beta_history, maxlen=self.beta_history.maxlen),
            events=[],
        )


def train_initial(L_frames: np.ndarray, f: float, params: SubspaceParams | None = None):
    """Eigen-decomposition of the sample covariance of ``L_t - f L_{t-1}``.

    ``L_frames`` holds the sparse-free training frames as columns. Returns
    ``(P0, G0)`` with eigenvalues in decreasing order, keeping those above
    ``train_eig_frac`` of the largest.
    """
    params = params or SubspaceParams(f=f)
    L = np.asarray(L_frames, dtype=float)
    m, t0 = L.shape
    if t0 < 2:
        raise ValueError("training needs at least two frames")
    Dm = L[:, 1:] - f * L[:, :-1]
    C = Dm @ Dm.T / (t0 - 1)
    g, P = np.linalg.eigh(C)
    g, P = g[::-1], P[:, ::-1]
    if g.size == 0 or g[0] <= 0:
        return _empty_basis(m), np.zeros(0)
    keep = g > params.train_eig_frac * g[0]
    return np.ascontiguousarray(P[:, keep]), g[keep].copy()


def orth_complement(P: np.ndarray, check: bool = True) -> np.ndarray:
    """Orthonormal basis of the null space of ``P^T`` from a full QR of ``P``."""
    P = np.asarray(P, dtype=float)
    m, r = P.shape
    if r >= m:
        raise ValueError(f"no complement for rank {r} in dimension {m}")
    if check and r and np.max(np.abs(P.T @ P - np.eye(r))) > 1e-8:
        raise ValueError("P does not have orthonormal columns")
    if r == 0:
        return np.eye(m)
    H, _ = np.linalg.qr(P, mode="complete")
    return np.ascontiguousarray(H[:, r:])


def detection_threshold(est: SubspaceEstimate, params: SubspaceParams) -> float:
    """The trigger level on ``||beta_hat_{t-1}||^2``.

    A fixed ``params.delta`` wins; otherwise a multiple of the running median
    of the energies seen while stable, floored.
    """
    if params.delta is not None:
        return params.delta
    if not est.beta_history:
        return params.delta_floor
    return max(params.delta_factor * float(np.median(est.beta_history)), params.delta_floor)


def _threshold_scale(est: SubspaceEstimate) -> float:
    return float(np.sum(est.G_stable))


def _eig_desc(C):
    g, P = np.linalg.eigh((C + C.T) / 2)
    return g[::-1], P[:, ::-1]


def detect_trigger(est: SubspaceEstimate, beta_prev_sq: float, params: SubspaceParams,
                   diff: np.ndarray | None = None) -> SubspaceEstimate:
    """Step 1a: leave ``stable`` once the complement energy exceeds the threshold."""
    if est.status is not Status.STABLE:
        raise ValueError("trigger test only applies in stable status")
    est = est.copy()
    delta = detection_threshold(est, params)
    est.beta_history.append(float(beta_prev_sq))
    if beta_prev_sq > delta:
        est.status = Status.DETECTION
        if diff is not None:
            est.D.append(np.asarray(diff, dtype=float))
        est.events.append("trigger")
    return est


def detect_new_directions(est: SubspaceEstimate, params: SubspaceParams) -> SubspaceEstimate:
    """Step 1b: candidate new directions from the buffered differences."""
    if est.status is not Status.DETECTION:
        raise ValueError("status must be detection")
    est = est.copy()
    D = np.column_stack(est.D) if est.D else np.zeros((est.m, 0))
    n = max(D.shape[1], 1)
    Ps = est.P_stable
    K = D - Ps @ (Ps.T @ D)
    g, P = _eig_desc(K @ K.T / n)
    keep = g > params.xi_d * _threshold_scale(est)
    # directions are only meaningful inside span(K); cap by its rank
    keep[min(D.shape[1], est.m - Ps.shape[1]):] = False
    est.P_new = np.ascontiguousarray(P[:, keep])
    est.G_new = g[keep].copy()
    est.D = []
    if est.P_new.shape[1]:
        est.status = Status.ROTATION
        est.l = params.tau_d
        est.events.append(f"detected:{est.P_new.shape[1]}")
        est.version += 1
    else:
        est.status = Status.STABLE
        est.l = 0
        est.events.append("detected:0")
    return est


def _is_identity(P: np.ndarray, params: SubspaceParams) -> bool:
    if P.size == 0:
        return True
    diag = np.abs(np.diag(P))
    off = np.abs(P - np.diag(np.diag(P)))
    return bool(np.all(diag > params.identity_diag_min) and np.all(off < params.identity_offdiag_max))


def _merge(est: SubspaceEstimate) -> None:
    stacked = np.hstack([est.P_stable, est.P_new])
    Q, R = np.linalg.qr(stacked)
    Q = Q * np.where(np.diag(R) < 0, -1.0, 1.0)
    est.P_stable = np.ascontiguousarray(Q)
    est.G_stable = np.concatenate([est.G_stable, est.G_new])
    est.P_new = _empty_basis(est.m)
    est.G_new = np.zeros(0)


def rotate_new_directions(est: SubspaceEstimate, params: SubspaceParams) -> SubspaceEstimate:
    """Step 1c: refine, prune and possibly merge the new directions."""
    if est.status is not Status.ROTATION:
        raise ValueError("status must be rotation")
    est = est.copy()
    D = np.column_stack(est.D) if est.D else np.zeros((est.m, 0))
    tau = D.shape[1]
    K = est.P_new.T @ D
    C = (est.l * np.diag(est.G_new) + K @ K.T) / (est.l + tau)
    g, P = _eig_desc(C)
    keep = g > params.xi_r * _threshold_scale(est)
    est.P_new = np.ascontiguousarray((est.P_new @ P)[:, keep])
    est.G_new = g[keep].copy()
    est.D = []
    est.version += 1
    n_keep = int(keep.sum())
    pruned = len(keep) - n_keep
    if n_keep == 0:
        est.status = Status.STABLE
        est.l = 0
        est.events.append(f"rotated:pruned={pruned}:emptied")
    elif _is_identity(P[np.ix_(keep, keep)], params):
        _merge(est)
        est.status = Status.STABLE
        est.l = 0
        est.events.append(f"merged:{n_keep}:pruned={pruned}")
    else:
        est.l += params.tau_d
        est.events.append(f"rotated:pruned={pruned}")
    return est


def remove_decayed(est: SubspaceEstimate, params: SubspaceParams) -> SubspaceEstimate:
    """Step 2: drop stable directions whose recent variance collapsed."""
    est = est.copy()
    Dd = np.column_stack(est.D_del) if est.D_del else np.zeros((est.m, 0))
    n = max(Dd.shape[1], 1)
    proj = est.P_stable.T @ Dd
    var = np.sum(proj * proj, axis=1) / n
    drop = var < params.delete_frac * est.G_stable
    est.D_del = []
    if drop.any():
        est.P_stable = np.ascontiguousarray(est.P_stable[:, ~drop])
        est.G_stable = est.G_stable[~drop]
        est.version += 1
        est.events.append(f"deleted:{int(drop.sum())}")
    return est


def update(est: SubspaceEstimate, diff: np.ndarray, beta_prev_sq: float,
           params: SubspaceParams) -> tuple[SubspaceEstimate, np.ndarray]:
    """One frame of subspace maintenance.

    ``diff`` is ``L_hat_{t-1} - f L_hat_{t-2}`` and ``beta_prev_sq`` the
    complement energy of ``L_hat_{t-1}``. A buffer found full is processed
    on that frame instead of receiving the new difference.
    """
    diff = np.asarray(diff, dtype=float)
    est = est.copy()
    if est.status is Status.STABLE:
        est = detect_trigger(est, beta_prev_sq, params, diff)
    elif est.status is Status.DETECTION:
        if len(est.D) < params.tau_d:
            est.D.append(diff)
        else:
            est = detect_new_directions(est, params)
    else:
        if len(est.D) < params.tau_r:
            est.D.append(diff)
        else:
            est = rotate_new_directions(est, params)

    if len(est.D_del) < params.tau_del:
        est.D_del.append(diff)
    else:
        events = est.events
        est = remove_decayed(est, params)
        est.events = events + est.events
    return est, est.basis


_SNAP_MAGIC = b"RRSUB1"
_STATUS_CODE = {Status.STABLE: 0, Status.DETECTION: 1, Status.ROTATION: 2}


def dump_snapshot(est: SubspaceEstimate) -> bytes:
    """Debug blob: magic, u32 m, u32 r, u8 status, then P_stable (column-major) and G_stable."""
    m, r = est.P_stable.shape
    head = _SNAP_MAGIC + struct.pack("<IIB", m, r, _STATUS_CODE[est.status])
    body = np.asarray(est.P_stable, dtype="<f8").tobytes(order="F")
    return head + body + np.asarray(est.G_stable, dtype="<f8").tobytes()


def load_snapshot(blob: bytes):
    if blob[:6] != _SNAP_MAGIC:
        raise ValueError("not a subspace snapshot")
    m, r, code = struct.unpack_from("<IIB", blob, 6)
    off = 6 + 9
    P = np.frombuffer(blob, dtype="<f8", count=m * r, offset=off).reshape((m, r), order="F")
    G = np.frombuffer(blob, dtype="<f8", count=r, offset=off + 8 * m * r)
    status = {v: k for k, v in _STATUS_CODE.items()}[code]
    return P.copy(), G.copy(), status
