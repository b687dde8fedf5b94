"""Synthetic low-rank plus sparse sequences.

The background is ``L_t = U x_t`` with a diagonal, piecewise-stationary AR-1
latent process ``x_t`` whose support grows and shrinks through scheduled
events. The foreground ``S_t`` is ``k`` moving 3x3 blocks of constant value.
Every frame keeps its ground truth so that trackers can be scored later.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ConfigError",
    "InvalidEventError",
    "Phase",
    "SupportEvent",
    "ScenarioConfig",
    "LatentState",
    "SceneState",
    "FrameRecord",
    "Dataset",
    "build_mixing_matrix",
    "assemble_transition",
    "latent_step",
    "variance_envelope",
    "init_scene",
    "sparse_step",
    "render_scene",
    "periodic_events",
    "simulate_latent",
    "generate_sequence",
    "paper_scenario",
]

BLOCK_HALF = 1  # 3x3 objects

# stay, down, up, right, left
_MOVES = np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]])


class ConfigError(ValueError):
    """Raised when a scenario configuration violates its invariants."""


class InvalidEventError(ConfigError):
    """Raised when a support event is inconsistent with the current support."""


class Phase(IntEnum):
    ABSENT = 0
    TRANSIENT = 1
    STABLE = 2
    DECAYING = 3


@dataclass(frozen=True)
class SupportEvent:
    time: int
    add: tuple[int, ...] = ()
    delete: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "add", tuple(sorted(int(i) for i in self.add)))
        object.__setattr__(self, "delete", tuple(sorted(int(i) for i in self.delete)))


@dataclass(frozen=True)
class ScenarioConfig:
    """Full generative description of a synthetic sequence.

    Indices in ``events`` are 0-based column indices of the mixing matrix.
    ``sigma_sq[i]`` is the stable variance of latent coordinate ``i``.
    """

    m: int
    frame_h: int
    frame_w: int
    f: float
    f_d: float
    theta: float
    sigma_sq: tuple[float, ...]
    events: tuple[SupportEvent, ...]
    t0: int
    T_total: int
    k_objects: int = 1
    magnitude: float = 5.0
    p_stay: float = 0.8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sigma_sq", tuple(float(v) for v in self.sigma_sq))
        object.__setattr__(
            self, "events", tuple(sorted(self.events, key=lambda e: e.time))
        )
        self.validate()

    def validate(self) -> None:
        if self.m < 1:
            raise ConfigError("m must be positive")
        if self.frame_h * self.frame_w != self.m:
            raise ConfigError(
                f"frame {self.frame_h}x{self.frame_w} does not hold m={self.m} pixels"
            )
        if not 0.0 < self.f_d < self.f < 1.0:
            raise ConfigError("need 0 < f_d < f < 1")
        if not 0.0 < self.theta < 1.0:
            raise ConfigError("need 0 < theta < 1")
        if len(self.sigma_sq) != self.m:
            raise ConfigError("sigma_sq must have length m")
        sig = np.asarray(self.sigma_sq)
        if np.any(sig < 0):
            raise ConfigError("sigma_sq must be nonnegative")
        if np.any(np.diff(sig) > 0):
            raise ConfigError("sigma_sq must be non-increasing")
        if not 0.0 <= self.p_stay <= 1.0:
            raise ConfigError("p_stay must lie in [0, 1]")
        if self.t0 < 0 or self.T_total < self.t0:
            raise ConfigError("need 0 <= t0 <= T_total")
        if self.k_objects < 0:
            raise ConfigError("k_objects must be nonnegative")
        if self.k_objects and (self.frame_h < 3 or self.frame_w < 3):
            raise ConfigError("frame too small for a 3x3 object")
        times = [e.time for e in self.events]
        if len(set(times)) != len(times):
            raise ConfigError("at most one support event per frame")
        # replay the schedule once so bad events fail at construction time
        support: set[int] = set()
        deleted: set[int] = set()
        for ev in self.events:
            if ev.time < 1 or ev.time > max(self.T_total, 1):
                raise ConfigError(f"event time {ev.time} outside 1..T_total")
            _check_event(ev, support, deleted, self.m)
            support |= set(ev.add)
            deleted |= set(ev.delete)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frame_h, self.frame_w

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))


def _check_event(ev: SupportEvent, support: set[int], deleted: set[int], m: int):
    add, delete = set(ev.add), set(ev.delete)
    if any(i < 0 or i >= m for i in add | delete):
        raise InvalidEventError(f"event at t={ev.time} has index outside 0..{m - 1}")
    if add & delete:
        raise InvalidEventError(f"event at t={ev.time} adds and deletes the same index")
    if add & support:
        raise InvalidEventError(f"event at t={ev.time} re-adds an index already present")
    if add & deleted:
        raise InvalidEventError(f"event at t={ev.time} re-adds a deleted index")
    if not delete <= (support - deleted):
        raise InvalidEventError(f"event at t={ev.time} deletes an index not in support")


@dataclass
class LatentState:
    """Latent coordinates plus per-index phase bookkeeping."""

    x: np.ndarray
    phase: np.ndarray
    since: np.ndarray  # frame at which the current phase began (-1 if absent)

    @classmethod
    def empty(cls, m: int) -> "LatentState":
        return cls(
            x=np.zeros(m),
            phase=np.full(m, Phase.ABSENT, dtype=np.int8),
            since=np.full(m, -1, dtype=np.int64),
        )

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.phase != Phase.ABSENT)


@dataclass
class SceneState:
    centers: np.ndarray  # (k, 2) integer (row, col)
    shape: tuple[int, int]


@dataclass(frozen=True)
class FrameRecord:
    t: int
    M: np.ndarray
    L: np.ndarray
    S: np.ndarray
    N_t: np.ndarray
    T_t: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """A generated dataset: frames, mixing matrix and the applied events."""

    cfg: ScenarioConfig
    U: np.ndarray
    frames: list[FrameRecord]
    event_log: list[SupportEvent] = field(default_factory=list)

    def stack(self, name: str, start: int = 1, stop: int | None = None) -> np.ndarray:
        """Stack one field of frames ``start..stop`` (1-based, inclusive) as columns."""
        stop = self.cfg.T_total if stop is None else stop
        return np.column_stack([getattr(fr, name) for fr in self.frames[start - 1 : stop]])


def build_mixing_matrix(m: int, seed) -> np.ndarray:
    """Random orthonormal ``m x m`` matrix with generic (spread-out) columns.

    QR of an i.i.d. Gaussian matrix with the sign convention ``diag(R) > 0``,
    which makes the result Haar distributed and deterministic per seed.
    """
    if m < 1:
        raise ValueError("m must be positive")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((m, m))
    Q, R = np.linalg.qr(Z)
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def assemble_transition(
    N_prev: Iterable[int],
    event: SupportEvent | None,
    cfg: ScenarioConfig,
    decaying: Iterable[int] = (),
) -> tuple[np.ndarray, np.ndarray]:
    """Diagonals of ``F_t`` and ``Q_t`` for one step.

    ``N_prev`` is the support before the step and ``decaying`` the indices
    already decaying from an earlier event; ``event`` may add new indices and
    start decay on others.
    """
    m = cfg.m
    support = set(int(i) for i in N_prev)
    decay = set(int(i) for i in decaying)
    add: set[int] = set()
    if event is not None:
        _check_event(event, support, decay, m)
        add = set(event.add)
        decay |= set(event.delete)
    sig = np.asarray(cfg.sigma_sq)
    F = np.zeros(m)
    Q = np.zeros(m)
    existing = np.array(sorted(support - decay), dtype=int)
    F[existing] = cfg.f
    Q[existing] = (1.0 - cfg.f**2) * sig[existing]
    dec = np.array(sorted(decay & support), dtype=int)
    F[dec] = cfg.f_d
    new = np.array(sorted(add), dtype=int)
    Q[new] = cfg.theta * sig[new]
    return F, Q


def latent_step(
    state: LatentState,
    F_diag: np.ndarray,
    Q_diag: np.ndarray,
    rng: np.random.Generator,
    t: int = 0,
    event: SupportEvent | None = None,
) -> LatentState:
    """Advance ``x_t = F x_{t-1} + nu`` with ``nu ~ N(0, diag(Q))``."""
    noise = rng.standard_normal(len(F_diag)) * np.sqrt(Q_diag)
    x = F_diag * state.x + noise
    phase = state.phase.copy()
    since = state.since.copy()
    # transient lasts one step: the AR recursion takes over right after addition
    promote = phase == Phase.TRANSIENT
    phase[promote] = Phase.STABLE
    if event is not None:
        idx = np.asarray(event.add, dtype=int)
        phase[idx] = Phase.TRANSIENT
        since[idx] = t
        idx = np.asarray(event.delete, dtype=int)
        phase[idx] = Phase.DECAYING
        since[idx] = t
    return LatentState(x=x, phase=phase, since=since)


def variance_envelope(kind: str, dt: int, cfg: ScenarioConfig) -> float:
    """Variance multiplier of ``sigma_i^2`` after an addition or decay.

    For ``"added"``, ``dt`` counts frames since the addition (``dt = 0`` at
    the addition frame). For ``"decaying"``, ``dt`` counts the decay steps
    applied so far, so the first decayed frame has ``dt = 1``.
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if kind == "added":
        return 1.0 - (1.0 - cfg.theta) * cfg.f ** (2 * dt)
    if kind == "decaying":
        return cfg.f_d ** (2 * dt)
    raise ValueError(f"unknown envelope kind {kind!r}")


def _block_fits(center: np.ndarray, shape: tuple[int, int]) -> bool:
    r, c = center
    h, w = shape
    return BLOCK_HALF <= r < h - BLOCK_HALF and BLOCK_HALF <= c < w - BLOCK_HALF


def init_scene(cfg: ScenarioConfig, rng: np.random.Generator) -> SceneState:
    h, w = cfg.shape
    rows = rng.integers(BLOCK_HALF, h - BLOCK_HALF, size=cfg.k_objects)
    cols = rng.integers(BLOCK_HALF, w - BLOCK_HALF, size=cfg.k_objects)
    return SceneState(centers=np.column_stack([rows, cols]).astype(int), shape=cfg.shape)


def render_scene(scene: SceneState, magnitude: float) -> np.ndarray:
    h, w = scene.shape
    img = np.zeros((h, w))
    for r, c in scene.centers:
        img[r - BLOCK_HALF : r + BLOCK_HALF + 1, c - BLOCK_HALF : c + BLOCK_HALF + 1] = magnitude
    return img.ravel()


def sparse_step(
    scene: SceneState, cfg: ScenarioConfig, rng: np.random.Generator
) -> tuple[SceneState, np.ndarray]:
    """Move every object by the lazy 4-neighbour kernel and render the frame.

    Moves that would push a block outside the frame are rejected.
    """
    k = len(scene.centers)
    p_move = (1.0 - cfg.p_stay) / 4.0
    choice = rng.choice(5, size=k, p=[cfg.p_stay, p_move, p_move, p_move, p_move])
    centers = scene.centers.copy()
    for i, ch in enumerate(choice):
        proposal = centers[i] + _MOVES[ch]
        if _block_fits(proposal, scene.shape):
            centers[i] = proposal
    new = SceneState(centers=centers, shape=scene.shape)
    return new, render_scene(new, cfg.magnitude)


def periodic_events(
    start: int,
    period: int,
    count: int,
    add_groups: Sequence[Sequence[int]] = (),
    delete_groups: Sequence[Sequence[int]] = (),
) -> list[SupportEvent]:
    """Schedule ``count`` events every ``period`` frames starting at ``start``."""
    events = []
    for j in range(count):
        add = tuple(add_groups[j]) if j < len(add_groups) else ()
        delete = tuple(delete_groups[j]) if j < len(delete_groups) else ()
        events.append(SupportEvent(time=start + j * period, add=add, delete=delete))
    return events


def _streams(seed) -> tuple[np.random.SeedSequence, ...]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return tuple(ss.spawn(3))


def simulate_latent(cfg: ScenarioConfig, rng: np.random.Generator, T: int | None = None):
    """Run the latent recursion alone; returns ``(X, phases)`` with frames as columns."""
    T = cfg.T_total if T is None else T
    events = {e.time: e for e in cfg.events}
    state = LatentState.empty(cfg.m)
    X = np.empty((cfg.m, T))
    phases = np.empty((cfg.m, T), dtype=np.int8)
    decaying: set[int] = set()
    for t in range(1, T + 1):
        ev = events.get(t)
        F, Q = assemble_transition(state.support, ev, cfg, decaying)
        state = latent_step(state, F, Q, rng, t=t, event=ev)
        if ev is not None:
            decaying |= set(ev.delete)
        X[:, t - 1] = state.x
        phases[:, t - 1] = state.phase
    return X, phases


def generate_sequence(cfg: ScenarioConfig) -> Dataset:
    """Generate ``M_t = L_t + S_t`` for ``t = 1..T_total`` with ground truth.

    The first ``t0`` frames carry no foreground and serve as training data.
    """
    cfg.validate()
    s_u, s_x, s_s = _streams(cfg.seed)
    U = build_mixing_matrix(cfg.m, s_u)
    X, phases = simulate_latent(cfg, np.random.default_rng(s_x))
    rng_s = np.random.default_rng(s_s)
    scene = None
    frames = []
    for t in range(1, cfg.T_total + 1):
        L = U @ X[:, t - 1]
        if t <= cfg.t0 or cfg.k_objects == 0:
            S = np.zeros(cfg.m)
        elif scene is None:
            scene = init_scene(cfg, rng_s)
            S = render_scene(scene, cfg.magnitude)
        else:
            scene, S = sparse_step(scene, cfg, rng_s)
        frames.append(
            FrameRecord(
                t=t,
                M=L + S,
                L=L,
                S=S,
                N_t=np.flatnonzero(phases[:, t - 1] != Phase.ABSENT),
                T_t=np.flatnonzero(S),
            )
        )
    return Dataset(cfg=cfg, U=U, frames=frames, event_log=list(cfg.events))


def paper_scenario(
    t0: int = 5000,
    horizon: int = 200,
    seed: int = 0,
    m: int = 128,
    frame_shape: tuple[int, int] = (16, 8),
    n_directions: int = 32,
    var_max: float = 1e4,
    var_min: float = 9.0,
    new_variance: float = 50.0,
    add_offset: int = 5,
    delete_offset: int = 100,
    delete_rank: int = 16,
    f: float = 0.9,
    f_d: float = 0.1,
    theta: float = 0.4,
    magnitude: float = 5.0,
    k_objects: int = 1,
    p_stay: float = 0.8,
) -> ScenarioConfig:
    """The experiment scenario: a log-spaced spectrum, one addition, one decay.

    The new direction's variance is slotted into the non-increasing spectrum;
    ``delete_rank`` picks which of the initial directions decays (by rank in
    the initial spectrum, 0 = largest).
    """
    base = np.geomspace(var_max, var_min, n_directions)
    spectrum = np.sort(np.append(base, new_variance))[::-1]
    new_idx = int(np.flatnonzero(spectrum == new_variance)[0])
    initial = [i for i in range(n_directions + 1) if i != new_idx]
    sigma_sq = np.zeros(m)
    sigma_sq[: n_directions + 1] = spectrum
    events = [
        SupportEvent(time=1, add=tuple(initial)),
        SupportEvent(time=t0 + add_offset, add=(new_idx,)),
        SupportEvent(time=t0 + delete_offset, delete=(initial[delete_rank],)),
    ]
    h, w = frame_shape
    return ScenarioConfig(
        m=m,
        frame_h=h,
        frame_w=w,
        f=f,
        f_d=f_d,
        theta=theta,
        sigma_sq=tuple(sigma_sq),
        events=tuple(events),
        t0=t0,
        T_total=t0 + horizon,
        k_objects=k_objects,
        magnitude=magnitude,
        p_stay=p_stay,
        seed=seed,
    )
