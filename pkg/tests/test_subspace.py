import numpy as np
import pytest

from rrpcp import subspace as sub
from rrpcp.subspace import Status, SubspaceEstimate, SubspaceParams


def _basis(m, r, seed=0):
    return np.linalg.qr(np.random.default_rng(seed).standard_normal((m, r)))[0]


def test_orth_complement_properties():
    P = _basis(20, 6)
    Pp = sub.orth_complement(P)
    assert Pp.shape == (20, 14)
    assert np.abs(P @ P.T + Pp @ Pp.T - np.eye(20)).max() < 1e-12
    assert np.array_equal(sub.orth_complement(np.zeros((5, 0))), np.eye(5))
    with pytest.raises(ValueError):
        sub.orth_complement(2 * P)
    with pytest.raises(ValueError):
        sub.orth_complement(_basis(4, 4))


def test_training_recovers_exact_span():
    rng = np.random.default_rng(0)
    m, r, T, f = 30, 5, 400, 0.9
    U = _basis(m, r)
    x = np.zeros(r)
    L = np.empty((m, T))
    for t in range(T):
        x = f * x + rng.standard_normal(r) * np.sqrt(1 - f**2) * np.arange(5, 0, -1)
        L[:, t] = U @ x
    P0, G0 = sub.train_initial(L, f)
    assert P0.shape == (m, r)
    assert np.all(np.diff(G0) <= 0)
    assert np.abs(P0 @ P0.T - U @ U.T).max() < 1e-8
    with pytest.raises(ValueError):
        sub.train_initial(L[:, :1], f)


def test_threshold_is_median_rule():
    params = SubspaceParams()
    est = SubspaceEstimate.from_training(_basis(10, 2), np.array([2.0, 1.0]), params)
    assert sub.detection_threshold(est, params) == params.delta_floor
    est.beta_history.extend([1.0, 2.0, 3.0])
    assert sub.detection_threshold(est, params) == pytest.approx(6.0)
    assert sub.detection_threshold(est, SubspaceParams(delta=0.5)) == 0.5


def test_trigger_and_history():
    params = SubspaceParams()
    est = SubspaceEstimate.from_training(_basis(10, 2), np.array([2.0, 1.0]), params)
    est.beta_history.extend([1.0] * 5)
    quiet = sub.detect_trigger(est, 2.0, params)
    assert quiet.status is Status.STABLE and not quiet.events
    loud = sub.detect_trigger(est, 10.0, params, diff=np.ones(10))
    assert loud.status is Status.DETECTION and loud.events == ["trigger"] and len(loud.D) == 1
    assert est.status is Status.STABLE  # input untouched


def _stream(m=24, r=4, T=200, new_at=10, f=0.9, seed=0):
    """Difference-domain frames with one direction appearing at ``new_at``."""
    rng = np.random.default_rng(seed)
    U = _basis(m, r + 1, seed)
    scales = np.array([10.0, 8.0, 6.0, 4.0, 5.0])
    diffs = []
    for t in range(T):
        a = rng.standard_normal(r + 1) * scales
        if t < new_at:
            a[-1] = 0.0
        diffs.append(U @ a)
    G0 = scales[:r] ** 2
    return U, G0, diffs


def test_update_timeline_detect_rotate_merge():
    U, G0, diffs = _stream()
    params = SubspaceParams(xi_d=1e-2, xi_r=1e-2)
    est = SubspaceEstimate.from_training(U[:, :4], G0, params)
    u_new = U[:, 4]
    events = {}
    for k, d in enumerate(diffs):
        beta_sq = float(np.sum((d - est.basis @ (est.basis.T @ d)) ** 2))
        est, basis = sub.update(est, d, beta_sq, params)
        for e in est.events:
            events.setdefault(e.split(":")[0], k)
        assert np.abs(basis.T @ basis - np.eye(basis.shape[1])).max() < 1e-10
    assert events["trigger"] == 10
    assert events["detected"] == 30  # buffer of tau_d processed one frame after it fills
    # first rotation one buffer later; a strong direction merges on it
    assert min(events.get("rotated", 99), events["merged"]) == 51
    assert est.rank == 5 and est.status is Status.STABLE
    assert abs(est.P_stable.T @ u_new).max() > 0.99


def test_rotation_prunes_spurious_directions():
    params = SubspaceParams(xi_r=1e-3)
    P = _basis(12, 5)
    est = SubspaceEstimate(P_stable=P[:, :3], G_stable=np.array([9.0, 4.0, 1.0]),
                           P_new=P[:, 3:], G_new=np.array([2.0, 1.0]), status=Status.ROTATION, l=20)
    est.D = [P[:, 3] * v for v in np.random.default_rng(0).standard_normal(20) * 2]
    out = sub.rotate_new_directions(est, params)
    assert out.P_new.shape[1] + out.P_stable.shape[1] <= 5
    assert any(e.startswith(("rotated", "merged")) for e in out.events)


def test_remove_decayed_drops_only_the_dead_direction():
    params = SubspaceParams()
    P = _basis(12, 3)
    est = SubspaceEstimate.from_training(P, np.array([9.0, 4.0, 1.0]), params)
    rng = np.random.default_rng(0)
    est.D_del = [P @ (rng.standard_normal(3) * np.array([3.0, 0.0, 1.0])) for _ in range(20)]
    out = sub.remove_decayed(est, params)
    assert out.rank == 2 and out.events == ["deleted:1"]
    assert abs(out.P_stable.T @ P[:, 1]).max() < 1e-12


def test_snapshot_roundtrip():
    est = SubspaceEstimate.from_training(_basis(9, 3), np.array([3.0, 2.0, 1.0]))
    P, G, status = sub.load_snapshot(sub.dump_snapshot(est))
    assert np.array_equal(P, est.P_stable) and np.array_equal(G, est.G_stable)
    assert status is Status.STABLE
    with pytest.raises(ValueError):
        sub.load_snapshot(b"nope")


def test_params_validation():
    with pytest.raises(ValueError):
        SubspaceParams(tau_d=0)
    with pytest.raises(ValueError):
        SubspaceParams(delete_frac=1.5)
