import numpy as np
import pytest

from conftest import small_scenario
from rrpcp import harness as hs
from rrpcp.model import ScenarioConfig, SupportEvent
from rrpcp.tracker import TrackerParams

PARAMS = TrackerParams(gamma=1.5, eps_window=20)


def _cfg(trials=1, methods=("nc", "basic"), **kw):
    return hs.RunConfig(scenario=small_scenario(horizon=40, delete_at=None, **kw), tracker=PARAMS,
                        methods=methods, trials=trials, master_seed=3)


def test_percentage_error_examples():
    assert hs.percentage_error([3, 4, 0], [3, 0, 0]) == pytest.approx(0.8)
    assert hs.percentage_error([1, 0], [1, 0]) == 0.0
    assert np.isnan(hs.percentage_error([0, 0], [1, 0]))


def test_trial_seeds_depend_only_on_master_and_index():
    seeds = [hs.trial_seed(7, i) for i in range(5)]
    assert seeds == [hs.trial_seed(7, i) for i in range(5)]
    assert len(set(seeds)) == 5 and hs.trial_seed(8, 0) != seeds[0]


def test_single_trial_mean_equals_the_run():
    cfg = _cfg()
    res = hs.run_monte_carlo(cfg, workers=1)
    run = hs.run_single(cfg, hs.trial_seed(cfg.master_seed, 0))
    for m in cfg.methods:
        assert np.array_equal(res.stats[m]["mean"], run.traces[m].percentage_error, equal_nan=True)
        assert np.all(np.isnan(res.stats[m]["stderr"]))


def test_mc_mean_is_mean_of_trials_and_workers_agree():
    cfg = _cfg(trials=3)
    seq = hs.run_monte_carlo(cfg, workers=1)
    par = hs.run_monte_carlo(cfg, workers=2)
    for m in cfg.methods:
        E = np.vstack([r.traces[m].percentage_error for r in seq.trials])
        assert np.allclose(seq.stats[m]["mean"], np.nanmean(E, axis=0), equal_nan=True)
        sd = np.nanstd(E, axis=0, ddof=1) / np.sqrt(3)
        assert np.allclose(seq.stats[m]["stderr"], sd, equal_nan=True)
        assert np.array_equal(seq.stats[m]["mean"], par.stats[m]["mean"], equal_nan=True)


def test_no_foreground_scenario_gives_null_errors():
    cfg = _cfg(k_objects=0)
    run = hs.run_single(cfg)
    for tr in run.traces.values():
        assert np.all(np.isnan(tr.percentage_error))
        assert tr.false_positives.sum() == tr.support_size.sum()


def test_run_config_validation():
    with pytest.raises(ValueError):
        _cfg(methods=("nc", "magic"))
    with pytest.raises(ValueError):
        _cfg(trials=0)
    assert hs.with_trials(_cfg(), 4).trials == 4


def test_workers_env(monkeypatch):
    monkeypatch.setenv("RRPCP_THREADS", "3")
    assert hs._workers(10, None) == 3
    assert hs._workers(2, None) == 2
    assert hs._workers(10, 1) == 1


def test_noise_curve_matches_analytic():
    curve = hs.noise_energy_curve(0.9, 0.4, dt_max=5, trials=20000, seed=1)
    for j in (0, 1, 4):
        assert abs(curve.empirical_plain[j] - curve.analytic_plain[j]) < 3 * curve.stderr_plain[j]
        assert abs(curve.empirical_canceled[j] - curve.analytic_canceled[j]) < 3 * curve.stderr_canceled[j]
    assert curve.analytic_plain[0] == pytest.approx(0.514)


def test_timeline_extraction():
    cfg = small_scenario(horizon=120)
    m = hs.MethodTrace(
        method="nc", t=np.arange(301, 421), percentage_error=np.zeros(120), beta_sq=np.zeros(120),
        beta_resid_sq=np.zeros(120), eps_used=np.zeros(120), rank_est=np.zeros(120, int),
        status=["stable"] * 6 + ["detection"] * 20 + ["rotation"] * 30 + ["stable"] * 64,
        support_size=np.zeros(120, int), wall_ms=np.zeros(120), false_positives=np.zeros(120, int),
        coh_new=np.linspace(0, 1, 120), coh_del=np.where(np.arange(301, 421) > 380, 0.1, 1.0),
        events=[(307, "trigger"), (327, "detected:1"), (348, "merged:1:pruned=0")],
    )
    tl = hs.extract_timeline(m, cfg)
    assert tl.add_time == 305 and tl.detection_time == 307
    assert tl.first_estimate_time == 327 and tl.merge_time == 348
    assert tl.merge_coherence == pytest.approx(m.coh_new[47])
    assert tl.delete_time == 360 and tl.removal_time == 381
