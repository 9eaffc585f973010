import csv
import json

import numpy as np
import pytest
from scipy import stats

from nprach import harness as H
from nprach.geometry import SET_1, SET_2
from nprach.receiver import CalibrationError, DetectionResult, Threshold


def _thr(camp, normalized=0.0):
    rc = camp.receiver
    return Threshold(normalized, 1e-3, camp.n_rep, rc.l_cp, rc.n_rx, 100_000)


@pytest.fixture(scope="module")
def small():
    return H.make_campaign(32, [np.inf], md_rtd=800e-6, trials_per_point=100, n_active_ue=1)


# ---------------------------------------------------------------- campaign setup


def test_make_campaign_matches_beam():
    c = H.make_campaign(64, [9.3], payload=SET_2, elevation=31.0)
    assert c.receiver.l_cp == 4
    assert c.md_rtd == pytest.approx(1324.7e-6, rel=1e-3)
    assert c.receiver.alpha_min_sc == c.geometry.alpha_min_sc
    c1 = H.make_campaign(32, [14.8], payload=SET_1, elevation=30.0)
    assert c1.receiver.l_cp == 3
    assert H.make_campaign(32, [6.4], md_rtd=533.3e-6).receiver.l_cp == 1


def test_campaign_validation():
    geo = H.beam_report(md_rtd=800e-6)
    rc = H.make_campaign(4, [0.0], md_rtd=800e-6).receiver
    with pytest.raises(H.ConfigError):
        H.Campaign(geo, rc, n_active_ue=4)
    with pytest.raises(H.ConfigError):
        H.Campaign(geo, rc, engine="gpu")
    with pytest.raises(Exception):
        H.Campaign(geo, rc, n_rep=3)
    with pytest.raises(H.ConfigError):
        H.beam_report(elevation=30.0, md_rtd=800e-6)


# ---------------------------------------------------------------- classification and statistics


def test_classify_trial():
    det = DetectionResult(True, 0, 1.0, toa_resolved=103.0e-6)
    assert H.classify_trial(100e-6, det) == "correct"
    assert H.classify_trial(99e-6, det) == "bad_toa"
    assert H.classify_trial(100e-6, det, preamble_ok=False) == "wrong_preamble"
    assert H.classify_trial(100e-6, DetectionResult(False, 0, 0.0)) == "missed"
    assert H.classify_trial(0.0, DetectionResult(True, 0, 1.0)) == "bad_toa"  # NaN delay


def test_classify_batch_matches_scalar():
    rng = np.random.default_rng(0)
    det = rng.random(200) < 0.8
    toa = rng.uniform(0, 10e-6, 200)
    toa[::17] = np.nan
    D = np.full(200, 5e-6)
    codes = H._classify_batch(det, toa, D, 3.646e-6)
    for i in range(200):
        r = DetectionResult(bool(det[i]), 0, 1.0, toa_resolved=toa[i])
        assert H.OUTCOMES[codes[i]] == H.classify_trial(D[i], r)


@pytest.mark.parametrize("k,n", [(0, 100), (10, 1000), (200, 20000), (1000, 1000)])
def test_clopper_pearson(k, n):
    ci = stats.binomtest(k, n).proportion_ci(0.95, method="exact")
    assert H.clopper_pearson(k, n) == pytest.approx((ci.low, ci.high), abs=1e-12)


def test_extract_cdf():
    tab = H.extract_cdf(np.full(50, 2.5), [1, 50, 99, 100])
    assert [v for _, v in tab] == [2.5] * 4
    assert H.extract_cdf(np.arange(101.0), [0, 50, 100]) == [(0.0, 0.0), (50.0, 50.0), (100.0, 100.0)]
    with pytest.raises(ValueError):
        H.extract_cdf([], [50])


def test_false_alarm_trivial_thresholds():
    rc = H.make_campaign(4, [0.0], md_rtd=800e-6).receiver
    assert H.measure_false_alarm(rc, 4, 500, 0.0) == 1.0
    assert H.measure_false_alarm(rc, 4, 500, np.inf) == 0.0


# ---------------------------------------------------------------- runs


def test_noiseless_campaign_has_no_misses(small):
    res = H.run_campaign(small, _thr(small))
    p = res.points[0]
    assert p.trials == 100 and p.missed == 0
    assert p.counts["correct"] == 100
    assert p.toa_err.size == 100 and p.toa_err.max() <= small.receiver.toa_pass_bound


def test_noiseless_three_ue_campaign():
    # at 32 reps neighbour leakage alone can push the rate estimate past the
    # tight candidate spacing of this beam; 64 reps resolve it
    c = H.make_campaign(64, [np.inf], payload=SET_1, elevation=30.0, trials_per_point=100, n_active_ue=3)
    assert H.run_campaign(c, _thr(c)).points[0].missed == 0


def test_refuses_without_threshold(small):
    with pytest.raises(CalibrationError):
        H.run_campaign(small, None)
    bad = Threshold(0.0, 1e-3, 64, small.receiver.l_cp, small.receiver.n_rx, 100_000)
    with pytest.raises(CalibrationError):
        H.run_campaign(small, bad)


@pytest.fixture(scope="module")
def noisy():
    c = H.make_campaign(4, [0.0, 6.0], md_rtd=800e-6, trials_per_point=600, n_active_ue=3, master_seed=7)
    return c, H.calibrate_for(c, pfa=1e-2, trials=10_000, seed=3)


def _same(a, b):
    for p, q in zip(a.points, b.points):
        assert p.counts == q.counts
        assert np.array_equal(p.toa_err, q.toa_err)
        assert np.array_equal(p.alpha_err, q.alpha_err)


def test_deterministic_under_seed(noisy):
    c, thr = noisy
    _same(H.run_campaign(c, thr), H.run_campaign(c, thr))


def test_independent_of_worker_count(noisy, monkeypatch):
    c, thr = noisy
    serial = H.run_campaign(c, thr, threads=1)
    monkeypatch.setenv("NPRACH_THREADS", "2")
    assert H._workers(None) == 2
    _same(serial, H.run_campaign(c, thr))


def test_seed_changes_results(noisy):
    c, thr = noisy
    a = H.run_campaign(c, thr)
    b = H.run_campaign(H.replace(c, master_seed=8), thr)
    assert not np.array_equal(a.points[0].toa_err, b.points[0].toa_err)


def test_time_engine_matches_symbol_engine():
    c = H.make_campaign(4, [np.inf], md_rtd=800e-6, trials_per_point=12, n_active_ue=3, chunk_size=6)
    a = H.run_campaign(c, _thr(c))
    b = H.run_campaign(H.replace(c, engine="time"), _thr(c))
    assert a.points[0].counts == b.points[0].counts
    np.testing.assert_allclose(a.points[0].alpha_err, b.points[0].alpha_err, atol=1e-9)
    np.testing.assert_allclose(a.points[0].toa_err, b.points[0].toa_err, atol=1e-12)


def test_monotone_in_snr_and_repetitions():
    rates = {}
    for n_rep in (32, 64):
        c = H.make_campaign(n_rep, [-4.0, 0.0, 4.0], md_rtd=800e-6, trials_per_point=1000, master_seed=1)
        thr = H.calibrate_for(c, pfa=1e-2, trials=10_000)
        res = H.run_campaign(c, thr)
        rates[n_rep] = [(p.rate, p.ci()) for p in res.points]
        for (r0, ci0), (r1, _) in zip(rates[n_rep], rates[n_rep][1:]):
            assert r1 <= ci0[1]
    for (r64, _), (_, ci32) in zip(rates[64], rates[32]):
        assert r64 <= ci32[1]


# ---------------------------------------------------------------- config and outputs


def test_config_defaults_and_errors(tmp_path):
    cfg = H.load_config({"geometry": {"md_rtd_us": 800}})
    assert cfg["campaign"]["trials_per_point"] == 20_000
    assert cfg["campaign"]["false_alarm_trials"] == 100_000
    with pytest.raises(H.ConfigError):
        H.load_config({"geometry": {"md_rtd_us": 800}, "extra": {}})
    with pytest.raises(H.ConfigError):
        H.load_config({"geometry": {"md_rtd_us": 800, "tilt": 3}})
    with pytest.raises(H.ConfigError):
        H.load_config({"geometry": {}})
    with pytest.raises(H.ConfigError):
        H.load_config({"geometry": {"md_rtd_us": 800, "elevation": 40}})
    with pytest.raises(H.ConfigError):
        H.load_config({"geometry": {"md_rtd_us": 800, "payload": "Set-9"}})
    with pytest.raises(H.ConfigError):
        H.load_config("{not json")
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"geometry": {"elevation": 42.1}, "scenario": {"n_rep": 32}}))
    assert H.load_config(p)["scenario"]["n_rep"] == 32
    assert H.load_config(str(p))["geometry"]["elevation"] == 42.1


def test_campaign_from_config():
    cfg = H.load_config(
        {
            "scenario": {"n_rep": 32, "n_active_ue": 3},
            "geometry": {"md_rtd_us": 533.3},
            "campaign": {"snr_db": [6.4], "trials_per_point": 50, "master_seed": 4},
        }
    )
    c = H.campaign_from_config(cfg)
    assert (c.n_rep, c.n_active_ue, c.master_seed, c.snr_points) == (32, 3, 4, (6.4,))
    assert c.receiver.l_cp == 1
    assert H.campaign_from_config(cfg, master_seed=9).master_seed == 9


def test_threshold_roundtrip(tmp_path):
    thr = Threshold(123.5, 1e-3, 64, 2, 2, 100_000, "ntn", 0)
    H.save_threshold(tmp_path / "t.json", thr)
    assert H.load_threshold(tmp_path / "t.json") == thr


def test_output_files(tmp_path, small):
    res = H.run_campaign(small, _thr(small))
    H.write_outputs(tmp_path, res, [(4, 2, 2, 1000, 1, 0.001, 5.0)])

    def rows(name):
        with open(tmp_path / name, encoding="utf-8") as f:
            return list(csv.reader(f))

    det = rows("detection.csv")
    assert det[0] == ["snr_db", "n_rep", "md_rtd_us", "n_ue", "trials", "missed", "rate", "ci_lo", "ci_hi"]
    assert det[1][1] == "32" and float(det[1][2]) == pytest.approx(small.md_rtd * 1e6, abs=1e-3)
    assert det[1][3:6] == ["1", "100", "0"]
    for name in ("toa_cdf.csv", "doppler_cdf.csv"):
        r = rows(name)
        assert r[0] == ["percentile", "value"] and len(r) == 101
    fa = rows("falsealarm.csv")
    assert fa[0] == ["n_rep", "l_cp", "n_rx", "trials", "false_alarms", "rate", "threshold"]
    assert len(fa) == 2


def test_fractional_delays_time_matches_symbol_engine():
    c = H.make_campaign(
        4, [np.inf], md_rtd=800e-6, trials_per_point=8, n_active_ue=3, chunk_size=4, delay_oversample=4
    )
    a = H.run_campaign(c, _thr(c))
    b = H.run_campaign(H.replace(c, engine="time"), _thr(c))
    assert a.points[0].counts == b.points[0].counts
    np.testing.assert_allclose(a.points[0].alpha_err, b.points[0].alpha_err, atol=1e-3)
    np.testing.assert_allclose(a.points[0].toa_err, b.points[0].toa_err, atol=1e-12)


def test_delay_oversample_validation_and_config():
    geo = H.beam_report(md_rtd=800e-6)
    rc = H.make_campaign(4, [0.0], md_rtd=800e-6).receiver
    with pytest.raises(H.ConfigError):
        H.Campaign(geo, rc, delay_oversample=0)
    cfg = H.load_config({"geometry": {"md_rtd_us": 800}, "scenario": {"delay_oversample": 8}})
    assert H.campaign_from_config(cfg).delay_oversample == 8
