import json
import math

import numpy as np
import pytest

from microcsi.evaluation import (
    INDISTINGUISHABLE,
    EvalConfig,
    Scenario,
    SweepConfig,
    ablation_sweep,
    compute_adr_far,
    enroll,
    make_fleet,
    round_robin_eval,
    simulate_scenario,
    sweep_table,
)
from microcsi.exceptions import InsufficientDataError
from microcsi.matcher import AuthDecision, auth_distance
from microcsi.sim import CASE2, make_device_profile, make_los_channel, synthesize_csi


def decisions(flags):
    return [AuthDecision(0.0, 1.0, f, "a", "manhattan") for f in flags]


class TestAdrFar:
    def test_perfect(self):
        assert compute_adr_far(decisions([True, True, False]), [True, True, False]) == (1.0, 0.0)

    def test_counting(self):
        accept = [False] * 14 + [True] * 9 + [False]
        truth = [False] * 14 + [True] * 10
        assert compute_adr_far(decisions(accept), truth) == (1.0, 0.1)

    def test_absent_categories(self):
        assert compute_adr_far([True, False], [True, True]) == (None, 0.5)
        assert compute_adr_far([True], [False]) == (0.0, None)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            compute_adr_far([True], [True, False])


@pytest.fixture(scope="module")
def long_stream():
    prof = make_device_profile(3, 0.04, device_id="solo")
    chans = [make_los_channel(9 + c) for c in range(4)]
    return synthesize_csi(prof, chans, snr_db=34.0, n_packets=2000, seed=2)


class TestEnroll:
    def test_partitioning(self, long_stream):
        lib = enroll(long_stream, "solo", 20)
        assert (lib.size, lib.k) == (100, 10)
        assert lib.metadata["n_csi"] == 20

    def test_single_packet_groups(self, long_stream):
        lib = enroll(long_stream, "solo", 1)
        assert (lib.size, lib.k) == (2000, 45)

    def test_insufficient(self, long_stream):
        with pytest.raises(InsufficientDataError):
            enroll(long_stream[:19], "solo", 20)

    def test_foreign_identity(self, long_stream):
        with pytest.raises(ValueError):
            enroll(long_stream, "other", 20)

    def test_skips_rejected_groups(self, long_stream):
        from microcsi.sim import inject_abnormal
        ms = [inject_abnormal(m, CASE2) if i < 20 else m for i, m in enumerate(long_stream[:100])]
        with pytest.warns(UserWarning, match="skipped 1"):
            lib = enroll(ms, "solo", 20)
        assert lib.size == 4


@pytest.fixture(scope="module")
def small_data():
    sc = Scenario(n_devices=4, n_rx=2, n_packets=200, seed=11, n_models=2)
    return sc, simulate_scenario(sc)


class TestRoundRobin:
    def test_report_shape(self, small_data):
        sc, (enr, tst) = small_data
        rep = round_robin_eval(enr, tst, EvalConfig(n_csi_values=(1, 10)))
        assert len(rep.rows) == 4 * 2 * 2
        assert [r.device for r in rep.rows[:4]] == ["dev00"] * 4
        for r in rep.rows:
            assert 0 <= r.adr <= 1 and 0 <= r.far <= 1 and r.n_tests > 0
            assert r.n_legit + r.n_impostor == r.n_tests
        assert rep.rows[0].n_tests == 4 * 200

    def test_averages_consistent(self, small_data):
        _, (enr, tst) = small_data
        rep = round_robin_eval(enr, tst, EvalConfig(n_csi_values=(5,)))
        for avg in rep.averages():
            rows = [r for r in rep.rows if (r.n_csi, r.metric, r.far_target) ==
                    (avg["n_csi"], avg["metric"], avg["far_target"])]
            assert abs(avg["adr"] - np.mean([r.adr for r in rows])) < 1e-12
            assert abs(avg["far"] - np.mean([r.far for r in rows])) < 1e-12
        assert rep.average(5)["n_devices"] == 4

    def test_calibration_tautology(self, small_data):
        _, (enr, _) = small_data
        cfg = EvalConfig(n_csi_values=(1, 5), far_targets=(0.0,), calibration_fraction=0.0)
        rep = round_robin_eval(enr, enr, cfg)
        assert all(r.far == 0.0 for r in rep.rows)

    def test_deterministic(self, small_data):
        _, (enr, tst) = small_data
        cfg = EvalConfig(n_csi_values=(5,), metrics=("manhattan", "hermitian_angle"))
        a = round_robin_eval(enr, tst, cfg).to_records()
        b = round_robin_eval(enr, tst, cfg).to_records()
        assert a == b
        assert simulate_scenario(Scenario(n_devices=2, n_packets=20))[0][5].chains.tobytes() == \
            simulate_scenario(Scenario(n_devices=2, n_packets=20))[0][5].chains.tobytes()

    def test_clones_flagged(self):
        sc = Scenario(n_devices=3, n_rx=2, n_packets=200, seed=4, clones={1: 0})
        fleet = make_fleet(sc)
        np.testing.assert_array_equal(fleet[0].distortion, fleet[1].distortion)
        rep = round_robin_eval(*simulate_scenario(sc), EvalConfig(n_csi_values=(10,), far_targets=(0.0,)))
        row = next(r for r in rep.rows if r.device == "dev00")
        assert f"{INDISTINGUISHABLE}:dev01" in row.flags
        assert "dev01" in rep.to_table()
        # dev02 is still caught; the clone drags ADR towards one minus its share
        assert row.adr < 0.75

    def test_missing_device(self, small_data):
        _, (enr, tst) = small_data
        with pytest.raises(ValueError, match="different devices"):
            round_robin_eval(enr, [m for m in tst if m.device_id != "dev03"])

    def test_records_serializable(self, small_data):
        _, (enr, tst) = small_data
        rep = round_robin_eval(enr, tst, EvalConfig(n_csi_values=(10,)), settings={"tag": "x"})
        recs = rep.to_records()
        json.dumps(recs, allow_nan=False)
        assert {r["kind"] for r in recs} == {"device", "average"}
        assert all(r["tag"] == "x" for r in recs)
        table = rep.to_table()
        assert table.splitlines()[0].split()[:2] == ["N_csi", "metric"]


def test_legit_closer_than_impostor():
    """A legitimate fingerprint is nearer its own library than to an impostor's."""
    fleet = make_fleet(Scenario(n_devices=2, seed=5))
    libs, tests = [], []
    for i, prof in enumerate(fleet):
        enr = synthesize_csi(prof, [make_los_channel(40 + 4 * i + c) for c in range(4)], 34.0, 2000, seed=i)
        libs.append(enroll(enr, prof.device_id, 20))
        tst = []
        for block in range(10):
            chans = [make_los_channel(1000 + 40 * i + 4 * block + c) for c in range(4)]
            tst += synthesize_csi(prof, chans, 34.0, 100, seed=50 + i, start_index=100 * block)
        tests.append(enroll(tst, prof.device_id, 20).fingerprints)
    wins = [auth_distance(t, libs[i]) < auth_distance(t, libs[1 - i]) for i in range(2) for t in tests[i]]
    assert libs[0].size == 100 and libs[0].k == 10
    assert np.mean(wins) >= 0.99


def test_config_from_dict():
    sc = Scenario.from_dict({"n_devices": 3, "intensity_range": [0.02, 0.03], "clones": {"2": "0"}})
    assert sc.intensity_range == (0.02, 0.03) and sc.clones == {2: 0}
    ec = EvalConfig.from_dict({"n_csi_values": [1, 2], "metrics": ["euclidean"]})
    assert ec.n_csi_values == (1, 2)
    sw = SweepConfig.from_dict({"n_p_values": [4, 8], "normalize": True, "base": {"omega1": math.inf}})
    assert sw.n_p_values == (4, 8) and sw.normalize == (True,) and sw.base.omega1 == math.inf
    for cls in (Scenario, EvalConfig, SweepConfig):
        with pytest.raises(ValueError):
            cls.from_dict({"bogus": 1})


def test_ablation_sweep(small_data):
    _, (enr, tst) = small_data
    sc = SweepConfig(metrics=("manhattan", "euclidean"), normalize=(True, False), n_p_values=(4, 8),
                     n_csi_values=(10,))
    reports = ablation_sweep(enr, tst, sc)
    assert len(reports) == 4
    rows = sweep_table(reports)
    assert len(rows) == 4 * 2
    assert {(r["n_p"], r["normalize"]) for r in rows} == {(4, True), (4, False), (8, True), (8, False)}
    assert all({"adr", "far", "metric", "n_csi", "outlier_elimination"} <= set(r) for r in rows)


@pytest.fixture(scope="module")
def drifting_data():
    return simulate_scenario(Scenario(n_packets=400, intensity_drift=0.2))


def test_normalization_absorbs_intensity_drift(drifting_data):
    sc = SweepConfig(normalize=(True, False), n_csi_values=(1,), far_targets=(0.0,))
    rows = sweep_table(ablation_sweep(*drifting_data, sc))
    adr = {r["normalize"]: r["adr"] for r in rows}
    assert adr[True] > adr[False]


def test_zero_drift_is_bit_identical():
    a, _ = simulate_scenario(Scenario(n_devices=2, n_packets=30))
    b, _ = simulate_scenario(Scenario(n_devices=2, n_packets=30, intensity_drift=0.0))
    assert all(np.array_equal(x.chains, y.chains) for x, y in zip(a, b))


def test_np_tradeoff():
    # Larger N_p clears the channel leakage but also projects out more of a smooth distortion.
    from microcsi.ofdm import projector_for
    fs = [make_device_profile(s, 0.05).distortion for s in range(50)]
    hs = [make_los_channel(s, 8).freq_response for s in range(50)]
    kept, leak = [], []
    for n_p in (2, 4, 6, 8, 10, 12):
        r = np.eye(52) - projector_for(n_p)[1]
        kept.append(np.mean([np.linalg.norm(r @ f) / np.linalg.norm(f) for f in fs]))
        leak.append(max(np.linalg.norm(r @ h) / np.linalg.norm(h) for h in hs))
    assert np.all(np.diff(kept) < 0)
    assert all(x < 1e-9 for x in leak[3:]) and all(x > 1e-4 for x in leak[:3])


@pytest.mark.xfail(strict=True, reason="smooth distortions favour small N_p on this simulator; see README")
def test_np_sweep_peaks_at_simulated_support():
    enr, tst = simulate_scenario(Scenario(n_packets=400))
    sc = SweepConfig(n_p_values=(2, 4, 6, 8, 10, 12), n_csi_values=(1,), far_targets=(0.0,))
    rows = sweep_table(ablation_sweep(enr, tst, sc))
    adr = {r["n_p"]: r["adr"] for r in rows}
    assert max(adr, key=adr.get) == 8
