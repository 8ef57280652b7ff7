import numpy as np
import pytest

from platoon_codesign.codesign import CostSpec, centralized_codesign
from platoon_codesign.platoon import VehicleParams
from platoon_codesign.sim import (CSV_FIELDS, Event, ExtrapolationError,
                                  LeaderProfile, NoiseSpec, Scenario,
                                  constant_profile, csv_header, default_profile,
                                  dissipation_check, leader_reference, metrics,
                                  read_csv, run, split_result, write_csv,
                                  write_plots)

QUIET = NoiseSpec(enabled=False)


@pytest.fixture(scope="module")
def small_design():
    return centralized_codesign([VehicleParams()] * 3, "II", CostSpec())


@pytest.fixture(scope="module")
def small_trace(small_design):
    sc = Scenario(small_design.params, noise=NoiseSpec(seed=3), horizon=3.0)
    return run(sc, small_design)


class TestLeader:
    @pytest.mark.parametrize("t, v", [(0.0, 0.0), (1.0, 15.0), (2.0, 30.0),
                                      (3.0, 35.0), (5.0, 40.0), (7.0, 30.0),
                                      (9.0, 20.0), (10.0, 20.0)])
    def test_reference(self, t, v):
        assert leader_reference(t) == pytest.approx(v)

    @pytest.mark.parametrize("t", [-0.1, 10.5])
    def test_extrapolation(self, t):
        with pytest.raises(ExtrapolationError):
            leader_reference(t)

    def test_acceleration_right_continuous(self):
        prof = default_profile()
        assert prof.acceleration(2.0) == 5.0
        assert prof.acceleration(1.999) == 15.0
        assert prof.acceleration(6.0) == -10.0

    def test_position_integrates_velocity(self):
        prof = default_profile()
        t = np.linspace(0, 10, 20001)
        v = np.array([prof.velocity(s) for s in t])
        ref = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))])
        assert prof.position(10.0) - prof.position(0.0) == pytest.approx(ref[-1], rel=1e-9)

    def test_discontinuity_rejected(self):
        with pytest.raises(ValueError):
            LeaderProfile(((0.0, 1.0, 0.0, 1.0), (1.0, 2.0, 5.0, 0.0)))

    def test_round_trip(self):
        prof = default_profile()
        assert LeaderProfile.from_list(prof.to_list()) == prof


class TestNoise:
    def test_reproducible(self):
        a, b = NoiseSpec(seed=5).source(2), NoiseSpec(seed=5).source(2)
        np.testing.assert_array_equal([a.sample() for _ in range(5)],
                                      [b.sample() for _ in range(5)])

    def test_hyperparameter_ranges(self):
        src = NoiseSpec(seed=1).source(1)
        assert np.all(np.abs(src.mean) <= 0.5)
        assert np.all((src.std >= 0) & (src.std <= 0.1))

    def test_disabled(self):
        assert not QUIET.source(1).sample().any()


class TestScenario:
    def test_validation(self):
        with pytest.raises(ValueError):
            Scenario([VehicleParams()], dt=0.0)
        with pytest.raises(ValueError):
            Scenario([VehicleParams()], events=[Event(20.0, "merge")])
        with pytest.raises(ValueError):
            Event(1.0, "split")
        with pytest.raises(ValueError):
            Event(1.0, "teleport")


class TestRun:
    def test_equilibrium(self, small_design):
        sc = Scenario(small_design.params, constant_profile(20.0), QUIET,
                      jitter=0.0, horizon=2.0)
        tr = run(sc, small_design)
        assert np.max(np.abs(tr.e)) < 1e-9
        m = metrics(tr)
        assert m.error_norm < 1e-9
        assert m.empirical_gain is None

    def test_deterministic(self, small_design, small_trace):
        sc = Scenario(small_design.params, noise=NoiseSpec(seed=3), horizon=3.0)
        again = run(sc, small_design)
        for f in ("x", "v", "a", "e", "g", "u", "w"):
            np.testing.assert_array_equal(getattr(again, f), getattr(small_trace, f))

    def test_seed_changes_trace(self, small_design, small_trace):
        sc = Scenario(small_design.params, noise=NoiseSpec(seed=4), horizon=3.0)
        assert not np.array_equal(run(sc, small_design).x, small_trace.x)

    def test_uniform_grid(self, small_trace):
        assert np.allclose(np.diff(small_trace.t), 1e-3)
        n = small_trace.t.size
        assert all(getattr(small_trace, f).shape[0] == n
                   for f in ("x", "v", "a", "e", "g", "u", "w"))

    def test_step_halving(self, small_design):
        def final(dt):
            sc = Scenario(small_design.params, noise=QUIET, dt=dt, horizon=3.0)
            tr = run(sc, small_design)
            return np.concatenate([tr.x[-1], tr.v[-1], tr.a[-1]])
        a, b = final(1e-3), final(5e-4)
        assert np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0)) < 1e-5

    def test_spacing_and_tracking(self, small_trace):
        m = metrics(small_trace)
        assert m.collisions == 0
        assert m.min_spacing > VehicleParams().L
        assert np.all(np.isfinite(small_trace.e))

    def test_dissipation_without_noise(self, small_design):
        sc = Scenario(small_design.params, noise=QUIET, horizon=3.0)
        chk = dissipation_check(run(sc, small_design), small_design)
        assert chk.ok

    def test_divergence_aborts(self, small_design):
        from platoon_codesign.codesign import SynthesisResult
        bad = SynthesisResult.from_dict(small_design.to_dict())
        bad.gains.Lbar[:] = [50.0, 50.0, 50.0]
        sc = Scenario(bad.params, noise=QUIET, horizon=3.0, divergence_bound=1e4)
        tr = run(sc, bad)
        assert tr.aborted and tr.diagnostic

    def test_collision_flagged(self, small_design):
        from platoon_codesign.codesign import SynthesisResult
        bad = SynthesisResult.from_dict(small_design.to_dict())
        bad.gains.Lbar[:] = 0.0
        bad.gains.K[:] = 0.0
        bad.gains.L[:] = 0.0
        sc = Scenario(bad.params, constant_profile(0.0), NoiseSpec(seed=0,
                      mean_range=(4.5, 5.0), std_range=(0.0, 0.0)),
                      horizon=2.0, jitter=0.0)
        tr = run(sc, bad)
        assert tr.collisions
        assert any(ev["kind"] == "collision" for ev in tr.events)
        assert not tr.aborted


class TestEvents:
    def test_split_event(self, small_design):
        sc = Scenario(small_design.params, noise=QUIET, horizon=2.0,
                      events=[Event(1.0, "split", index=2)])
        tr = run(sc, small_design)
        kinds = [ev["kind"] for ev in tr.events]
        assert kinds == ["split"]
        assert len(tr.versions) == 2
        assert [s.leader for s in tr.versions[-1][1].segments] == [0, 2]

    def test_split_result(self, small_design):
        res = split_result(small_design, 2)
        assert [s.leader for s in res.segments] == [0, 2]
        assert [s.followers for s in res.segments] == [[1], [3]]
        assert not res.gains.K[0, 1].any() and not res.gains.K[1, 0].any()

    def test_merge_needs_decentralized(self, small_design):
        sc = Scenario(small_design.params, noise=QUIET, horizon=1.0,
                      events=[Event(0.5, "merge")])
        with pytest.raises(ValueError):
            run(sc, small_design)

    def test_merge_event(self):
        from platoon_codesign.codesign import decentralized_codesign
        res, ledger = decentralized_codesign([VehicleParams()] * 3, "II")
        sc = Scenario(res.params, noise=QUIET, horizon=2.0,
                      events=[Event(1.0, "merge")])
        tr = run(sc, res, ledger)
        assert [ev["kind"] for ev in tr.events] == ["merge"]
        assert len(tr.versions) == 2 and tr.versions[-1][1].n == 4
        assert tr.n_slots == 4
        assert np.all(np.isnan(tr.x[:900, 3]))
        assert np.all(np.isfinite(tr.x[1100:, 3]))
        assert metrics(tr).collisions == 0


class TestExport:
    def test_csv(self, small_trace, tmp_path):
        path = write_csv(small_trace, tmp_path / "trace.csv")
        header, data = read_csv(path)
        assert header == csv_header(small_trace)
        assert header[:9] == ["t"] + [f"{f}_1" for f in CSV_FIELDS]
        assert data.shape == (small_trace.t.size, 1 + 8 * small_trace.n_slots)
        np.testing.assert_allclose(data[:, 1], small_trace.x[:, 0])

    def test_plots(self, small_trace, tmp_path):
        paths = write_plots(small_trace, tmp_path)
        assert len(paths) == 5
        assert all(p.suffix == ".svg" and p.stat().st_size > 0 for p in paths)
