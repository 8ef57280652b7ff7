import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from platoon_codesign.platoon import (A_ERR, B_ERR, ErrorState, GainSet,
                                      StructureError, TopologyError, VehicleParams,
                                      VehicleState, check_structure, control,
                                      control_all, drift, error_state_I,
                                      error_state_II, errors_all, extract_gains,
                                      geometry, linearizing_input, structure_mask)
from platoon_codesign.sim import rk4_step

PARAMS = VehicleParams()


def random_K(rng, n, formulation):
    K = np.zeros((n, n, 3, 3))
    for i in range(n):
        for j in range(n):
            mask = structure_mask(formulation, i == j)
            K[i, j][mask] = rng.normal(size=mask.sum()) * (rng.random() < 0.7)
    return K


def random_gains(rng, n, formulation):
    return extract_gains(random_K(rng, n, formulation), formulation,
                         rng.normal(size=(n, 3)))


class TestParams:
    @pytest.mark.parametrize("field", ["m", "tau", "A_f", "rho_air", "L", "delta"])
    def test_positive(self, field):
        with pytest.raises(ValueError):
            VehicleParams(**{field: 0.0})


class TestDrift:
    def test_rest(self):
        assert drift(PARAMS, 0.0, 0.0) == pytest.approx(-0.268)

    def test_unit_acceleration(self):
        assert drift(PARAMS, 0.0, 1.0) == pytest.approx(-4.268)

    def test_no_rolling_resistance(self):
        assert drift(VehicleParams(C_r=0.0), 0.0, 0.0) == 0.0

    def test_linearizing_input(self):
        assert PARAMS.m * PARAMS.tau == 375.0
        u0 = linearizing_input(PARAMS, 0.0, 0.0, 0.0)
        assert u0 == pytest.approx(100.5)
        assert linearizing_input(PARAMS, 0.0, 0.0, 1.0) - u0 == pytest.approx(375.0)


def plant(params, u_of):
    # longitudinal model written out independently of the package
    p = params

    def f(s):
        x, v, a = s
        adot = -(a + p.C_r + p.rho_air * p.A_f * p.C_d * v / (2 * p.m)
                 * (v + 2 * p.tau * a)) / p.tau + u_of(v, a) / (p.m * p.tau)
        return np.array([v, a, adot])
    return f


def test_triple_integrator_equivalence():
    g0 = 0.3
    nonlinear = plant(PARAMS, lambda v, a: linearizing_input(PARAMS, v, a, g0))
    linear = lambda s: A_ERR @ s + B_ERR[:, 0] * g0
    s1 = s2 = np.array([0.0, 20.0, 0.5])
    worst = 0.0
    for _ in range(10000):
        s1 = rk4_step(nonlinear, s1, 1e-3)
        s2 = rk4_step(linear, s2, 1e-3)
        worst = max(worst, np.max(np.abs(s1 - s2)))
    assert worst < 1e-6
    assert nonlinear(s1)[2] == pytest.approx(g0, abs=1e-9)


class TestGeometry:
    def test_offsets(self):
        geo = geometry([PARAMS] * 3)
        assert geo.d[0] == 0.0
        assert geo.d[1] == pytest.approx(7.5)
        assert geo.d[3] == pytest.approx(22.5)
        assert geo.d_ij(3, 1) == pytest.approx(15.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            geometry([])


class TestStructure:
    def test_masks(self):
        assert structure_mask("I", False).sum() == 1
        assert structure_mask("I", True).sum() == 4
        assert structure_mask("II", False)[2].all()
        with pytest.raises(ValueError):
            structure_mask("III", False)

    def test_violation_named(self):
        K = np.zeros((2, 2, 3, 3))
        K[0, 1][0, 0] = 1.0
        with pytest.raises(StructureError, match=r"K\[1,2\] entry \(1,1\)"):
            check_structure(K, "II")

    def test_formulation_I_diagonal_convention(self):
        K = np.zeros((2, 2, 3, 3))
        K[0, 0][1, 2] = K[1, 1][1, 2] = -1.0
        gs = extract_gains(K, "I", np.zeros((2, 3)))
        np.testing.assert_array_equal(gs.kbar, np.zeros((2, 3)))

    def test_sign_convention(self):
        K = np.zeros((2, 2, 3, 3))
        K[0, 1][1, 2] = -0.4
        gs = extract_gains(K, "I", np.zeros((2, 3)))
        assert gs.kbar[0, 2] == pytest.approx(0.4)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 6),
           formulation=st.sampled_from(["I", "II"]))
    def test_round_trip(self, seed, n, formulation):
        rng = np.random.default_rng(seed)
        K = random_K(rng, n, formulation)
        gs = extract_gains(K, formulation, rng.normal(size=(n, 3)))
        np.testing.assert_allclose(gs.rebuild_K(), K, atol=1e-12)
        for i in range(n):
            rest = sum(K[i, j] for j in range(n) if j != i)
            np.testing.assert_allclose(K[i, i], gs.K0[i] - rest, atol=1e-9)
        again = GainSet.from_dict(gs.to_dict())
        np.testing.assert_array_equal(again.K, gs.K)

    def test_dense_layout(self, rng):
        gs = random_gains(rng, 3, "II")
        D = gs.dense_K()
        np.testing.assert_array_equal(D[3:6, 6:9], gs.K[1, 2])


def states_at_slots(geo, x0=100.0, v=20.0, a=0.3):
    x = x0 - geo.d
    return x, np.full_like(x, v), np.full_like(x, a)


class TestErrorStates:
    def test_equilibrium(self, rng):
        geo = geometry([PARAMS] * 4)
        gs = random_gains(rng, 4, "I")
        x, v, a = states_at_slots(geo)
        for i in range(1, 5):
            assert error_state_I(i, x, v, a, gs, geo).as_array() == pytest.approx(0.0, abs=1e-12)
            e = error_state_II(i, VehicleState(x[i], v[i], a[i]),
                               VehicleState(x[0], v[0], a[0]), geo)
            assert e.as_array() == pytest.approx(0.0, abs=1e-12)

    def test_single_leader_weight(self):
        geo = geometry([PARAMS])
        K = np.zeros((1, 1, 3, 3))
        gs = extract_gains(K, "I", np.zeros((1, 3)))  # kbar_10 = 1
        assert gs.kbar[0, 0] == 1.0
        x, v, a = states_at_slots(geo)
        x[1] += 1.0
        eI = error_state_I(1, x, v, a, gs, geo)
        eII = error_state_II(1, VehicleState(x[1], v[1], a[1]),
                             VehicleState(x[0], v[0], a[0]), geo)
        assert eI.x == pytest.approx(1.0)
        np.testing.assert_allclose(eI.as_array(), eII.as_array(), atol=1e-12)

    def test_slot_offset(self):
        geo = geometry([PARAMS] * 2)
        lead = VehicleState(50.0, 10.0, 0.0)
        e = error_state_II(2, VehicleState(50.0 - 15.0 + 2.0, 10.0, 0.0), lead, geo)
        assert e == ErrorState(2.0, 0.0, 0.0)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 6),
           formulation=st.sampled_from(["I", "II"]))
    def test_vectorized_matches_direct_sum(self, seed, n, formulation):
        rng = np.random.default_rng(seed)
        geo = geometry([VehicleParams(L=rng.uniform(2, 5), delta=rng.uniform(3, 8))
                        for _ in range(n)])
        gs = random_gains(rng, n, formulation)
        x, v, a = (rng.normal(size=n + 1) * 3 for _ in range(3))
        E = errors_all(x, v, a, gs, geo)
        for i in range(1, n + 1):
            if formulation == "I":
                kb = gs.kbar[i - 1]
                xt = sum(kb[j] * (x[i] - x[j] - (geo.d[j] - geo.d[i]))
                         for j in range(n + 1) if j != i)
                vt = sum(kb[j] * (v[i] - v[j]) for j in range(n + 1) if j != i)
                ref = [xt, vt, a[i] - a[0]]
                np.testing.assert_allclose(error_state_I(i, x, v, a, gs, geo).as_array(),
                                           ref, atol=1e-12)
            else:
                ref = [x[i] - x[0] + geo.d[i], v[i] - v[0], a[i] - a[0]]
            np.testing.assert_allclose(E[i - 1], ref, atol=1e-12)


class TestControl:
    def test_zero_errors(self, rng):
        gs = random_gains(rng, 3, "II")
        errs = {j: np.zeros(3) for j in (1, 2, 3)}
        assert control(2, gs, errs) == 0.0

    def test_unit_probe_formulation_I(self, rng):
        gs = random_gains(rng, 2, "I")
        g = control(1, gs, {1: ErrorState(1.0, 0.0, 0.0)})
        assert g == pytest.approx(gs.Lbar[0, 0] + gs.L[0, 0, 0])

    def test_missing_neighbour(self):
        K = np.zeros((2, 2, 3, 3))
        K[0, 1][2, 0] = 1.0
        gs = extract_gains(K, "II", np.zeros((2, 3)))
        with pytest.raises(TopologyError):
            control(1, gs, {1: np.zeros(3)})

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 6),
           formulation=st.sampled_from(["I", "II"]))
    def test_matches_direct_sum(self, seed, n, formulation):
        rng = np.random.default_rng(seed)
        gs = random_gains(rng, n, formulation)
        E = rng.normal(size=(n, 3))
        g = control_all(gs, E)
        for i in range(n):
            if formulation == "I":
                ref = gs.Lbar[i] @ E[i] + gs.L[i, i] @ E[i]
            else:
                ref = gs.Lbar[i] @ E[i] + sum(gs.K[i, j][2] @ E[j] for j in range(n))
            assert g[i] == pytest.approx(ref, abs=1e-12)
            assert control(i + 1, gs, {j + 1: E[j] for j in range(n)}) == pytest.approx(ref, abs=1e-12)
