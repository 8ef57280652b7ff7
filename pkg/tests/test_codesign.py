import json

import numpy as np
import pytest

from platoon_codesign.blockmat import sylvester_decompose
from platoon_codesign.codesign import (CostSpec, PlatoonLedger, SynthesisResult,
                                       centralized_codesign,
                                       certify_weak_string_stability,
                                       decentralized_codesign, decentralized_step,
                                       lemma1_check, lemma1_region, merge,
                                       split_ledger, weak_coupling_metric)
from platoon_codesign.dissipativity import InfeasibleError, is_hurwitz
from platoon_codesign.platoon import VehicleParams, check_structure, extract_gains

GAMMA_BAR = 10.0


class TestLemma1:
    def test_region(self):
        box = lemma1_region(1.0 / 9.0, 1.0)
        assert box.nu_lo == pytest.approx(-9.0)
        assert box.rho_tilde_hi == pytest.approx(1.0 / 9.0)
        assert box.contains(-1.0, 0.05)
        assert not box.contains(1.0, 0.05)
        assert not box.contains(-1.0, 0.2)

    def test_nonpositive_weight(self):
        with pytest.raises(ValueError):
            lemma1_region(0.0, 1.0)

    def test_positive_nu_fails(self, central_II):
        cert = central_II.certs[0]
        bad = type(cert)(0.5, cert.rho, cert.gamma_tilde, cert.p, cert.P, cert.Lbar)
        assert not lemma1_check(bad)

    @pytest.mark.parametrize("seed", range(3))
    def test_synthesis_implies_check(self, seed):
        from platoon_codesign.codesign import synthesize_locals
        rng = np.random.default_rng(seed)
        p = rng.uniform(0.05, 1.0, 4)
        assert all(lemma1_check(c) for c in synthesize_locals(4, p))


class TestCostSpec:
    def test_distance_rule(self):
        C = CostSpec().matrix(4)
        assert C[0, 3] == 3.0 and C[2, 2] == 0.0

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            CostSpec(c=-np.ones((2, 2)))
        with pytest.raises(ValueError):
            CostSpec(gamma_bar=0.0)

    def test_round_trip(self):
        c = CostSpec(np.array([[0.0, 2.0], [1.0, 0.0]]), 2.0, [1.0, 3.0], 0.5, 7.0)
        again = CostSpec.from_dict(c.to_dict())
        np.testing.assert_array_equal(again.matrix(2), c.matrix(2))
        assert again.gamma_bar == 7.0


class TestCentralized:
    @pytest.mark.parametrize("name", ["central_I", "central_II"])
    def test_regime(self, name, request):
        res = request.getfixturevalue(name)
        assert 0.0 < res.gamma_tilde < GAMMA_BAR
        check_structure(res.gains.K, res.formulation)
        assert res.checks["network_analysis"]
        assert res.checks["lemma1"]
        assert is_hurwitz(res.gains.closed_loop_matrix())

    def test_achieved_gain_frozen(self, central_II):
        # the optimum only uses leader edges; both formulations agree
        assert central_II.gamma_tilde == pytest.approx(2.703474, abs=1e-4)
        assert set(central_II.edges()) == {(i, 0) for i in range(1, 10)}

    def test_diagonal_identity(self, central_II):
        K = central_II.gains.K
        for i in range(K.shape[0]):
            rest = sum(K[i, j] for j in range(K.shape[0]) if j != i)
            np.testing.assert_allclose(K[i, i], central_II.gains.K0[i] - rest, atol=1e-9)

    def test_single_follower(self):
        res = centralized_codesign([VehicleParams()], "II")
        assert 0.0 < res.gamma_tilde < GAMMA_BAR

    def test_impossible_bound(self):
        with pytest.raises(InfeasibleError):
            centralized_codesign([VehicleParams()] * 2, "II", CostSpec(gamma_bar=1e-6))

    def test_wss_certificate(self, central_II):
        cert = certify_weak_string_stability(central_II)
        assert cert.slope == GAMMA_BAR
        bad = SynthesisResult.from_dict(central_II.to_dict())
        bad.gamma_tilde = 12.0
        with pytest.raises(ValueError):
            certify_weak_string_stability(bad)


class TestDecentralized:
    def test_all_steps_feasible(self, decentral_II):
        res, ledger = decentral_II
        assert res.checks["splits"] == 0
        assert len(ledger.segments) == 1 and len(ledger.segments[0].order) == 9
        assert res.gamma_tilde < GAMMA_BAR
        assert res.checks["network_analysis"]
        assert res.checks["hurwitz"]
        check_structure(res.gains.K, "II")

    def test_global_certificate(self, decentral_II):
        _, ledger = decentral_II
        assert sylvester_decompose(ledger.assemble_w(0)).positive

    def test_conservatism(self, decentral_II, central_II):
        res, _ = decentral_II
        assert res.gamma_tilde >= central_II.gamma_tilde

    def test_first_step_is_diagonal_block(self, decentral_II):
        _, ledger = decentral_II
        w = ledger.assemble_w(0)
        assert np.linalg.eigvalsh(w[0, 0])[0] > 0

    def test_step_is_pure(self, decentral_II):
        _, ledger = decentral_II
        before = json.dumps(ledger.to_result().to_dict())
        probe = PlatoonLedger.from_result(ledger.to_result())
        vid = probe.add_vehicle(VehicleParams())
        log = probe.solve_log[:]
        step = decentralized_step(probe, vid)
        assert step.ok
        assert probe.solve_log == log
        assert vid not in probe.segments[0].order
        assert json.dumps(ledger.to_result().to_dict()) == before

    def test_formulation_I(self, platoon_params):
        res, ledger = decentralized_codesign(platoon_params[:4], "I")
        assert ledger.verify()["sylvester"]
        check_structure(res.gains.K, "I")

    def test_string_stability_variant(self):
        res, ledger = decentralized_codesign([VehicleParams()] * 5, "II",
                                             string_stability=True)
        for seg in ledger.segments:
            g = [seg.gamma_hat[v] for v in seg.order]
            assert all(b < a for a, b in zip(g, g[1:]))
        assert ledger.verify()["sylvester"]

    def test_split_on_infeasible_step(self):
        # a tight bound forces every vehicle to lead its own segment
        costs = CostSpec(gamma_bar=2.70348)
        res, ledger = decentralized_codesign([VehicleParams()] * 3, "II", costs)
        assert sum(len(s.order) for s in ledger.segments) == 3
        assert ledger.verify()["sylvester"]


class TestMerge:
    def test_snapshot_diff(self, decentral_II):
        _, ledger = decentral_II
        old = ledger
        new = merge(ledger, VehicleParams())
        assert new.solve_log[len(old.solve_log):] == [("local", 10), ("step", 10)]
        seg_old, seg_new = old.segments[0], new.segments[0]
        for key, blk in seg_old.K.items():
            assert np.array_equal(seg_new.K[key], blk)
        for j in seg_old.order:
            delta = seg_new.K0[j] - seg_old.K0[j]
            np.testing.assert_array_equal(delta, seg_new.K.get((j, 10), np.zeros((3, 3))))
        assert new.verify()["sylvester"]
        assert len(old.physical) == 9

    def test_mid_platoon_insertion(self, decentral_II):
        _, ledger = decentral_II
        new = merge(ledger, VehicleParams(), position=4)
        assert new.position(10) == 4
        assert new.verify()["sylvester"]
        assert new.to_result().checks["hurwitz"]

    def test_empty_ledger(self):
        led = PlatoonLedger("II", CostSpec())
        new = merge(led, VehicleParams())
        assert new.solve_log == [("local", 1), ("step", 1)]
        ref, _ = decentralized_codesign([VehicleParams()], "II")
        assert new.to_result().gamma_tilde == pytest.approx(ref.gamma_tilde, rel=1e-6)

    def test_rejected_merge_leaves_ledger(self):
        res, ledger = decentralized_codesign([VehicleParams()] * 2, "II",
                                             string_stability=True)
        before = ledger.solve_log[:]
        with pytest.raises(InfeasibleError):
            merge(ledger, VehicleParams(), position=2)
        assert ledger.solve_log == before


class TestSplit:
    def test_split_keeps_certificates(self, decentral_II):
        _, ledger = decentral_II
        new = split_ledger(ledger, 5)
        assert len(new.segments) == 2
        assert new.segments[1].leader == new.physical[4]
        assert new.verify()["sylvester"]
        res = new.to_result()
        assert [s.leader for s in res.segments] == [0, 5]

    def test_leader_cannot_split_again(self, decentral_II):
        _, ledger = decentral_II
        new = split_ledger(ledger, 5)
        with pytest.raises(ValueError):
            split_ledger(new, 5)


class TestWeakCoupling:
    def test_zero_gains(self, central_II):
        res = SynthesisResult.from_dict(central_II.to_dict())
        N = res.n
        res.gains = extract_gains(np.zeros((N, N, 3, 3)), "II", res.gains.Lbar)
        vals, top = weak_coupling_metric(res)
        assert top == 0.0 and not vals.any()

    def test_both_designs_below_one(self, central_II, decentral_II):
        for res in (central_II, decentral_II[0]):
            for norm in ("2", "fro"):
                _, top = weak_coupling_metric(res, norm)
                assert top < 1.0


class TestSerialization:
    @pytest.mark.parametrize("name", ["central_II", "decentral_II"])
    def test_round_trip(self, name, request, tmp_path):
        res = request.getfixturevalue(name)
        res = res[0] if isinstance(res, tuple) else res
        path = tmp_path / "result.json"
        res.to_json(path)
        again = SynthesisResult.from_json(path)
        np.testing.assert_array_equal(again.gains.K, res.gains.K)
        np.testing.assert_array_equal(again.gains.K0, res.gains.K0)
        np.testing.assert_array_equal(again.p, res.p)
        assert again.gamma_tilde == res.gamma_tilde
        assert again.mode == res.mode
        assert [c.nu for c in again.certs] == [c.nu for c in res.certs]
        assert again.to_dict() == json.loads(json.dumps(res.to_dict()))

    def test_ledger_from_result(self, decentral_II):
        res, _ = decentral_II
        led = PlatoonLedger.from_result(res)
        assert led.verify()["sylvester"]
        np.testing.assert_array_equal(led.to_result().gains.K, res.gains.K)

    def test_corrupted(self, tmp_path):
        with pytest.raises(ValueError):
            SynthesisResult.from_json("{}")
        with pytest.raises(ValueError):
            SynthesisResult.from_json('{"mode": ')
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(ValueError):
            SynthesisResult.from_json(path)
