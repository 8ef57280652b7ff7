import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from platoon_codesign.lmi import BACKENDS, LmiProblem, bmat, evaluate

EPS = 1e-3


def lyapunov(A):
    prob = LmiProblem("lyap", margin=EPS)
    P = prob.symmetric("P", A.shape[0])
    prob.add_psd(P, name="P>0")
    prob.add_psd(-(P @ A + A.T @ P), name="decay")
    return prob


@pytest.mark.parametrize("backend", sorted(BACKENDS))
class TestBackends:
    def test_stable_lyapunov_feasible(self, backend):
        rep = lyapunov(-np.eye(2)).solve(backend=backend)
        assert rep.ok
        P = rep["P"]
        assert np.linalg.eigvalsh(P)[0] > 0
        assert np.linalg.eigvalsh(2 * P)[0] >= EPS - 1e-7

    def test_unstable_lyapunov_infeasible(self, backend):
        rep = lyapunov(np.eye(2)).solve(backend=backend)
        assert not rep.ok
        assert rep.status == "infeasible"

    def test_abs_epigraph(self, backend):
        prob = LmiProblem("abs")
        x = prob.scalar("x")
        prob.add_less(3.0, x)
        prob.add_abs_penalty(x)
        rep = prob.solve(backend=backend)
        assert rep.ok
        assert rep.objective == pytest.approx(3.0, abs=1e-6)

    def test_matrix_objective(self, backend):
        # min t s.t. [[t, 1], [1, t]] >= 0  ->  t = 1
        prob = LmiProblem("eig", margin=0.0)
        t = prob.scalar("t")
        prob.add_psd(bmat([[t, 1.0], [1.0, t]]), strict=False)
        prob.minimize(t)
        rep = prob.solve(backend=backend)
        assert rep.objective == pytest.approx(1.0, abs=1e-6)


class TestEvaluate:
    def test_identity_assignment(self):
        vals = evaluate(lyapunov(-np.eye(2)), {"P": np.eye(2)})
        assert vals[0] == pytest.approx(1.0 - EPS)
        assert vals[1] == pytest.approx(2.0 - EPS)

    def test_zero_storage(self):
        prob = LmiProblem("lyap", margin=0.0)
        P = prob.symmetric("P", 2)
        prob.add_psd(P, strict=False)
        assert evaluate(prob, {"P": np.zeros((2, 2))}) == [0.0]

    def test_infeasible_assignment(self):
        vals = evaluate(lyapunov(np.eye(2)), {"P": np.eye(2)})
        assert min(vals) < 0


class TestModeling:
    def test_duplicate_variable(self):
        prob = LmiProblem()
        prob.scalar("x")
        with pytest.raises(ValueError):
            prob.scalar("x")

    def test_asymmetric_psd_rejected(self):
        prob = LmiProblem()
        X = prob.variable("X", (2, 2))
        with pytest.raises(ValueError):
            prob.add_psd(X)

    def test_negative_abs_weight(self):
        prob = LmiProblem()
        x = prob.scalar("x")
        with pytest.raises(ValueError):
            prob.add_abs_penalty(x, -1.0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 4), m=st.integers(1, 5))
def test_weighted_l1_matches_linprog(seed, n, m):
    # min sum w|x| s.t. G x >= h, against scipy's LP on the split form
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(m, n))
    h = rng.normal(size=m)
    w = rng.uniform(0.5, 2.0, n)
    x0 = rng.normal(size=n)
    h = np.minimum(h, G @ x0)
    lp = linprog(np.concatenate([w, w]), A_ub=-np.hstack([G, -G]), b_ub=-h,
                 bounds=[(0, None)] * (2 * n), method="highs")
    assert lp.status == 0
    prob = LmiProblem("l1", margin=0.0)
    x = prob.variable("x", (n, 1))
    prob.add_nonneg(G @ x - h.reshape(-1, 1))
    prob.add_abs_penalty(x, w.reshape(-1, 1))
    rep = prob.solve()
    assert rep.ok
    assert rep.objective == pytest.approx(lp.fun, rel=1e-5, abs=1e-6)
