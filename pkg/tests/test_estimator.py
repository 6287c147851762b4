import numpy as np
import pytest

from arxdw.estimator import RlsState, delta_hat, rho_hat, rls_update, theta_hat
from arxdw.model import SystemSpec, lift_parameter


def feed(state, phis, ys):
    for phi, y in zip(phis, ys):
        state = rls_update(state, phi, y, 0.0)
    return state


class TestRlsUpdate:
    def test_zero_regressor_is_noop(self):
        s0 = RlsState(np.array([0.3, -1.0, 2.0]), np.diag([2.0, 1.0, 0.5]))
        s1 = rls_update(s0, np.zeros(3), 5.0, 1.0)
        np.testing.assert_array_equal(s1.vartheta_hat, s0.vartheta_hat)
        np.testing.assert_array_equal(s1.p_matrix, s0.p_matrix)
        assert s1.step == 1

    def test_one_step_by_hand(self):
        s = rls_update(RlsState.initial(1), np.array([1.0, 0.0, 0.0]), 1.0, 0.0)
        np.testing.assert_allclose(s.vartheta_hat, [0.5, 0.0, 0.0])
        np.testing.assert_allclose(np.linalg.inv(s.p_matrix), np.diag([2.0, 1.0, 1.0]))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            rls_update(RlsState.initial(1), np.ones(4), 0.0, 0.0)

    def test_inverse_matches_reinversion(self):
        rng = np.random.default_rng(1)
        d, n = 4, 10_000
        phis = rng.normal(size=(n, d)) * rng.uniform(0.1, 5, size=(n, 1))
        s = feed(RlsState.initial(d - 2), phis, rng.normal(size=n))
        direct = np.linalg.inv(np.eye(d) + phis.T @ phis)
        np.testing.assert_allclose(s.p_matrix, direct, rtol=1e-8, atol=1e-8 * np.abs(direct).max())
        assert np.abs(s.p_matrix @ (np.eye(d) + phis.T @ phis) - np.eye(d)).max() < 1e-8

    def test_equals_ridge_solution(self):
        # least squares with identity prior: (I + sum phi phi^T)^{-1} sum phi y
        rng = np.random.default_rng(2)
        phis = rng.normal(size=(200, 3))
        ys = rng.normal(size=200)
        s = feed(RlsState.initial(1), phis, ys)
        ridge = np.linalg.solve(np.eye(3) + phis.T @ phis, phis.T @ ys)
        np.testing.assert_allclose(s.vartheta_hat, ridge, rtol=1e-10, atol=1e-12)

    def test_noiseless_convergence_is_monotone(self):
        rng = np.random.default_rng(4)
        truth = np.array([1.8, -0.45, -0.3])
        s = RlsState.initial(1)
        errs = []
        for _ in range(40):
            for phi in np.eye(3) * 1000:
                s = rls_update(s, phi, truth @ phi, 0.0)
            errs.append(np.linalg.norm(s.vartheta_hat - truth))
        assert all(b <= a for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 1e-6
        s2 = feed(RlsState.initial(1), rng.normal(size=(3, 3)), np.zeros(3))
        assert np.all(np.linalg.eigvalsh(np.linalg.inv(s2.p_matrix)) >= 1 - 1e-12)

    def test_batched_matches_single(self):
        rng = np.random.default_rng(5)
        phis = rng.normal(size=(50, 2, 4))
        ys = rng.normal(size=(50, 2))
        batch = RlsState.initial(2, batch=2)
        singles = [RlsState.initial(2), RlsState.initial(2)]
        for k in range(50):
            batch = rls_update(batch, phis[k], ys[k], 0.0)
            singles = [rls_update(singles[b], phis[k, b], ys[k, b], 0.0) for b in range(2)]
        for b in range(2):
            np.testing.assert_allclose(batch.vartheta_hat[b], singles[b].vartheta_hat, rtol=1e-12)


class TestDerived:
    @pytest.mark.parametrize("v, expected", [([1.8, -0.45, -0.3], 0.3), ([0.0, 0.0, 0.0], 0.0), ([0, 0, 0, 1.0], -1.0)])
    def test_rho_hat(self, v, expected):
        assert rho_hat(np.array(v)) == expected

    def test_delta_hat_examples(self):
        np.testing.assert_array_equal(delta_hat(0.0, 1), [[1, 0, 1], [0, 0, -1]])
        np.testing.assert_array_equal(delta_hat(0.5, 2), [[1, 0, 0, 1], [0.5, 1, 0, 0.5], [0, 0, 0, -1]])

    def test_theta_hat_examples(self):
        np.testing.assert_allclose(theta_hat(np.array([1.8, -0.45, -0.3]), 1), [1.5], atol=1e-15)
        np.testing.assert_array_equal(theta_hat(np.zeros(5), 3), np.zeros(3))

    def test_theta_hat_matches_delta_product(self):
        rng = np.random.default_rng(6)
        for p in (1, 2, 3, 5):
            for _ in range(50):
                v = rng.normal(size=p + 2)
                np.testing.assert_allclose(theta_hat(v, p), (delta_hat(-v[-1], p) @ v)[:p], rtol=1e-12, atol=1e-12)

    def test_theta_hat_exact_parameter(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            p = int(rng.integers(1, 5))
            spec = SystemSpec(tuple(rng.uniform(-2, 2, p)), rho=float(rng.uniform(-0.95, 0.95)))
            np.testing.assert_allclose(theta_hat(lift_parameter(spec).vartheta, p), spec.theta, atol=1e-12)

    def test_theta_hat_batched(self):
        v = np.array([[1.8, -0.45, -0.3], [1.5, 0.0, 0.0]])
        np.testing.assert_allclose(theta_hat(v, 1), [[1.5], [1.5]], atol=1e-15)
