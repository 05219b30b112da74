import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risframe.arrays import AnglePair, UpaGeometry, steering_matrix
from risframe.channel import complex_normal
from risframe.estimation import (PilotBlock, ReweightConfig, ReweightState, UnderdeterminedPilotWarning,
                                 build_pilots, estimate_cascaded_ls, estimate_h, least_squares,
                                 log_sum_objective, make_combiner, nmse, observe, reweight_step,
                                 surrogate, surrogate_gradient)


def problem(seed: int, n_obs: int = 24, n_paths: int = 3, noise: float = 0.05):
    rng = np.random.default_rng(seed)
    T = complex_normal(rng, (n_obs, 1, n_paths))
    z = complex_normal(rng, n_paths)
    y = T @ z + complex_normal(rng, (n_obs, 1), noise)
    return T, y, z


class TestPilots:
    def test_regressors_match_direct_product(self, rng):
        ue, ris = UpaGeometry.square(2), UpaGeometry.square(4)
        aoa = [AnglePair(0.3, 1.0), AnglePair(0.7, 2.0)]
        aod = [AnglePair(0.5, 4.0), AnglePair(0.2, 0.1)]
        block = PilotBlock(X=complex_normal(rng, (16, 6)), Q=complex_normal(rng, (4, 3)),
                           precoder=np.ones((1, 1)), symbols=np.ones((1, 6)), beta=2.5)
        T = block.regressors(ue, ris, aoa, aod)
        a_ue, a_ris = steering_matrix(ue, aoa), steering_matrix(ris, aod)
        for p in range(6):
            direct = block.beta * block.Q.conj().T @ a_ue @ np.diag(a_ris.conj().T @ block.X[:, p])
            assert np.allclose(T[p], direct, atol=1e-12)

    def test_observe_noiseless_is_linear_model(self, rng):
        ue, ris = UpaGeometry.square(2), UpaGeometry.square(4)
        aoa, aod = AnglePair(0.4, 1.3), AnglePair(0.6, 3.0)
        z = np.array([0.7 - 0.2j])
        H = (steering_matrix(ue, [aoa]) * z) @ steering_matrix(ris, [aod]).conj().T
        G = complex_normal(rng, (16, 8))
        theta = np.diag(np.exp(1j * rng.uniform(0, 2 * np.pi, 16)))
        f = complex_normal(rng, 8)
        block = build_pilots(theta, G, f, np.ones(5), make_combiner(rng, ue, aoa), 5, beta=3.0)
        block = observe(block, H, theta, G)
        T = block.regressors(ue, ris, [aoa], [aod])
        assert np.allclose(block.Y.T, T @ z, atol=1e-12)

    def test_underdetermined_flagged(self, rng):
        with pytest.warns(UnderdeterminedPilotWarning):
            b = build_pilots(np.eye(4), np.eye(4), np.ones(4), np.ones(1), np.ones((2, 1)), 1, n_paths=3)
        assert b.underdetermined

    def test_symbol_count_checked(self):
        with pytest.raises(ValueError):
            build_pilots(np.eye(4), np.eye(4), np.ones(4), np.ones(3), np.ones((2, 1)), 4)

    def test_noise_needs_generator(self):
        b = build_pilots(np.eye(2), np.eye(2), np.ones(2), np.ones(2), np.ones((1, 1)), 2)
        with pytest.raises(ValueError):
            observe(b, np.ones((1, 2)), np.eye(2), np.eye(2), noise_var=1.0)

    def test_combiner_first_column_points(self, rng):
        ue = UpaGeometry.square(2)
        q = make_combiner(rng, ue, AnglePair(0.3, 0.2))
        assert q.shape == (4, 4)
        assert np.allclose(np.linalg.norm(q, axis=0), 1.0)


class TestReweighting:
    @settings(max_examples=25)
    @given(st.integers(0, 10_000))
    def test_surrogate_non_increasing(self, seed):
        T, y, _ = problem(seed)
        cfg = ReweightConfig()
        z = least_squares(T, y)
        for it in range(10):
            res = float(np.linalg.norm(y.ravel() - T.reshape(-1, 3) @ z))
            state = ReweightState(z, cfg.zeta(res), cfg.delta)
            z_new = reweight_step(state, T, y)
            before, after = surrogate(z, state, T, y), surrogate(z_new, state, T, y)
            assert after <= before + 1e-12 * max(1.0, abs(before))
            z = z_new

    @settings(max_examples=25)
    @given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
    def test_majorization_descends_objective(self, seed, zeta):
        T, y, _ = problem(seed)
        z = least_squares(T, y)
        for _ in range(10):
            z_new = reweight_step(ReweightState(z, zeta, 1e-6), T, y)
            f0, f1 = log_sum_objective(z, zeta, 1e-6, T, y), log_sum_objective(z_new, zeta, 1e-6, T, y)
            assert f1 <= f0 + 1e-9 * max(1.0, abs(f0))
            z = z_new

    @given(st.integers(0, 10_000), st.floats(1e-4, 1e4))
    def test_step_zeroes_gradient(self, seed, zeta):
        T, y, _ = problem(seed)
        state = ReweightState(least_squares(T, y), zeta, 1e-6)
        z = reweight_step(state, T, y)
        scale = np.linalg.norm(T.reshape(-1, 3).conj().T @ y.ravel()) + np.max(np.diag(state.D)) / zeta
        assert np.linalg.norm(surrogate_gradient(z, state, T, y)) <= 1e-8 * scale

    def test_gradient_finite_difference(self, rng):
        T, y, _ = problem(3)
        z = complex_normal(rng, 3)
        state = ReweightState(complex_normal(rng, 3), 2.0, 1e-3)
        g = surrogate_gradient(z, state, T, y)
        h = 1e-6
        for i in range(3):
            e = np.zeros(3, complex)
            e[i] = h
            dre = (surrogate(z + e, state, T, y) - surrogate(z - e, state, T, y)) / (2 * h)
            dim = (surrogate(z + 1j * e, state, T, y) - surrogate(z - 1j * e, state, T, y)) / (2 * h)
            # d/d conj(z) = (d/dRe + j d/dIm) / 2
            assert (dre + 1j * dim) / 2 == pytest.approx(g[i], rel=1e-6, abs=1e-6)

    def test_huge_zeta_is_least_squares(self):
        T, y, _ = problem(5)
        z_ls = least_squares(T, y)
        z = reweight_step(ReweightState(z_ls, 1e12, 1e-6), T, y)
        assert np.linalg.norm(z - z_ls) <= 1e-8 * np.linalg.norm(z_ls)

    def test_fixed_zeta(self):
        assert ReweightConfig(fixed_zeta=3.0).zeta(1e-3) == 3.0
        assert ReweightConfig(zeta_c=2.0).zeta(0.5) == pytest.approx(8.0)
        assert ReweightConfig(zeta_floor=1e-4).zeta(0.0) == pytest.approx(1e4)

    def test_non_finite_rejected(self):
        T, y, _ = problem(1)
        y = y.copy()
        y[0, 0] = np.nan
        with pytest.raises(ValueError):
            least_squares(T, y)


class TestEstimateH:
    def setup_method(self):
        self.ue, self.ris = UpaGeometry.square(2), UpaGeometry.square(4)
        self.aoa, self.aod = AnglePair(0.3, 2.1), AnglePair(0.5, 0.9)

    def _block(self, rng, z, noise=0.0):
        H = (steering_matrix(self.ue, [self.aoa]) * z) @ steering_matrix(self.ris, [self.aod]).conj().T
        G = complex_normal(rng, (16, 4))
        theta = np.diag(np.exp(1j * rng.uniform(0, 2 * np.pi, 16)))
        block = build_pilots(theta, G, complex_normal(rng, 4), np.ones(8), make_combiner(rng, self.ue, self.aoa),
                             8, beta=16.0)
        return observe(block, H, theta, G, rng, noise), H

    def test_noiseless_exact(self, rng):
        block, H = self._block(rng, np.array([0.4 + 0.9j]))
        est = estimate_h(block, self.aoa, self.aod, self.ue, self.ris)
        assert est.converged
        assert nmse(est.matrix, H) < 1e-20

    def test_noisy_accuracy_and_trace(self, rng):
        block, H = self._block(rng, np.array([0.4 + 0.9j]), noise=1e-3)
        est = estimate_h(block, self.aoa, self.aod, self.ue, self.ris, ReweightConfig(max_iter=5))
        assert nmse(est.matrix, H) < 1e-3
        assert est.trace[0][0] == 0 and len(est.trace) == est.iterations + 1

    def test_missing_observations(self, rng):
        block, _ = self._block(rng, np.array([1.0 + 0j]))
        block.Y = None
        with pytest.raises(ValueError):
            estimate_h(block, self.aoa, self.aod, self.ue, self.ris)


class TestNmse:
    def test_values(self):
        h = np.ones((2, 2))
        assert nmse(h, h) == 0.0
        assert nmse(2 * h, h) == pytest.approx(1.0)
        assert nmse(np.zeros((2, 2)), h) == pytest.approx(1.0)

    def test_errors(self):
        with pytest.raises(ValueError):
            nmse(np.ones(2), np.ones(3))
        with pytest.raises(ValueError):
            nmse(np.ones(2), np.zeros(2))

    def test_cascaded_ls_recovers_square(self, rng):
        Heff = complex_normal(rng, (4, 6))
        P = complex_normal(rng, (6, 10))
        assert np.allclose(estimate_cascaded_ls(Heff @ P, P), Heff, atol=1e-10)
