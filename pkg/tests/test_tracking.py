import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from risframe.arrays import AnglePair, UpaGeometry, steering_vector
from risframe.channel import complex_normal
from risframe.tracking import (EkfState, EvolutionModel, InnovationSingularError, MeasurementContext, Segment,
                               constant_rate_trajectory, ekf_predict, ekf_update, gauss_markov_gains,
                               half_power_beamwidth, measurement_fn, measurement_jacobian, nis_threshold,
                               state_vector, track_segment, wrap_state)

RIS, UE = UpaGeometry.square(8), UpaGeometry.square(2)


def context(seed: int = 0, beams: int = 3, beta: float = 4.0) -> MeasurementContext:
    rng = np.random.default_rng(seed)
    pilots = complex_normal(rng, (RIS.size, beams))
    return MeasurementContext(beta, np.eye(UE.size, dtype=complex), pilots, RIS, UE)


def direct_observation(x, ctx):
    ar = steering_vector(RIS, AnglePair(x[2], x[3]))
    au = steering_vector(UE, AnglePair(x[4], x[5]))
    z = complex(x[0], x[1])
    return np.array([[ctx.beta * z * (ctx.Q[:, u].conj() @ au) * (ar.conj() @ ctx.pilots[:, b])
                      for b in range(ctx.pilots.shape[1])] for u in range(ctx.Q.shape[1])]).ravel()


class TestMeasurementModel:
    def test_matches_direct_evaluation(self):
        ctx = context()
        x = state_vector(0.6 - 0.3j, AnglePair(0.4, 1.1), AnglePair(0.5, 2.0))
        assert np.allclose(measurement_fn(x, ctx), direct_observation(x, ctx), atol=1e-12)
        assert ctx.n_obs == 12

    @given(st.floats(0.05, 1.4), st.floats(0, 2 * np.pi), st.floats(0.05, 1.4), st.floats(0, 2 * np.pi))
    def test_jacobian_finite_difference(self, e1, a1, e2, a2):
        ctx = context(1)
        x = state_vector(0.8 + 0.5j, AnglePair(e1, a1), AnglePair(e2, a2))
        J = measurement_jacobian(x, ctx)
        h = 1e-6
        for i in range(6):
            dx = np.zeros(6)
            dx[i] = h
            d = (measurement_fn(x + dx, ctx) - measurement_fn(x - dx, ctx)) / (2 * h)
            fd = np.concatenate([d.real, d.imag])
            assert np.allclose(J[:, i], fd, rtol=1e-5, atol=1e-6 * np.abs(J).max())

    def test_from_configurations(self, rng):
        g = complex_normal(rng, (RIS.size, 6))
        f = complex_normal(rng, 6)
        thetas = [np.diag(np.exp(1j * rng.uniform(0, 6, RIS.size))) for _ in range(2)]
        ctx = MeasurementContext.from_configurations(2.0, np.eye(4), thetas, g, f, RIS, UE)
        assert np.allclose(ctx.pilots[:, 1], thetas[1] @ g @ f)


class TestWrap:
    def test_reflection(self):
        x = wrap_state([0, 0, -0.2, 0.5, np.pi / 2 + 0.1, 7.0])
        assert x[2] == pytest.approx(0.2) and x[3] == pytest.approx(0.5 + np.pi)
        assert x[4] == pytest.approx(np.pi / 2 - 0.1) and x[5] == pytest.approx(7.0 - 2 * np.pi)

    @given(st.floats(-10, 10), st.floats(-10, 10))
    def test_same_direction(self, el, az):
        x = wrap_state([0, 0, el, az, 0.3, 0.3])
        assert 0 <= x[2] <= np.pi / 2 and 0 <= x[3] < 2 * np.pi + 1e-12
        a = AnglePair(x[2], x[3]).uv
        b = (np.sin(el) * np.cos(az), np.sin(el) * np.sin(az))
        assert np.allclose(a, b, atol=1e-9)


class TestEvolutionModel:
    def test_validation(self):
        with pytest.raises(ValueError):
            EvolutionModel(rho=0.0)
        with pytest.raises(ValueError):
            EvolutionModel(r_meas=-1.0)

    def test_predict(self):
        m = EvolutionModel(rho=0.9)
        s = ekf_predict(EkfState(np.array([1.0, 1, 0.3, 0.2, 0.3, 0.2]), np.zeros((6, 6))), m)
        assert s.x[0] == pytest.approx(0.9) and s.time_index == 1
        assert np.allclose(s.P, m.process_noise)

    def test_gauss_markov_stationary(self, rng):
        z = gauss_markov_gains(rng, complex_normal(rng, 1)[0], 20000, 0.9)
        assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, rel=0.05)
        assert np.array_equal(gauss_markov_gains(rng, 1 + 0j, 5, 1.0), np.ones(5))

    def test_constant_rate(self, rng):
        r = np.deg2rad(0.1)
        tr = constant_rate_trajectory(rng, 1 + 0j, AnglePair(0.5, 1.0), np.full(11, r), 1.0)
        assert tr.angles[10, 0] == pytest.approx(0.5 + 10 * r)
        assert tr.angles[10, 1] == pytest.approx(1.0 + 10 * r)
        assert np.array_equal(tr.angles[:, :2], tr.angles[:, 2:])
        assert len(tr) == 11

    def test_constant_rate_directions(self, rng):
        r = np.deg2rad(0.2)
        tr = constant_rate_trajectory(rng, 1 + 0j, AnglePair(0.5, 1.0), np.full(6, r), 1.0, directions=(-1.0, 1.0))
        assert tr.angles[5, 0] == pytest.approx(0.5 - 5 * r)
        assert tr.angles[5, 1] == pytest.approx(1.0 + 5 * r)


class TestUpdate:
    def _setup(self, seed, sigma2=1e-3):
        ctx = context(seed)
        model = EvolutionModel(r_meas=sigma2, q_angle=np.deg2rad(0.2) ** 2)
        truth = state_vector(0.9 + 0.2j, AnglePair(0.5, 1.0), AnglePair(0.5, 1.0))
        return ctx, model, truth

    def test_zero_noise_zero_covariance_unchanged(self):
        ctx, _, truth = self._setup(0)
        s = EkfState(truth, np.zeros((6, 6)))
        out = ekf_update(s, measurement_fn(truth, ctx), ctx, EvolutionModel(r_meas=0.0))
        assert np.array_equal(out.x, truth)

    def test_singular_innovation(self):
        ctx, _, truth = self._setup(0)
        ctx = MeasurementContext(ctx.beta, ctx.Q, np.zeros_like(ctx.pilots), RIS, UE)
        with pytest.raises(InnovationSingularError):
            ekf_update(EkfState(truth, np.eye(6)), np.zeros(ctx.n_obs, complex), ctx, EvolutionModel(r_meas=0.0))

    def test_iterated_not_worse_than_single(self):
        errs = {1: [], 5: []}
        for seed in range(20):
            ctx, model, truth = self._setup(seed, 1e-4)
            rng = np.random.default_rng(seed)
            prior = truth + np.concatenate([[0, 0], rng.normal(0, np.deg2rad(0.5), 4)])
            obs = measurement_fn(truth, ctx) + complex_normal(rng, ctx.n_obs, 1e-4)
            P = np.diag([1e-2, 1e-2] + [np.deg2rad(0.5) ** 2] * 4)
            for it in errs:
                out = ekf_update(EkfState(prior, P), obs, ctx, model, iterations=it)
                errs[it].append(np.sum((out.x[2:] - truth[2:]) ** 2))
        assert np.mean(errs[5]) <= np.mean(errs[1])

    def test_nis_calibrated_when_static(self):
        ctx, model, truth = self._setup(3, 1e-3)
        rng = np.random.default_rng(3)
        state = EkfState(truth.copy(), np.diag([1e-4] * 2 + [1e-8] * 4))
        static = EvolutionModel(rho=1.0, q_gain=0.0, q_angle=0.0, r_meas=5e-4)
        nis = []
        for _ in range(300):
            state = ekf_predict(state, static)
            obs = measurement_fn(truth, ctx) + complex_normal(rng, ctx.n_obs, 1e-3)
            state = ekf_update(state, obs, ctx, static, iterations=5)
            nis.append(state.nis)
        assert np.mean(nis) == pytest.approx(2 * ctx.n_obs, rel=0.15)

    def test_threshold(self):
        assert nis_threshold(20) == pytest.approx(stats.chi2.ppf(0.999, 40))


class TestTrackSegment:
    def test_static_no_events_and_accurate(self):
        ctx = context(7)
        truth = state_vector(1.0 + 0j, AnglePair(0.5, 1.0), AnglePair(0.5, 1.0))
        model = EvolutionModel(rho=1.0, q_gain=1e-6, q_angle=np.deg2rad(0.05) ** 2, r_meas=1e-3)
        seg = Segment(ctx, AnglePair(0.5, 1.0), EkfState(truth.copy(), np.diag([1e-4] * 2 + [1e-6] * 4)))
        rng = np.random.default_rng(7)

        def obs(t, s):
            return measurement_fn(truth, s.ctx) + complex_normal(rng, s.ctx.n_obs, 1e-3)

        calls = []
        trace = track_segment(seg, range(1, 101), obs, model, reestimate=lambda t: calls.append(t) or seg,
                              truth=lambda t: truth, gate=nis_threshold(ctx.n_obs))
        assert trace.events == [] and calls == []
        assert np.max(trace.angle_sq_errors()) < (half_power_beamwidth(RIS) / 10) ** 2

    def test_drift_triggers_reestimation(self):
        ctx = context(8)
        rng = np.random.default_rng(8)
        rate = np.deg2rad(0.5)
        tr = constant_rate_trajectory(rng, 1 + 0j, AnglePair(0.5, 1.0), np.full(80, rate), 1.0)
        model = EvolutionModel(rho=1.0, q_gain=1e-6, q_angle=rate ** 2, r_meas=1e-4)
        start = Segment(ctx, tr.ris_angle(0), EkfState(tr.state(0), np.diag([1e-4] * 2 + [1e-6] * 4)))

        def reest(t):
            return Segment(ctx, tr.ris_angle(t), EkfState(tr.state(t), start.state.P))

        def obs(t, s):
            return measurement_fn(tr.state(t), s.ctx) + complex_normal(rng, s.ctx.n_obs, 1e-4)

        trace = track_segment(start, range(1, 80), obs, model, reestimate=reest, truth=tr.state)
        assert trace.events
        bw = half_power_beamwidth(RIS)
        assert trace.events[0] * rate * np.sqrt(2) >= bw / 2 * 0.5
