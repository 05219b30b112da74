"""EKF tracking of the single-path RIS-UE channel.

State ``x = [Re z, Im z, theta_R, phi_R, theta_U, phi_U]``. During a
tracking segment the BS-RIS side is frozen: the surface cycles through a
small set of configurations ``Theta_b`` (beam switching around the current
pointing) so that every step observes

    y_b = beta Q^H a_UE(psi_U) z a_RIS(psi_R)^H Theta_b G_hat f + noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from risframe.arrays import AnglePair, UpaGeometry, angular_distance, steering_gradient
from risframe.channel import complex_normal

TWO_PI = 2.0 * np.pi
MAX_CONDITION = 1e12


class InnovationSingularError(np.linalg.LinAlgError):
    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"innovation covariance is singular (cond = {condition:.3e})")


@dataclass(frozen=True)
class EkfState:
    x: np.ndarray
    P: np.ndarray
    time_index: int = 0
    nis: float = float("nan")

    @property
    def gain(self) -> complex:
        return complex(self.x[0], self.x[1])

    @property
    def ris_angle(self) -> AnglePair:
        return AnglePair(self.x[2], self.x[3])

    @property
    def ue_angle(self) -> AnglePair:
        return AnglePair(self.x[4], self.x[5])


def state_vector(gain: complex, ris_angle: AnglePair, ue_angle: AnglePair) -> np.ndarray:
    return np.array([gain.real, gain.imag, ris_angle.elevation, ris_angle.azimuth,
                     ue_angle.elevation, ue_angle.azimuth])


@dataclass(frozen=True)
class EvolutionModel:
    """First-order gain dynamics and random-walk angles.

    ``r_meas`` is the noise variance per real component, i.e. half the
    complex noise variance.
    """

    rho: float = 0.995
    q_gain: float = 1e-4
    q_angle: float = float(np.deg2rad(0.5) ** 2)
    r_meas: float = 1e-3

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")
        if min(self.q_gain, self.q_angle, self.r_meas) < 0:
            raise ValueError("variances must be non-negative")

    @property
    def transition(self) -> np.ndarray:
        return np.diag([self.rho, self.rho, 1.0, 1.0, 1.0, 1.0])

    @property
    def process_noise(self) -> np.ndarray:
        return np.diag([self.q_gain, self.q_gain] + [self.q_angle] * 4)


@dataclass(frozen=True)
class MeasurementContext:
    """Frozen quantities of a tracking segment; ``pilots`` holds one column ``Theta_b G_hat f`` per beam."""

    beta: float
    Q: np.ndarray
    pilots: np.ndarray
    ris_geom: UpaGeometry
    ue_geom: UpaGeometry

    @classmethod
    def from_configurations(cls, beta: float, Q: np.ndarray, thetas: Sequence, g_hat, precoder: np.ndarray,
                            ris_geom: UpaGeometry, ue_geom: UpaGeometry) -> "MeasurementContext":
        g = np.asarray(getattr(g_hat, "matrix", g_hat))
        gf = g @ precoder
        cols = [np.asarray(getattr(t, "theta", t)) @ gf for t in thetas]
        return cls(beta, np.asarray(Q, complex), np.stack(cols, axis=1), ris_geom, ue_geom)

    @property
    def n_obs(self) -> int:
        return self.Q.shape[1] * self.pilots.shape[1]


def _chart(el: float, az: float) -> tuple[float, float]:
    """Map any (elevation, azimuth) onto the valid chart by reflection."""
    el = float(el) % TWO_PI
    if el > np.pi:
        el, az = TWO_PI - el, az + np.pi
    if el > np.pi / 2:
        el = np.pi - el
    return el, float(az) % TWO_PI


def wrap_state(x: np.ndarray) -> np.ndarray:
    """Reflect elevations into [0, pi/2] and wrap azimuths mod 2 pi."""
    x = np.array(x, dtype=float)
    x[2], x[3] = _chart(x[2], x[3])
    x[4], x[5] = _chart(x[4], x[5])
    return x


def _parts(x: np.ndarray, ctx: MeasurementContext):
    ar, dar_t, dar_p = steering_gradient(ctx.ris_geom, AnglePair(*_chart(x[2], x[3])))
    au, dau_t, dau_p = steering_gradient(ctx.ue_geom, AnglePair(*_chart(x[4], x[5])))
    qh = ctx.Q.conj().T
    return (qh @ au, qh @ dau_t, qh @ dau_p,
            ar.conj() @ ctx.pilots, dar_t.conj() @ ctx.pilots, dar_p.conj() @ ctx.pilots)


def measurement_fn(state: EkfState | np.ndarray, ctx: MeasurementContext) -> np.ndarray:
    """Noise-free observation, flattened as (slot, beam) with the beam index fastest."""
    x = getattr(state, "x", state)
    qa, _, _, rx, _, _ = _parts(x, ctx)
    z = complex(x[0], x[1])
    return ctx.beta * z * np.outer(qa, rx).ravel()


def measurement_jacobian(state: EkfState | np.ndarray, ctx: MeasurementContext) -> np.ndarray:
    """Jacobian of the stacked [Re; Im] observation with respect to the 6 states."""
    x = getattr(state, "x", state)
    qa, qdt, qdp, rx, rdt, rdp = _parts(x, ctx)
    z = complex(x[0], x[1])
    b = ctx.beta
    base = b * np.outer(qa, rx).ravel()
    cols = [base, 1j * base,
            b * z * np.outer(qa, rdt).ravel(), b * z * np.outer(qa, rdp).ravel(),
            b * z * np.outer(qdt, rx).ravel(), b * z * np.outer(qdp, rx).ravel()]
    J = np.stack(cols, axis=1)
    return np.vstack([J.real, J.imag])


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def ekf_predict(state: EkfState, model: EvolutionModel) -> EkfState:
    A = model.transition
    x = A @ state.x
    P = _symmetrize(A @ state.P @ A.T + model.process_noise)
    return EkfState(x, P, state.time_index + 1)


def ekf_update(state: EkfState, observation: np.ndarray, ctx: MeasurementContext,
               model: EvolutionModel, iterations: int = 1, tol: float = 1e-10) -> EkfState:
    """EKF correction (Joseph form) on the stacked real observation.

    With ``iterations > 1`` the measurement is relinearized about the latest
    iterate (iterated EKF, a Gauss-Newton step on the MAP cost), which matters
    when the sensing SNR is high enough that second-order terms of a small
    angle change exceed the noise. The NIS uses the final linearization.
    """
    obs = np.asarray(observation)
    if obs.shape != (ctx.n_obs,):
        raise ValueError(f"observation has shape {obs.shape}, expected ({ctx.n_obs},)")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    x_prior = state.x
    if model.r_meas == 0 and not np.any(state.P):
        # exact prior and noiseless sensing: nothing to correct
        r = obs - measurement_fn(state, ctx)
        nu = np.concatenate([r.real, r.imag])
        return EkfState(x_prior.copy(), state.P.copy(), state.time_index, float(nu @ nu))
    R = model.r_meas * np.eye(2 * ctx.n_obs)
    x_i = x_prior
    for _ in range(iterations):
        lin = EkfState(x_i, state.P, state.time_index)
        r = obs - measurement_fn(lin, ctx)
        H = measurement_jacobian(lin, ctx)
        nu = np.concatenate([r.real, r.imag]) + H @ _state_delta(x_i, x_prior)
        S = H @ state.P @ H.T + R
        cond = float(np.linalg.cond(S))
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise InnovationSingularError(cond)
        K = np.linalg.solve(S, H @ state.P).T
        x_next = wrap_state(x_prior + K @ nu)
        done = np.linalg.norm(_state_delta(x_next, x_i)) <= tol * max(1.0, float(np.linalg.norm(x_next)))
        x_i = x_next
        if done:
            break
    I_KH = np.eye(6) - K @ H
    P = _symmetrize(I_KH @ state.P @ I_KH.T + K @ R @ K.T)
    nis = float(nu @ np.linalg.solve(S, nu))
    return EkfState(x_i, P, state.time_index, nis)


def _state_delta(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a - b`` with azimuth differences wrapped."""
    d = np.asarray(a, float) - np.asarray(b, float)
    for i in (3, 5):
        d[i] = (d[i] + np.pi) % TWO_PI - np.pi
    return d


def half_power_beamwidth(geom: UpaGeometry) -> float:
    """Approximate 3 dB beamwidth ``0.886 lambda / (sqrt(M) d)`` in radians."""
    return 0.886 * geom.wavelength / (np.sqrt(geom.size) * geom.spacing)


def nis_threshold(n_obs: int, probability: float = 0.999) -> float:
    """Chi-square gate for the normalized innovation of ``n_obs`` complex observations."""
    return float(stats.chi2.ppf(probability, 2 * n_obs))


# trajectories


@dataclass(frozen=True)
class Trajectory:
    """True states over time: complex gains (T,) and angles (T, 4) in state order."""

    gains: np.ndarray
    angles: np.ndarray

    def __len__(self) -> int:
        return len(self.gains)

    def state(self, t: int) -> np.ndarray:
        return np.concatenate([[self.gains[t].real, self.gains[t].imag], self.angles[t]])

    def ris_angle(self, t: int) -> AnglePair:
        return AnglePair(*_chart(*self.angles[t, :2]))

    def ue_angle(self, t: int) -> AnglePair:
        return AnglePair(*_chart(*self.angles[t, 2:]))


def gauss_markov_gains(rng: np.random.Generator, z0: complex, steps: int, rho: float) -> np.ndarray:
    """``z_{t+1} = rho z_t + sqrt(1 - rho^2) w_t`` with ``w_t ~ CN(0, 1)``."""
    z = np.empty(steps, dtype=complex)
    z[0] = z0
    w = complex_normal(rng, steps)
    amp = np.sqrt(max(1.0 - rho ** 2, 0.0))
    for t in range(1, steps):
        z[t] = rho * z[t - 1] + amp * w[t]
    return z


def constant_rate_trajectory(rng: np.random.Generator, z0: complex, start: AnglePair,
                             rates: Sequence[float], rho: float,
                             directions: tuple[float, float] = (1.0, 1.0)) -> Trajectory:
    """Angles advance by ``rates[t]`` (rad/step) with Gauss-Markov gains.

    Elevation and azimuth move at the same rate, with signs ``directions``.
    The UE array is parallel to the surface, so the UE-side angles equal the
    RIS-side angles at every step.
    """
    rates = np.asarray(rates, dtype=float)
    steps = len(rates)
    offs = np.concatenate([[0.0], np.cumsum(rates[1:])])
    s_el, s_az = directions
    ang = np.empty((steps, 4))
    for t, d in enumerate(offs):
        el, az = _chart(start.elevation + s_el * d, start.azimuth + s_az * d)
        ang[t] = (el, az, el, az)
    return Trajectory(gauss_markov_gains(rng, z0, steps, rho), ang)


# tracking segments


@dataclass
class TrackStep:
    time: int
    estimate: np.ndarray
    truth: np.ndarray
    sq_error: np.ndarray
    nis: float
    reestimated: bool
    nmse: float = float("nan")


@dataclass
class TrackTrace:
    steps: list[TrackStep] = field(default_factory=list)

    @property
    def events(self) -> list[int]:
        return [s.time for s in self.steps if s.reestimated]

    def angle_sq_errors(self) -> np.ndarray:
        return np.array([s.sq_error[2:] for s in self.steps])


def angle_errors(est: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Squared errors per state; azimuth differences are wrapped to (-pi, pi]."""
    d = np.asarray(est, float) - np.asarray(truth, float)
    for i in (3, 5):
        d[i] = (d[i] + np.pi) % TWO_PI - np.pi
    return d ** 2


@dataclass
class Segment:
    """What a (re-)estimation hands to the tracker: a context, its pointing and a starting state."""

    ctx: MeasurementContext
    pointing: AnglePair
    state: EkfState
    payload: object = None


ObserveFn = Callable[[int, Segment], np.ndarray]
ReestimateFn = Callable[[int], Segment]


def track_segment(segment: Segment, steps: Sequence[int], observe: ObserveFn, model: EvolutionModel,
                  reestimate: ReestimateFn | None = None, truth: Callable[[int], np.ndarray] | None = None,
                  beamwidth: float | None = None, gate: float | None = None, gate_steps: int = 3,
                  nmse_fn: Callable[[int, Segment, EkfState], float] | None = None,
                  iterations: int = 5) -> TrackTrace:
    """Predict/update over ``steps`` and re-estimate when tracking becomes unreliable.

    A re-estimation is triggered when the tracked RIS-side direction
    drifts more than half a beamwidth from the segment pointing (the frozen
    beams no longer cover it) or when the normalized innovation exceeds
    ``gate`` for ``gate_steps`` consecutive steps. ``reestimate(t)`` then
    supplies a fresh segment from a new estimation round.
    """
    trace = TrackTrace()
    seg = segment
    state = seg.state
    over = 0
    bw = beamwidth if beamwidth is not None else half_power_beamwidth(seg.ctx.ris_geom)
    for t in steps:
        state = ekf_predict(state, model)
        state = ekf_update(state, observe(t, seg), seg.ctx, model, iterations)
        over = over + 1 if gate is not None and state.nis > gate else 0
        drift = angular_distance(state.ris_angle, seg.pointing)
        event = reestimate is not None and (drift > bw / 2 or over >= gate_steps)
        if event:
            seg = reestimate(t)
            state = replace(seg.state, time_index=t)
            over = 0
        tv = truth(t) if truth is not None else np.full(6, np.nan)
        err = angle_errors(state.x, tv) if truth is not None else np.full(6, np.nan)
        val = nmse_fn(t, seg, state) if nmse_fn is not None else float("nan")
        trace.steps.append(TrackStep(t, state.x.copy(), tv, err, state.nis, event, val))
    return trace
