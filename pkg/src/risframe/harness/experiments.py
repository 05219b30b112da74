"""Monte Carlo experiments: NMSE sweep, beam patterns, tracking, full pipeline."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from risframe.arrays import (BROADSIDE, AnglePair, UpaGeometry, angular_distance, degree_grid, direction_basis, radiated_power,
                             steering_vector)
from risframe.beamsearch import Codebook, SearchResult, hierarchical_search, primary_codebook
from risframe.channel import (ChannelRealization, PathComponent, child_rng, complex_normal, los_channel,
                              sample_angles)
from risframe.estimation import (HEstimate, ReweightConfig, build_pilots, estimate_cascaded_ls, estimate_h,
                                 make_combiner, nmse, observe)
from risframe.harness.config import ScenarioConfig
from risframe.ris_control import (RisConfiguration, codeword_configuration, design_theta, dft_configuration,
                                  estimate_g, phases_for_direction, steer_configuration)
from risframe.tracking import (EkfState, EvolutionModel, MeasurementContext, Segment, Trajectory, TrackTrace,
                               constant_rate_trajectory, half_power_beamwidth, nis_threshold, state_vector,
                               track_segment)

# purpose keys for child seeds
CHANNEL, NOISE, PROBES, PATTERN, TRACK = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class System:
    """Geometries, deployment channel and codebooks of one M_RIS configuration."""

    bs: UpaGeometry
    ris: UpaGeometry
    ue: UpaGeometry
    g_opt: ChannelRealization
    ris_books: tuple[Codebook, Codebook]
    ue_books: tuple[Codebook, Codebook]
    beta: float

    @property
    def precoder(self) -> np.ndarray:
        return steering_vector(self.bs, self.g_opt.paths[0].departure)


def _square(m: int) -> int:
    return int(round(math.sqrt(m)))


def build_system(cfg: ScenarioConfig, m_ris: int) -> System:
    lam = cfg.wavelength
    geo = lambda m: UpaGeometry.square(_square(m), cfg.spacing * lam, lam)
    bs, ris, ue = geo(cfg.m_bs), geo(m_ris), geo(cfg.m_ue)
    g_opt = los_channel(bs, ris, AnglePair.from_degrees(*cfg.bs_departure_deg),
                        AnglePair.from_degrees(*cfg.ris_arrival_deg))

    def books(n):
        return (primary_codebook("elevation", n, cfg.tau, cfg.k_beams, cfg.spacing),
                primary_codebook("azimuth", n, cfg.tau, cfg.k_beams, cfg.spacing))

    # amplitude gain of the surface relative to a single element: the path
    # loss grows as N^4, i.e. amplitude N^2 = M_RIS
    return System(bs, ris, ue, g_opt, books(ris.n_x), books(ue.n_x), beta=float(m_ris))


def noise_variance(cfg: ScenarioConfig, snr_db: float) -> float:
    """Per-antenna noise power for a unit-power single-element reference link (``inf`` dB is noiseless)."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return (1.0 / cfg.m_ue) / 10.0 ** (snr_db / 10.0)


def sample_bs_ris(rng: np.random.Generator, cfg: ScenarioConfig, system: System) -> ChannelRealization:
    """LoS path at the deployment angles (unit magnitude, random phase) plus NLoS scatterers."""
    los = system.g_opt.paths[0]
    phase = rng.uniform(0.0, 2 * np.pi)
    n_nlos = cfg.l_g - 1
    gains = complex_normal(rng, n_nlos, cfg.nlos_variance)
    dep = sample_angles(rng, n_nlos)
    arr = sample_angles(rng, n_nlos)
    paths = [PathComponent(complex(np.exp(1j * phase)), los.departure, los.arrival)]
    paths += [PathComponent(complex(z), d, a) for z, d, a in zip(gains, dep, arr)]
    return ChannelRealization(tuple(paths), system.bs, system.ris)


def sample_ris_ue(rng: np.random.Generator, cfg: ScenarioConfig, system: System) -> ChannelRealization:
    """RIS-UE channel; the UE array is parallel to the surface so each path arrives at its departure angles."""
    el = np.deg2rad(cfg.ue_elevation_deg)
    az = np.deg2rad(cfg.ue_azimuth_deg)
    gains = complex_normal(rng, cfg.l_h, 1.0 / cfg.l_h)
    dep = sample_angles(rng, cfg.l_h, tuple(el), tuple(az))
    paths = tuple(PathComponent(complex(z), d, d) for z, d in zip(gains, dep))
    return ChannelRealization(paths, system.ris, system.ue)


def draw_channels(cfg: ScenarioConfig, system: System, trial: int):
    """Channel pair of one trial; the stream is shared across M_RIS sizes and methods."""
    rng = child_rng(cfg.seed, trial, CHANNEL)
    g = sample_bs_ris(rng, cfg, system)
    h = sample_ris_ue(rng, cfg, system)
    return g, h


def incidence_removal(system: System) -> np.ndarray:
    """Surface phases that undo the deployment incidence, so a codeword radiates as from a transmit array."""
    return phases_for_direction(system.ris, system.g_opt.paths[0].arrival, BROADSIDE).diagonal


def training_measure(system: System, h: ChannelRealization, g: ChannelRealization, noise_var: float,
                     rng: np.random.Generator, n_symbols: int = 1,
                     dwell_scaling: bool = True) -> Callable[[np.ndarray, np.ndarray], float]:
    """Received training power for a (RIS codeword, UE combiner) pair.

    The surface applies incident-phase removal on top of the codeword, so it
    radiates the codeword as a transmit array would. The UE combines with
    the conjugate of its codeword and coherently integrates ``n_symbols``
    unit pilots; with ``dwell_scaling`` a codeword with ``n`` active
    elements is held ``M_RIS / n`` times longer.
    """
    base = incidence_removal(system)
    gf = g.apply(system.precoder)
    H = h.matrix

    def measure(wr: np.ndarray, wu: np.ndarray) -> float:
        sig = system.beta * (wu.conj() @ (H @ (base * wr * gf)))
        z = n_symbols * (system.ris.size / max(np.count_nonzero(wr), 1) if dwell_scaling else 1)
        sd = math.sqrt(noise_var * float(np.vdot(wu, wu).real) / z)
        noise = sd * complex_normal(rng, 1)[0] if noise_var > 0 else 0.0
        return float(abs(sig + noise) ** 2)

    return measure


def pilot_symbols(n: int) -> np.ndarray:
    """Unit-modulus chirp pilot sequence."""
    p = np.arange(n)
    return np.exp(1j * np.pi * p ** 2 / n)


def reweight_config(cfg: ScenarioConfig) -> ReweightConfig:
    return ReweightConfig(delta=cfg.delta, epsilon=cfg.epsilon, max_iter=cfg.max_iter, zeta_c=cfg.zeta_c,
                          zeta_floor=cfg.zeta_floor)


@dataclass
class ProposedOutcome:
    search: SearchResult
    theta: RisConfiguration
    estimate: HEstimate
    truth: np.ndarray
    nmse: float


def reference_truth(system: System, h: ChannelRealization, g: ChannelRealization, theta: RisConfiguration,
                    g_hat: np.ndarray) -> np.ndarray:
    """The RIS-UE matrix the split model can represent: H rescaled so that H Theta G f = H_ref Theta G_hat f."""
    f = system.precoder
    a = h.tx_steering[:, 0]
    num = np.vdot(a, theta.apply(g.apply(f)))
    den = np.vdot(a, theta.apply(g_hat @ f))
    return (num / den) * h.matrix


def run_proposed(cfg: ScenarioConfig, system: System, g: ChannelRealization, h: ChannelRealization,
                 snr_db: float, u_p: int, rng: np.random.Generator, probe_rng: np.random.Generator,
                 exact_angles: bool = False) -> ProposedOutcome:
    """Beam training, BS-RIS compensation and RIS-UE gain estimation for one trial."""
    sigma2 = noise_variance(cfg, snr_db)
    measure = training_measure(system, h, g, sigma2, rng, cfg.training_symbols, cfg.dwell_scaling)
    search = hierarchical_search(measure, system.ris_books, system.ue_books, rotations=cfg.rotations,
                                 levels=cfg.refine_levels)
    if exact_angles:
        aod = h.paths[0].departure
        aoa = h.paths[0].arrival
    else:
        aoa, aod = search.estimated_aoa, search.estimated_aod
    arrival = system.g_opt.paths[0].arrival
    theta_last = codeword_configuration(system.ris, arrival, search.ris_weights)
    g_hat = estimate_g(theta_last, aod, system.g_opt)
    theta = design_theta(g_hat, system.g_opt, aod, allow_rank_deficient=True)
    Q = make_combiner(probe_rng, system.ue, aoa)
    block = build_pilots(theta, g_hat, system.precoder, pilot_symbols(u_p), Q, u_p, beta=system.beta,
                         n_paths=cfg.l_h)
    block = observe(block, h, theta, g, rng, sigma2)
    est = estimate_h(block, aoa, aod, system.ue, system.ris, reweight_config(cfg))
    truth = reference_truth(system, h, g, theta, g_hat.matrix)
    return ProposedOutcome(search, theta, est, truth, nmse(est.matrix, truth))


def run_baseline(cfg: ScenarioConfig, system: System, g: ChannelRealization, h: ChannelRealization,
                 snr_db: float, u_p: int, rng: np.random.Generator, probe_rng: np.random.Generator) -> float:
    """Cascaded least squares with DFT surface phases, random precoders and no beam alignment."""
    sigma2 = noise_variance(cfg, snr_db)
    theta = dft_configuration(system.ris)
    P = complex_normal(probe_rng, (system.bs.size, u_p))
    P /= np.linalg.norm(P, axis=0, keepdims=True)
    h_eff = system.beta * (h.matrix @ theta.apply(g.matrix))
    Y = h_eff @ P + complex_normal(rng, (system.ue.size, u_p), sigma2)
    return nmse(estimate_cascaded_ls(Y, P), h_eff)


# tracking


def beam_offsets(pointing: AnglePair, step: float) -> list[AnglePair]:
    """Beam-switching directions: the pointing plus four neighbours ``step`` away (radians of arc)."""
    el, az = pointing.elevation, pointing.azimuth
    d_az = step / max(math.sin(el), 0.2)
    out = [pointing]
    for de, da in ((step, 0.0), (-step, 0.0), (0.0, d_az), (0.0, -d_az)):
        e = min(max(el + de, 0.0), np.pi / 2)
        out.append(AnglePair(e, az + da))
    return out


def tracking_model(cfg: ScenarioConfig, noise_var: float) -> EvolutionModel:
    q_gain = cfg.q_gain if cfg.q_gain is not None else (1.0 - cfg.rho ** 2) / (2.0 * cfg.l_h)
    return EvolutionModel(rho=cfg.rho, q_gain=q_gain, q_angle=float(np.deg2rad(cfg.q_angle_deg) ** 2),
                          r_meas=noise_var / 2.0)


def channel_at(traj: Trajectory, t: int, system: System) -> ChannelRealization:
    ang = traj.ris_angle(t)
    return ChannelRealization((PathComponent(complex(traj.gains[t]), ang, traj.ue_angle(t)),), system.ris, system.ue)


@dataclass
class _SegmentData:
    theta: RisConfiguration
    g_hat: np.ndarray
    true_pilots: np.ndarray
    nmse: float


def make_segment(cfg: ScenarioConfig, system: System, g: ChannelRealization, outcome: ProposedOutcome,
                 t: int) -> Segment:
    """Freeze the beams of a fresh estimate into a tracking segment."""
    est = outcome.estimate
    aod, aoa = est.aod[0], est.aoa[0]
    arrival = system.g_opt.paths[0].arrival
    theta_last = codeword_configuration(system.ris, arrival, outcome.search.ris_weights)
    g_hat = estimate_g(theta_last, aod, system.g_opt).matrix
    step = half_power_beamwidth(system.ris) / 4
    thetas = [design_theta(g_hat, system.g_opt, d, allow_rank_deficient=True) for d in beam_offsets(aod, step)]
    Q = np.eye(system.ue.size, dtype=complex)
    ctx = MeasurementContext.from_configurations(system.beta, Q, thetas, g_hat, system.precoder, system.ris,
                                                 system.ue)
    gf = g.apply(system.precoder)
    true_pilots = np.stack([th.apply(gf) for th in thetas], axis=1)
    z = complex(est.z_hat[0])
    x0 = state_vector(z, aod, aoa)
    bw = half_power_beamwidth(system.ris)
    P0 = np.diag([0.01 * abs(z) ** 2 + 1e-6] * 2 + [(bw / 8) ** 2] * 4)
    return Segment(ctx, aod, EkfState(x0, P0, t), _SegmentData(thetas[0], g_hat, true_pilots, outcome.nmse))


def tracked_nmse(system: System, g: ChannelRealization, h_t: ChannelRealization, seg: Segment,
                 state: EkfState) -> float:
    est = HEstimate(np.array([state.gain]), (state.ue_angle,), (state.ris_angle,), system.ue, system.ris)
    truth = reference_truth(system, h_t, g, seg.payload.theta, seg.payload.g_hat)
    return nmse(est.matrix, truth)


@dataclass
class TrackingOutcome:
    trace: TrackTrace
    initial_nmse: float
    baseline_nmse: np.ndarray
    reestimation_nmse: list[float]


def motion_directions(cfg: ScenarioConfig, start: AnglePair, excursion: float) -> tuple[float, float]:
    """Signs of motion that keep the whole path inside the UE sector the codebooks cover.

    Each angle moves up unless that would leave the sector, in which case it moves down.
    """
    signs = []
    for value, bounds in ((start.elevation, cfg.ue_elevation_deg), (start.azimuth, cfg.ue_azimuth_deg)):
        upper = math.radians(max(bounds))
        signs.append(1.0 if value + excursion <= upper else -1.0)
    return signs[0], signs[1]


def run_tracking_trial(cfg: ScenarioConfig, trial: int, rates: np.ndarray, with_baseline: bool = True,
                       reestimate: bool = True) -> TrackingOutcome:
    """One tracking run: estimate at t=0, then EKF tracking with re-estimation, plus the baseline."""
    system = build_system(cfg, cfg.m_ris)
    g, h = draw_channels(cfg, system, trial)
    rng = child_rng(cfg.seed, trial, TRACK)
    start = h.paths[0].departure
    traj = constant_rate_trajectory(child_rng(cfg.seed, trial, TRACK, 1), h.paths[0].gain, start, rates, cfg.rho,
                                    motion_directions(cfg, start, float(np.sum(np.abs(rates[1:])))))
    snr = cfg.tracking_snr_db
    sigma2 = noise_variance(cfg, snr)
    u_p = pilot_count(cfg)
    est_rng = child_rng(cfg.seed, trial, TRACK, 2)
    probe_rng = child_rng(cfg.seed, trial, TRACK, 3)

    def estimate_at(t: int) -> ProposedOutcome:
        return run_proposed(cfg, system, g, channel_at(traj, t, system), snr, u_p, est_rng, probe_rng)

    first = estimate_at(0)
    seg0 = make_segment(cfg, system, g, first, 0)
    model = tracking_model(cfg, sigma2)
    reest_nmse: list[float] = []

    def observe(t: int, seg: Segment) -> np.ndarray:
        h_t = channel_at(traj, t, system)
        clean = system.beta * (seg.ctx.Q.conj().T @ (h_t.matrix @ seg.payload.true_pilots))
        return (clean + complex_normal(rng, clean.shape, sigma2)).ravel()

    def fresh(t: int) -> Segment:
        out = estimate_at(t)
        reest_nmse.append(out.nmse)
        return make_segment(cfg, system, g, out, t)

    gate = nis_threshold(seg0.ctx.n_obs)
    trace = track_segment(seg0, range(1, len(traj)), observe, model,
                          reestimate=fresh if reestimate else None, truth=traj.state,
                          beamwidth=half_power_beamwidth(system.ris), gate=gate, gate_steps=cfg.nis_gate_steps,
                          nmse_fn=lambda t, seg, st: tracked_nmse(system, g, channel_at(traj, t, system), seg, st))
    moving = np.flatnonzero(np.asarray(rates) != 0)
    hold = int(moving[0]) if moving.size else len(traj)
    base = run_tracking_baseline(cfg, system, g, traj, first, hold, u_p, child_rng(cfg.seed, trial, TRACK, 4),
                                 sigma2) if with_baseline else np.array([])
    return TrackingOutcome(trace, first.nmse, base, reest_nmse)


def run_tracking_baseline(cfg: ScenarioConfig, system: System, g: ChannelRealization, traj: Trajectory,
                          first: ProposedOutcome, hold_until: int, u_p: int, rng: np.random.Generator,
                          sigma2: float) -> np.ndarray:
    """Conventional scheme on the same trajectory.

    It starts from the exact initial cascaded channel under the initial beam
    and holds it while the user is static (before ``hold_until``). Afterwards the cascaded
    channel is re-estimated by least squares with DFT surface phases every
    ``baseline_refresh`` steps.
    """
    theta0 = first.theta
    tg0 = theta0.apply(g.matrix)
    # the initial cascaded channel is granted exactly, which favours the baseline
    held = system.beta * (channel_at(traj, 0, system).matrix @ tg0)
    dft = dft_configuration(system.ris)
    out = np.empty(len(traj) - 1)
    eff_est = None
    for i, t in enumerate(range(1, len(traj))):
        h_t = channel_at(traj, t, system)
        if t < hold_until:
            out[i] = nmse(held, system.beta * (h_t.matrix @ tg0))
            continue
        h_eff = system.beta * (h_t.matrix @ dft.apply(g.matrix))
        if eff_est is None or (t - hold_until) % cfg.baseline_refresh == 0:
            P = complex_normal(rng, (system.bs.size, u_p))
            P /= np.linalg.norm(P, axis=0, keepdims=True)
            Y = h_eff @ P + complex_normal(rng, (system.ue.size, u_p), sigma2)
            eff_est = estimate_cascaded_ls(Y, P)
        out[i] = nmse(eff_est, h_eff)
    return out


# beam pattern

PATTERN_CASES = ("ideal", "sparse", "rich", "compensated")


@dataclass
class PatternTrial:
    trial: int
    peaks: dict[str, tuple[float, float]]        # case -> (elevation, azimuth) of the argmax, radians
    peak_power: dict[str, float]
    ue_power: dict[str, float]                   # power toward the desired direction


@dataclass
class PatternResult:
    desired: AnglePair
    beamwidth: float
    cell: tuple[float, float]                    # grid step (elevation, azimuth), radians
    elevation: np.ndarray
    azimuth: np.ndarray
    grids: dict[str, np.ndarray]                 # first trial, linear power
    trials: list[PatternTrial]


def _peak(grid: np.ndarray, el: np.ndarray, az: np.ndarray) -> tuple[float, float]:
    i = int(np.argmax(grid))
    return float(el.ravel()[i]), float(az.ravel()[i])


def pattern_excitations(cfg: ScenarioConfig, trial: int) -> tuple[UpaGeometry, dict[str, np.ndarray]]:
    """Surface excitations ``Theta G f`` of the four cases for one random draw.

    The reflection phases are designed for an ideal, unit-gain illumination
    (the wave seen at broadside). The sparse channel adds the dominant LoS
    incidence plus weak scatterers, the rich channel replaces it by many
    equal-power paths, and the compensated case redesigns the phases with
    the deployment LoS estimate of G.
    """
    lam = cfg.wavelength
    n = cfg.pattern_n_ris
    ris = UpaGeometry.square(n, cfg.spacing * lam, lam)
    bs = UpaGeometry.square(_square(cfg.m_bs), cfg.spacing * lam, lam)
    dep = AnglePair.from_degrees(*cfg.bs_departure_deg)
    arr = AnglePair.from_degrees(*cfg.ris_arrival_deg)
    desired = AnglePair.from_degrees(*cfg.pattern_desired_deg)
    f = steering_vector(bs, dep)
    g_ideal = los_channel(bs, ris, dep, BROADSIDE)
    naive = steer_configuration(ris, BROADSIDE, desired)
    system = System(bs, ris, bs, los_channel(bs, ris, dep, arr), (), (), 1.0)
    rng = child_rng(cfg.seed, trial, PATTERN)
    g_sparse = sample_bs_ris(rng, cfg, system)
    rich_gains = complex_normal(rng, cfg.rich_paths, 1.0 / cfg.rich_paths)
    rich = ChannelRealization(tuple(PathComponent(complex(z), d, a) for z, d, a in
                                    zip(rich_gains, sample_angles(rng, cfg.rich_paths),
                                        sample_angles(rng, cfg.rich_paths))), bs, ris)
    comp = design_theta(system.g_opt.matrix, g_ideal, naive, allow_rank_deficient=True)
    return ris, {
        "ideal": naive.apply(g_ideal.apply(f)),
        "sparse": naive.apply(g_sparse.apply(f)),
        "rich": naive.apply(rich.apply(f)),
        "compensated": comp.apply(g_sparse.apply(f)),
    }


def run_beam_pattern(cfg: ScenarioConfig) -> PatternResult:
    el, az = degree_grid(cfg.pattern_el_points, cfg.pattern_az_points)
    desired = AnglePair.from_degrees(*cfg.pattern_desired_deg)
    cell = (float(el[1, 0] - el[0, 0]), float(az[0, 1] - az[0, 0]))
    trials: list[PatternTrial] = []
    grids: dict[str, np.ndarray] = {}
    ris = None
    basis = None
    for trial in range(cfg.pattern_trials):
        ris, exc = pattern_excitations(cfg, trial)
        if basis is None:
            basis = direction_basis(ris, el, az)
        peaks, peak_power, ue_power = {}, {}, {}
        for case in PATTERN_CASES:
            grid = radiated_power(ris, exc[case], el, az, basis)
            peaks[case] = _peak(grid, el, az)
            peak_power[case] = float(grid.max())
            ue_power[case] = float(radiated_power(ris, exc[case], np.array([desired.elevation]),
                                                  np.array([desired.azimuth]))[0])
            if trial == 0:
                grids[case] = grid
        trials.append(PatternTrial(trial, peaks, peak_power, ue_power))
    bw = half_power_beamwidth(ris) if ris is not None else float("nan")
    return PatternResult(desired, bw, cell, el, az, grids, trials)


# Monte Carlo drivers

log = logging.getLogger("risframe")


@dataclass
class TrialResult:
    """One trial of one scenario (M_RIS, U_p, method); ``nmse`` is keyed by SNR in dB."""

    scenario: str
    trial: int
    seed: int
    nmse: dict[float, float]
    events: int = 0
    wall_time: float = 0.0


def scenario_id(m_ris: int, u_p: int, method: str) -> str:
    return f"m{m_ris}-up{u_p}-{method}"


def _map_trials(fn: Callable[[ScenarioConfig, int], list], cfg: ScenarioConfig) -> list:
    """Run ``fn(cfg, trial)`` for every trial; results come back sorted by trial index."""
    trials = range(cfg.trials)
    if cfg.workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(fn, [cfg] * cfg.trials, trials))
    else:
        chunks = [fn(cfg, t) for t in trials]
    out = [r for chunk in chunks for r in chunk]
    return sorted(out, key=lambda r: (r.trial, getattr(r, "scenario", ""), getattr(r, "snr_db", 0.0)))


def sweep_trial(cfg: ScenarioConfig, trial: int) -> list[TrialResult]:
    """All (M_RIS, SNR) points of one trial; channels and probes are shared across sizes and methods."""
    out = []
    for m_ris, u_p in zip(cfg.m_ris_list, cfg.u_p_list):
        system = build_system(cfg, m_ris)
        g, h = draw_channels(cfg, system, trial)
        t0 = time.perf_counter()
        prop: dict[float, float] = {}
        fails = 0
        for i, snr in enumerate(cfg.snr_db):
            o = run_proposed(cfg, system, g, h, snr, u_p, child_rng(cfg.seed, trial, NOISE, i),
                             child_rng(cfg.seed, trial, PROBES))
            prop[float(snr)] = o.nmse
            fails += 0 if o.estimate.converged else 1
            if log.isEnabledFor(logging.DEBUG):
                for it, res, zeta in o.estimate.trace:
                    log.debug("trial %d M=%d SNR=%g iter %d residual %.6e zeta %.3e", trial, m_ris, snr, it,
                              res, zeta)
        out.append(TrialResult(scenario_id(m_ris, u_p, "proposed"), trial, cfg.seed, prop, fails,
                               time.perf_counter() - t0))
        if cfg.baseline:
            t0 = time.perf_counter()
            base = {float(snr): run_baseline(cfg, system, g, h, snr, u_p, child_rng(cfg.seed, trial, NOISE, i, 1),
                                             child_rng(cfg.seed, trial, PROBES, 1))
                    for i, snr in enumerate(cfg.snr_db)}
            out.append(TrialResult(scenario_id(m_ris, u_p, "baseline"), trial, cfg.seed, base, 0,
                                   time.perf_counter() - t0))
    return out


@dataclass
class SweepPoint:
    m_ris: int
    u_p: int
    method: str
    snr_db: float
    mean_nmse: float
    median_nmse: float
    trials: int


def summarize_sweep(cfg: ScenarioConfig, results: list[TrialResult]) -> list[SweepPoint]:
    points = []
    methods = ("proposed", "baseline") if cfg.baseline else ("proposed",)
    for m_ris, u_p in zip(cfg.m_ris_list, cfg.u_p_list):
        for method in methods:
            sid = scenario_id(m_ris, u_p, method)
            rows = [r for r in results if r.scenario == sid]
            for snr in cfg.snr_db:
                vals = np.array([r.nmse[float(snr)] for r in rows])
                if vals.size == 0:
                    continue
                points.append(SweepPoint(m_ris, u_p, method, float(snr), float(vals.mean()),
                                         float(np.median(vals)), int(vals.size)))
    return points


def run_nmse_sweep(cfg: ScenarioConfig) -> tuple[list[TrialResult], list[SweepPoint]]:
    results = _map_trials(sweep_trial, cfg)
    return results, summarize_sweep(cfg, results)


@dataclass
class PipelineRow:
    trial: int
    snr_db: float
    aod_error_deg: float
    aoa_error_deg: float
    measurements: int
    iterations: int
    converged: bool
    nmse: float


def pipeline_trial(cfg: ScenarioConfig, trial: int) -> list[PipelineRow]:
    system = build_system(cfg, cfg.m_ris)
    g, h = draw_channels(cfg, system, trial)
    u_p = pilot_count(cfg)
    rows = []
    for i, snr in enumerate(cfg.snr_db):
        o = run_proposed(cfg, system, g, h, snr, u_p, child_rng(cfg.seed, trial, NOISE, i),
                         child_rng(cfg.seed, trial, PROBES))
        rows.append(PipelineRow(trial, float(snr),
                                math.degrees(angular_distance(o.estimate.aod[0], h.paths[0].departure)),
                                math.degrees(angular_distance(o.estimate.aoa[0], h.paths[0].arrival)),
                                o.search.n_measurements, o.estimate.iterations, o.estimate.converged, o.nmse))
    return rows


def run_full_pipeline(cfg: ScenarioConfig) -> list[PipelineRow]:
    """Beam training, compensation and estimation at ``cfg.m_ris`` for every SNR and trial."""
    return _map_trials(pipeline_trial, cfg)


def pilot_count(cfg: ScenarioConfig) -> int:
    if cfg.m_ris in cfg.m_ris_list:
        return cfg.u_p_list[cfg.m_ris_list.index(cfg.m_ris)]
    return max(cfg.m_ris // 2, cfg.l_h)


def three_state_rates(cfg: ScenarioConfig) -> np.ndarray:
    """Static, then moving at the configured rate, then static again (radians per step)."""
    return np.concatenate([np.zeros(cfg.static_steps),
                           np.full(cfg.moving_steps, math.radians(cfg.rate_deg_per_step)),
                           np.zeros(cfg.static_steps)])


def tracking_trial(cfg: ScenarioConfig, trial: int) -> list[TrackingOutcome]:
    return [run_tracking_trial(cfg, trial, three_state_rates(cfg))]


def run_tracking_scenario(cfg: ScenarioConfig) -> list[TrackingOutcome]:
    trials = range(cfg.trials)
    if cfg.workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return [c[0] for c in pool.map(tracking_trial, [cfg] * cfg.trials, trials)]
    return [tracking_trial(cfg, t)[0] for t in trials]
