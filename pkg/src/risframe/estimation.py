"""Pilot-based estimation of the RIS-UE path gains by iterative reweighting.

Given the RIS-UE angles from beam training, the unknown channel reduces to
the path-gain vector ``z``. Each pilot contributes ``y_p = T_p z + noise``
with ``T_p = beta Q^H A_UE diag(A_RIS^H x_p)``. Sparsity is promoted with a
log-sum penalty that is majorized at every iteration by a weighted ridge
term, giving the closed-form update

    z = (D / zeta + sum_p T_p^H T_p)^-1 sum_p T_p^H y_p,
    D = diag(1 / (|z_l|^2 + delta)).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from risframe.arrays import AnglePair, UpaGeometry, steering_matrix, steering_vector
from risframe.channel import ChannelRealization, complex_normal


class UnderdeterminedPilotWarning(UserWarning):
    """Fewer pilot sequences than unknown path gains."""


@dataclass
class PilotBlock:
    """Pilots ``X`` (M_RIS x U_p), combiner ``Q`` (M_UE x U) and observations ``Y`` (U x U_p)."""

    X: np.ndarray
    Q: np.ndarray
    precoder: np.ndarray
    symbols: np.ndarray
    beta: float = 1.0
    Y: np.ndarray | None = None
    underdetermined: bool = False

    @property
    def n_pilots(self) -> int:
        return self.X.shape[1]

    @property
    def n_slots(self) -> int:
        return self.Q.shape[1]

    def regressors(self, ue_geom: UpaGeometry, ris_geom: UpaGeometry,
                   aoa: Sequence[AnglePair], aod: Sequence[AnglePair]) -> np.ndarray:
        """Stacked ``T_p`` as an array of shape (U_p, U, L_h)."""
        a_ue = steering_matrix(ue_geom, list(aoa))           # M_UE x L
        a_ris = steering_matrix(ris_geom, list(aod))         # M_RIS x L
        qa = self.Q.conj().T @ a_ue                          # U x L
        proj = a_ris.conj().T @ self.X                       # L x U_p
        return self.beta * qa[None, :, :] * proj.T[:, None, :]


def make_combiner(rng: np.random.Generator, ue_geom: UpaGeometry, aoa: AnglePair,
                  n_slots: int | None = None) -> np.ndarray:
    """Combiner whose first column points at the estimated AoA; the rest are random unit-norm probes."""
    u = ue_geom.size if n_slots is None else n_slots
    if u < 1:
        raise ValueError("need at least one combining slot")
    probes = complex_normal(rng, (ue_geom.size, u - 1))
    probes /= np.linalg.norm(probes, axis=0, keepdims=True)
    return np.column_stack([steering_vector(ue_geom, aoa), probes])


def build_pilots(theta, g_hat, precoder: np.ndarray, symbols: np.ndarray, combiner: np.ndarray,
                 n_pilots: int, *, beta: float = 1.0, n_paths: int = 1) -> PilotBlock:
    """Pilot matrix ``X = Theta G_hat F S`` for ``n_pilots`` sequences.

    ``precoder`` is M_BS x N_s (a vector is one stream); ``symbols`` is
    N_s x U_p (a vector is one stream). Combiner columns are normalized.
    Fewer pilots than paths raises ``UnderdeterminedPilotWarning`` and sets
    the ``underdetermined`` flag.
    """
    t = np.asarray(getattr(theta, "theta", theta), dtype=complex)
    g = np.asarray(getattr(g_hat, "matrix", g_hat), dtype=complex)
    f = np.asarray(precoder, dtype=complex)
    f = f[:, None] if f.ndim == 1 else f
    s = np.asarray(symbols, dtype=complex)
    s = s[None, :] if s.ndim == 1 else s
    if s.shape[1] != n_pilots:
        raise ValueError(f"symbols carry {s.shape[1]} pilots, expected {n_pilots}")
    q = np.asarray(combiner, dtype=complex)
    q = q / np.linalg.norm(q, axis=0, keepdims=True)
    under = n_pilots < n_paths
    if under:
        warnings.warn(f"{n_pilots} pilots for {n_paths} unknown gains", UnderdeterminedPilotWarning,
                      stacklevel=2)
    X = t @ (g @ (f @ s))
    return PilotBlock(X=X, Q=q, precoder=f, symbols=s, beta=beta, underdetermined=under)


def observe(block: PilotBlock, h: ChannelRealization | np.ndarray, theta, g: ChannelRealization | np.ndarray,
            rng: np.random.Generator | None = None, noise_var: float = 0.0) -> PilotBlock:
    """Received pilots ``Y = beta Q^H H Theta G F S + Q^H N`` through the true channels."""
    H = np.asarray(getattr(h, "matrix", h), dtype=complex)
    G = np.asarray(getattr(g, "matrix", g), dtype=complex)
    t = np.asarray(getattr(theta, "theta", theta), dtype=complex)
    rx = block.beta * (H @ (t @ (G @ (block.precoder @ block.symbols))))
    if noise_var > 0:
        if rng is None:
            raise ValueError("noise requires a generator")
        rx = rx + complex_normal(rng, rx.shape, noise_var)
    return replace(block, Y=block.Q.conj().T @ rx)


@dataclass
class ReweightConfig:
    delta: float = 1e-6
    epsilon: float = 1e-8
    max_iter: int = 50
    zeta_c: float = 1.0
    zeta_floor: float = 1e-10
    fixed_zeta: float | None = None
    stall_tol: float = 1e-12

    def zeta(self, residual: float) -> float:
        if self.fixed_zeta is not None:
            return self.fixed_zeta
        return self.zeta_c / max(residual ** 2, self.zeta_floor)


@dataclass
class ReweightState:
    z_hat: np.ndarray
    zeta: float
    delta: float = 1e-6
    iteration: int = 0
    residual: float = np.inf

    @property
    def D(self) -> np.ndarray:
        return np.diag(1.0 / (np.abs(self.z_hat) ** 2 + self.delta))


def _stack(T_list, y_list) -> tuple[np.ndarray, np.ndarray]:
    T = np.asarray(T_list, dtype=complex)
    y = np.asarray(y_list, dtype=complex)
    if T.ndim == 2:
        T = T[None]
        y = y[None]
    if not (np.all(np.isfinite(T)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite regressors or observations")
    return T.reshape(-1, T.shape[-1]), y.reshape(-1)


def residual_norm(z: np.ndarray, T_list, y_list) -> float:
    T, y = _stack(T_list, y_list)
    return float(np.linalg.norm(y - T @ z))


def surrogate(z: np.ndarray, state: ReweightState, T_list, y_list) -> float:
    """Majorizer of the log-sum objective around ``state.z_hat`` (constants dropped), divided by zeta."""
    T, y = _stack(T_list, y_list)
    w = 1.0 / (np.abs(state.z_hat) ** 2 + state.delta)
    return float(np.sum(w * np.abs(z) ** 2) / state.zeta + np.linalg.norm(y - T @ z) ** 2)


def log_sum_objective(z: np.ndarray, zeta: float, delta: float, T_list, y_list) -> float:
    """Penalized objective ``sum log(|z|^2 + delta) / zeta + ||y - T z||^2``."""
    T, y = _stack(T_list, y_list)
    return float(np.sum(np.log(np.abs(z) ** 2 + delta)) / zeta + np.linalg.norm(y - T @ z) ** 2)


def surrogate_gradient(z: np.ndarray, state: ReweightState, T_list, y_list) -> np.ndarray:
    """Wirtinger gradient of ``surrogate`` with respect to conj(z)."""
    T, y = _stack(T_list, y_list)
    w = 1.0 / (np.abs(state.z_hat) ** 2 + state.delta)
    return w * z / state.zeta - T.conj().T @ (y - T @ z)


def reweight_step(state: ReweightState, T_list, y_list) -> np.ndarray:
    """Closed-form minimizer of the current surrogate."""
    T, y = _stack(T_list, y_list)
    normal = state.D / state.zeta + T.conj().T @ T
    return np.linalg.solve(normal, T.conj().T @ y)


def least_squares(T_list, y_list) -> np.ndarray:
    T, y = _stack(T_list, y_list)
    return np.linalg.lstsq(T, y, rcond=None)[0]


@dataclass
class HEstimate:
    z_hat: np.ndarray
    aoa: tuple[AnglePair, ...]
    aod: tuple[AnglePair, ...]
    ue_geom: UpaGeometry
    ris_geom: UpaGeometry
    converged: bool = True
    iterations: int = 0
    residual: float = 0.0
    trace: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def matrix(self) -> np.ndarray:
        a_ue = steering_matrix(self.ue_geom, list(self.aoa))
        a_ris = steering_matrix(self.ris_geom, list(self.aod))
        return (a_ue * self.z_hat) @ a_ris.conj().T


def estimate_h(pilots: PilotBlock, aoa: AnglePair | Sequence[AnglePair], aod: AnglePair | Sequence[AnglePair],
               ue_geom: UpaGeometry, ris_geom: UpaGeometry, config: ReweightConfig | None = None) -> HEstimate:
    """Iterative reweighted estimate of the RIS-UE channel for fixed angles.

    Starts from least squares and repeats ``reweight_step`` until the
    residual drops below ``epsilon``, the iterate stops moving, or
    ``max_iter`` is reached; in the last case the lowest-residual iterate is
    returned with ``converged = False``.
    """
    cfg = config or ReweightConfig()
    if pilots.Y is None:
        raise ValueError("pilot block carries no observations")
    aoa = (aoa,) if isinstance(aoa, AnglePair) else tuple(aoa)
    aod = (aod,) if isinstance(aod, AnglePair) else tuple(aod)
    T = pilots.regressors(ue_geom, ris_geom, aoa, aod)
    y = pilots.Y.T.copy()                                    # (U_p, U)

    z = least_squares(T, y)
    res = residual_norm(z, T, y)
    trace = [(0, res, cfg.zeta(res))]
    best = (res, z)
    converged = res <= cfg.epsilon
    it = 0
    while not converged and it < cfg.max_iter:
        it += 1
        state = ReweightState(z, cfg.zeta(res), cfg.delta, it, res)
        z_new = reweight_step(state, T, y)
        moved = float(np.linalg.norm(z_new - z))
        z = z_new
        res = residual_norm(z, T, y)
        trace.append((it, res, state.zeta))
        if res < best[0]:
            best = (res, z)
        converged = res <= cfg.epsilon or moved <= cfg.stall_tol * max(float(np.linalg.norm(z)), 1e-300)
    if not converged:
        res, z = best
    return HEstimate(z, aoa, aod, ue_geom, ris_geom, converged, it, res, trace)


def nmse(h_est: np.ndarray, h_true: np.ndarray) -> float:
    """Normalized squared error ``||h_est - h_true||_F^2 / ||h_true||_F^2``."""
    h_est = np.asarray(h_est)
    h_true = np.asarray(h_true)
    if h_est.shape != h_true.shape:
        raise ValueError(f"shape mismatch {h_est.shape} vs {h_true.shape}")
    denom = float(np.linalg.norm(h_true) ** 2)
    if denom == 0.0:
        raise ValueError("reference matrix has zero norm")
    return float(np.linalg.norm(h_est - h_true) ** 2 / denom)


def estimate_cascaded_ls(Y: np.ndarray, precoders: np.ndarray, combiner: np.ndarray | None = None) -> np.ndarray:
    """Minimum-norm least-squares estimate of the cascaded channel from ``Y = Q^H H_eff P + noise``."""
    P = np.asarray(precoders, dtype=complex)
    left = np.eye(Y.shape[0]) if combiner is None else np.linalg.pinv(np.asarray(combiner).conj().T)
    return left @ Y @ np.linalg.pinv(P)
