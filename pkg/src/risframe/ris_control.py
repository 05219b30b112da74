"""RIS phase-matrix construction and BS-RIS channel compensation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from risframe.arrays import BROADSIDE, AnglePair, UpaGeometry, mirror
from risframe.channel import ChannelRealization

TWO_PI = 2.0 * np.pi
MAX_CONDITION = 1e12


def wrap_phase(a: np.ndarray) -> np.ndarray:
    """Phases folded into [0, 2 pi); tiny negatives would otherwise round to 2 pi."""
    w = np.mod(a, TWO_PI)
    return np.where(w >= TWO_PI, 0.0, w)


class SingularGramError(np.linalg.LinAlgError):
    """Raised when the Gram matrix of the BS-RIS estimate cannot be inverted."""

    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"Gram matrix is singular to working precision (cond = {condition:.3e})")


@dataclass(frozen=True)
class RisConfiguration:
    """Reflection operator applied by the surface.

    Diagonal configurations (``directional`` and ``codeword``) store only the
    reflection coefficients; ``g-compensated`` ones carry a full matrix.
    """

    geom: UpaGeometry
    provenance: str
    diagonal: np.ndarray | None = None
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if (self.diagonal is None) == (self.matrix is None):
            raise ValueError("give exactly one of diagonal or matrix")
        m = self.geom.size
        if self.diagonal is not None and self.diagonal.shape != (m,):
            raise ValueError(f"diagonal must have length {m}")
        if self.matrix is not None and self.matrix.shape != (m, m):
            raise ValueError(f"matrix must be {m} x {m}")

    @property
    def is_diagonal(self) -> bool:
        return self.diagonal is not None

    @property
    def theta(self) -> np.ndarray:
        return np.diag(self.diagonal) if self.is_diagonal else self.matrix

    @property
    def phi(self) -> np.ndarray:
        """N_x x N_y grid of per-element coefficients (the diagonal for full matrices)."""
        d = self.diagonal if self.is_diagonal else np.diag(self.matrix)
        return d.reshape(self.geom.n_x, self.geom.n_y)

    @property
    def phases(self) -> np.ndarray:
        return wrap_phase(np.angle(self.phi))

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.is_diagonal:
            return self.diagonal[:, None] * x if x.ndim == 2 else self.diagonal * x
        return self.matrix @ x

    def inverse_apply(self, x: np.ndarray) -> np.ndarray:
        if self.is_diagonal:
            return x / self.diagonal[:, None] if x.ndim == 2 else x / self.diagonal
        return np.linalg.solve(self.matrix, x)


def from_phases(geom: UpaGeometry, phases: np.ndarray, provenance: str = "directional") -> RisConfiguration:
    return RisConfiguration(geom, provenance, diagonal=np.exp(1j * np.asarray(phases, float).ravel()))


def _gammas(incident: AnglePair, desired: AnglePair) -> tuple[float, float]:
    ut, vt = incident.uv
    ud, vd = desired.uv
    return ut + ud, vt + vd


def phases_for_direction(geom: UpaGeometry, incident: AnglePair, desired: AnglePair) -> RisConfiguration:
    """Linear phase profile reflecting a wave from ``incident`` toward ``desired`` (surface frame)."""
    gx, gy = _gammas(incident, desired)
    mx, ny = geom.centered_offsets()
    k = geom.phase_scale
    alpha = wrap_phase(-k * (gx * mx[:, None] + gy * ny[None, :]))
    return from_phases(geom, alpha, "directional")


def kron_steering(geom: UpaGeometry, incident: AnglePair, desired: AnglePair) -> np.ndarray:
    """Same profile as ``phases_for_direction`` written as ``Lambda_x kron Lambda_y``."""
    gx, gy = _gammas(incident, desired)
    mx, ny = geom.centered_offsets()
    k = geom.phase_scale
    lam_x = np.exp(-1j * k * mx * gx)
    lam_y = np.exp(-1j * k * ny * gy)
    return np.kron(lam_x, lam_y)


def steer_configuration(geom: UpaGeometry, arrival: AnglePair, departure: AnglePair) -> RisConfiguration:
    """Directional profile in channel-frame terms: arrival of G, departure of H."""
    return phases_for_direction(geom, arrival, mirror(departure))


def codeword_configuration(geom: UpaGeometry, arrival: AnglePair, weights: np.ndarray) -> RisConfiguration:
    """Beam-training configuration: codeword ``weights`` on top of incident-phase removal.

    With this configuration the surface radiates ``weights`` exactly as a
    transmit UPA of the same geometry would.
    """
    base = phases_for_direction(geom, arrival, BROADSIDE).diagonal
    return RisConfiguration(geom, "codeword", diagonal=base * np.asarray(weights, complex).ravel())


def dft_configuration(geom: UpaGeometry) -> RisConfiguration:
    """Reflection pattern drawn from the N_x x N_y DFT matrix (unit modulus)."""
    n = np.arange(geom.n_x)[:, None]
    m = np.arange(geom.n_y)[None, :]
    return RisConfiguration(geom, "dft", diagonal=np.exp(-1j * TWO_PI * n * m / max(geom.n_x, geom.n_y)).ravel())


def aligned_configuration(geom: UpaGeometry, h_row: np.ndarray, g_col: np.ndarray) -> RisConfiguration:
    """Phases co-phasing the per-element cascade ``h_i g_i``."""
    return RisConfiguration(geom, "aligned", diagonal=np.exp(-1j * np.angle(h_row * g_col)))


@dataclass(frozen=True)
class GEstimate:
    matrix: np.ndarray
    phase_only: bool = True


def estimate_g(theta_last: RisConfiguration, ue_angles: AnglePair, g_opt: ChannelRealization) -> GEstimate:
    """BS-RIS estimate from the beam shift between the last training phases and the UE direction.

    ``ue_angles`` is the channel-frame departure toward the UE found by beam
    training; ``g_opt`` is the single LoS path known from deployment.
    """
    steer = steer_configuration(g_opt.rx_geom, g_opt.paths[0].arrival, ue_angles)
    return GEstimate(theta_last.inverse_apply(steer.apply(g_opt.matrix)), phase_only=True)


def _right_inverse(g: np.ndarray, allow_rank_deficient: bool) -> np.ndarray:
    gram = g @ g.conj().T
    cond = float(np.linalg.cond(gram))
    if cond <= MAX_CONDITION:
        return g.conj().T @ np.linalg.inv(gram)
    if not allow_rank_deficient:
        raise SingularGramError(cond)
    return np.linalg.pinv(g, rcond=1e-10)


def design_theta(g_hat: GEstimate | np.ndarray, g_opt: ChannelRealization,
                 desired: AnglePair | RisConfiguration, *, allow_rank_deficient: bool = False) -> RisConfiguration:
    """Phase matrix cancelling the BS-RIS estimate: ``Theta(des) G_opt G^H (G G^H)^-1``.

    ``desired`` is a channel-frame departure toward the UE or a ready-made
    target configuration. Without ``allow_rank_deficient`` an ill-conditioned
    Gram matrix raises ``SingularGramError``; with it the Moore-Penrose
    pseudo-inverse is used instead, which keeps ``Theta G = Theta(des) G_opt``
    whenever the rows of ``G_opt`` lie in the row space of the estimate.
    """
    g = np.asarray(getattr(g_hat, "matrix", g_hat), dtype=complex)
    if isinstance(desired, RisConfiguration):
        target = desired
    else:
        target = steer_configuration(g_opt.rx_geom, g_opt.paths[0].arrival, desired)
    theta = target.apply(g_opt.matrix) @ _right_inverse(g, allow_rank_deficient)
    return RisConfiguration(g_opt.rx_geom, "g-compensated", matrix=theta)


def project_diagonal(config: RisConfiguration, g_hat: GEstimate | np.ndarray) -> RisConfiguration:
    """Unit-modulus diagonal closest (row-wise least squares, then phase) to ``config`` acting on ``g_hat``."""
    if config.is_diagonal:
        return RisConfiguration(config.geom, "projected", diagonal=np.exp(1j * np.angle(config.diagonal)))
    g = np.asarray(getattr(g_hat, "matrix", g_hat), dtype=complex)
    target = config.matrix @ g
    t = np.sum(target * g.conj(), axis=1) / np.maximum(np.sum(np.abs(g) ** 2, axis=1), 1e-300)
    return RisConfiguration(config.geom, "projected", diagonal=np.exp(1j * np.angle(t)))


def export_phase_grid(config: RisConfiguration, path: str | Path) -> None:
    """Write the per-element phases (radians, [0, 2 pi)) as a plain-text N x N grid."""
    np.savetxt(path, config.phases, fmt="%.12f", header=f"risframe phase grid {config.provenance}")


def load_phase_grid(geom: UpaGeometry, path: str | Path) -> RisConfiguration:
    return from_phases(geom, np.loadtxt(path).reshape(geom.n_x, geom.n_y))
