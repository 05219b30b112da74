"""Sparse geometric channels, RIS path loss and effective-channel assembly."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from risframe.arrays import BROADSIDE, AnglePair, UpaGeometry, steering_vector

RECORD_SCHEMA = "risframe-channel/v1"


def make_rng(seed: int | Sequence[int]) -> np.random.Generator:
    """Deterministic generator from a 64-bit seed or a tuple of integer keys."""
    return np.random.default_rng(np.random.SeedSequence(seed))


def child_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for (master seed, trial index, purpose...)."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, keys)]))


def complex_normal(rng: np.random.Generator, size, variance: float = 1.0) -> np.ndarray:
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


@dataclass(frozen=True)
class PathComponent:
    gain: complex
    departure: AnglePair
    arrival: AnglePair

    def __post_init__(self):
        if not np.isfinite(self.gain):
            raise ValueError("path gain must be finite")


@dataclass(frozen=True)
class ChannelRealization:
    """Geometric channel ``sum_l z_l a_rx(arrival_l) a_tx(departure_l)^H``."""

    paths: tuple[PathComponent, ...]
    tx_geom: UpaGeometry
    rx_geom: UpaGeometry

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        if len(self.paths) < 1:
            raise ValueError("a channel needs at least one path")

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    @property
    def gains(self) -> np.ndarray:
        return np.array([p.gain for p in self.paths], dtype=complex)

    @cached_property
    def rx_steering(self) -> np.ndarray:
        return np.stack([steering_vector(self.rx_geom, p.arrival) for p in self.paths], axis=1)

    @cached_property
    def tx_steering(self) -> np.ndarray:
        return np.stack([steering_vector(self.tx_geom, p.departure) for p in self.paths], axis=1)

    @cached_property
    def matrix(self) -> np.ndarray:
        return (self.rx_steering * self.gains) @ self.tx_steering.conj().T

    def apply(self, x: np.ndarray) -> np.ndarray:
        """``matrix @ x`` without assembling the matrix."""
        return (self.rx_steering * self.gains) @ (self.tx_steering.conj().T @ x)

    def phase_only(self) -> "ChannelRealization":
        """Same geometry with every gain replaced by its unit-modulus phase."""
        paths = [PathComponent(np.exp(1j * np.angle(p.gain)), p.departure, p.arrival) for p in self.paths]
        return ChannelRealization(tuple(paths), self.tx_geom, self.rx_geom)

    def to_record(self) -> str:
        """Structured-text record: a schema line, two geometry lines, one line per path."""
        out = io.StringIO()
        out.write(f"# schema: {RECORD_SCHEMA}\n")
        for name, g in (("tx", self.tx_geom), ("rx", self.rx_geom)):
            out.write(f"{name},{g.n_x},{g.n_y},{g.spacing!r},{g.wavelength!r}\n")
        for p in self.paths:
            vals = (p.gain.real, p.gain.imag, p.departure.elevation, p.departure.azimuth,
                    p.arrival.elevation, p.arrival.azimuth)
            out.write("path," + ",".join(repr(float(v)) for v in vals) + "\n")
        return out.getvalue()

    @classmethod
    def from_record(cls, text: str) -> "ChannelRealization":
        geoms, paths = {}, []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if parts[0] in ("tx", "rx"):
                geoms[parts[0]] = UpaGeometry(int(parts[1]), int(parts[2]), float(parts[3]), float(parts[4]))
            elif parts[0] == "path":
                gr, gi, de, da, ae, aa = map(float, parts[1:7])
                paths.append(PathComponent(complex(gr, gi), AnglePair(de, da), AnglePair(ae, aa)))
            else:
                raise ValueError(f"unrecognised record line: {line!r}")
        return cls(tuple(paths), geoms["tx"], geoms["rx"])


GainLaw = Callable[[np.random.Generator, int], np.ndarray]


def gaussian_gains(variance_per_path: float | None = None) -> GainLaw:
    """Circular complex Gaussian gains, default variance 1/L per path."""
    def law(rng, n):
        var = 1.0 / n if variance_per_path is None else variance_per_path
        return complex_normal(rng, n, var)
    return law


def sample_angles(rng: np.random.Generator, n: int,
                  elevation_range=(0.0, np.pi / 2), azimuth_range=(0.0, 2 * np.pi)) -> list[AnglePair]:
    el = rng.uniform(*elevation_range, size=n)
    az = rng.uniform(*azimuth_range, size=n)
    return [AnglePair(float(e), float(a)) for e, a in zip(el, az)]


def sample_channel(rng: np.random.Generator, n_paths: int, tx_geom: UpaGeometry, rx_geom: UpaGeometry,
                   gain_law: GainLaw | None = None, *,
                   departure_range=((0.0, np.pi / 2), (0.0, 2 * np.pi)),
                   arrival_range=((0.0, np.pi / 2), (0.0, 2 * np.pi))) -> ChannelRealization:
    """Draw an ``n_paths`` geometric channel with uniform angles and random gains.

    Draw order is fixed (gains, departures, arrivals) so that one seed maps
    to one realization regardless of array sizes.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    gains = (gain_law or gaussian_gains())(rng, n_paths)
    dep = sample_angles(rng, n_paths, *departure_range)
    arr = sample_angles(rng, n_paths, *arrival_range)
    paths = tuple(PathComponent(complex(z), d, a) for z, d, a in zip(gains, dep, arr))
    return ChannelRealization(paths, tx_geom, rx_geom)


def los_channel(tx_geom: UpaGeometry, rx_geom: UpaGeometry, departure: AnglePair, arrival: AnglePair,
                gain: complex = 1.0) -> ChannelRealization:
    return ChannelRealization((PathComponent(complex(gain), departure, arrival),), tx_geom, rx_geom)


def cos_pattern(theta: float, phi: float) -> float:
    return max(float(np.cos(theta)), 0.0)


def unit_pattern(theta: float, phi: float) -> float:
    return 1.0


@dataclass
class PathLossParams:
    """Inputs of the far-field RIS path-loss model (all gains linear)."""

    d_g: float
    d_h: float
    n_ris: int = 16
    d_x: float = 0.5
    wavelength: float = 1.0
    g_tx: float = 1.0
    g_rx: float = 1.0
    g_ris: float = 1.0
    reflection_gain: float = 1.0
    radiation_pattern: Callable[[float, float], float] = field(default=cos_pattern)
    delta1: float = 0.0
    delta2: float = 0.0

    def __post_init__(self):
        if self.d_g <= 0 or self.d_h <= 0:
            raise ValueError("distances must be positive")
        if not 0.0 <= self.reflection_gain <= 1.0:
            raise ValueError("reflection gain must lie in [0, 1]")


def path_loss_max(p: PathLossParams, incident: AnglePair = BROADSIDE,
                  reflected: AnglePair = BROADSIDE) -> float:
    """Peak path-loss factor reached when the surface phases match the reflection."""
    f_t = p.radiation_pattern(incident.elevation, incident.azimuth)
    f_r = p.radiation_pattern(reflected.elevation, reflected.azimuth)
    if not (0.0 <= f_t <= 1.0 and 0.0 <= f_r <= 1.0):
        raise ValueError("radiation pattern must lie in [0, 1]")
    num = (p.g_tx * p.g_rx * p.g_ris * p.n_ris ** 4 * p.d_x ** 2 * p.wavelength ** 2
           * f_t * f_r * p.reflection_gain ** 2)
    return float(num / (64.0 * np.pi ** 3 * p.d_g ** 2 * p.d_h ** 2))


def sinc_ratio(n: int, a: float) -> float:
    """``sinc(n a) / sinc(a)`` with removable singularities taken by their limit."""
    s = np.sin(a)
    if abs(s) < 1e-12:
        return float(np.cos(n * a) / np.cos(a))
    return float(np.sin(n * a) / (n * s))


def path_loss_general(p: PathLossParams, incident: AnglePair, reflected: AnglePair) -> float:
    """Path loss for an arbitrary reflected direction under the configured phase gradient."""
    ut, vt = incident.uv
    ur, vr = reflected.uv
    ax = np.pi / p.wavelength * (ut + ur + p.delta1) * p.d_x
    ay = np.pi / p.wavelength * (vt + vr + p.delta2) * p.d_x
    ratio = sinc_ratio(p.n_ris, ax) * sinc_ratio(p.n_ris, ay)
    return path_loss_max(p, incident, reflected) * ratio ** 2


def gradient_phase_terms(phases: np.ndarray, geom: UpaGeometry) -> tuple[float, float]:
    """Least-squares linear phase gradient of an N x N phase grid.

    Returns (delta1, delta2) in direction-cosine units, so that
    ``Gamma_x + delta1 = 0`` for a profile designed toward Gamma_x. Phases
    are unwrapped along both axes first; a constant offset is fitted and
    discarded.
    """
    ph = np.angle(phases) if np.iscomplexobj(phases) else np.asarray(phases, dtype=float)
    ph = ph.reshape(geom.n_x, geom.n_y)
    ph = np.unwrap(np.unwrap(ph, axis=0), axis=1)
    mx, ny = geom.centered_offsets()
    X, Y = np.meshgrid(mx, ny, indexing="ij")
    A = np.column_stack([np.ones(X.size), X.ravel(), Y.ravel()])
    coef, *_ = np.linalg.lstsq(A, ph.ravel(), rcond=None)
    k = geom.phase_scale
    return float(coef[1] / k), float(coef[2] / k)


def effective_channel(h: ChannelRealization, theta, g: ChannelRealization, beta: float) -> np.ndarray:
    """``beta * H Theta G``; ``theta`` is a RisConfiguration or an M_RIS x M_RIS array."""
    t = np.asarray(getattr(theta, "theta", theta), dtype=complex)
    H, G = h.matrix, g.matrix
    if H.shape[1] != t.shape[0] or t.shape[1] != G.shape[0]:
        raise ValueError(f"dimension chain {H.shape} x {t.shape} x {G.shape} does not match")
    return beta * (H @ t @ G)
