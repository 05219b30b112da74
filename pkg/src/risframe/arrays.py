"""UPA geometry, steering vectors and RIS array-factor primitives.

Two angle frames are used throughout the package.

* Channel frame: a direction (theta, phi) enters the geometric channel
  matrices through ``steering_vector``, i.e. the array response
  ``q(sin(theta) cos(phi)) kron p(sin(theta) sin(phi)) / sqrt(M)`` with
  element ordering x-index outer, y-index inner.
* Surface frame: ``array_factor`` combines an incident and a reflected
  direction through ``Gamma_x = u_t + u_r`` and ``Gamma_y = v_t + v_r``.
  A reflected direction r in the surface frame leaves the surface along the
  channel-frame departure ``mirror(r)`` (azimuth shifted by pi).

Elevation is measured from broadside, so theta = 0 is perpendicular to the
array.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class AnglePair:
    """Elevation/azimuth pair in radians (elevation from broadside)."""

    elevation: float
    azimuth: float

    def __post_init__(self):
        el = float(self.elevation)
        az = float(self.azimuth)
        if not (np.isfinite(el) and np.isfinite(az)):
            raise ValueError(f"non-finite angle ({el}, {az})")
        if el < -1e-12 or el > np.pi / 2 + 1e-12:
            raise ValueError(f"elevation {el} outside [0, pi/2]")
        object.__setattr__(self, "elevation", min(max(el, 0.0), np.pi / 2))
        object.__setattr__(self, "azimuth", az % TWO_PI)

    @classmethod
    def from_degrees(cls, elevation: float, azimuth: float) -> "AnglePair":
        return cls(np.deg2rad(elevation), np.deg2rad(azimuth))

    @classmethod
    def from_uv(cls, u: float, v: float) -> "AnglePair":
        """Direction whose direction cosines are (u, v); |(u, v)| is clipped to 1."""
        r = min(float(np.hypot(u, v)), 1.0)
        az = float(np.arctan2(v, u)) if r > 0 else 0.0
        return cls(float(np.arcsin(r)), az)

    @property
    def uv(self) -> tuple[float, float]:
        s = np.sin(self.elevation)
        return float(s * np.cos(self.azimuth)), float(s * np.sin(self.azimuth))

    def degrees(self) -> tuple[float, float]:
        return float(np.rad2deg(self.elevation)), float(np.rad2deg(self.azimuth))


BROADSIDE = AnglePair(0.0, 0.0)


def mirror(angle: AnglePair) -> AnglePair:
    """Map between surface-frame reflected directions and channel-frame departures."""
    return AnglePair(angle.elevation, angle.azimuth + np.pi)


def angular_distance(a: AnglePair, b: AnglePair) -> float:
    """Great-circle angle between two directions of the upper half space."""
    def unit(p):
        s = np.sin(p.elevation)
        return np.array([s * np.cos(p.azimuth), s * np.sin(p.azimuth), np.cos(p.elevation)])

    c = float(np.clip(unit(a) @ unit(b), -1.0, 1.0))
    return float(np.arccos(c))


@dataclass(frozen=True)
class UpaGeometry:
    """Uniform planar array with ``n_x`` by ``n_y`` elements at pitch ``spacing``."""

    n_x: int
    n_y: int
    spacing: float = 0.5
    wavelength: float = 1.0

    def __post_init__(self):
        if self.n_x < 1 or self.n_y < 1:
            raise ValueError("element counts must be >= 1")
        if not (self.spacing > 0 and self.wavelength > 0):
            raise ValueError("spacing and wavelength must be positive")

    @classmethod
    def square(cls, n: int, spacing: float = 0.5, wavelength: float = 1.0) -> "UpaGeometry":
        return cls(n, n, spacing, wavelength)

    @property
    def size(self) -> int:
        return self.n_x * self.n_y

    @property
    def phase_scale(self) -> float:
        """Inter-element phase per unit direction cosine, 2 pi d / lambda."""
        return TWO_PI * self.spacing / self.wavelength

    def centered_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Symmetric element offsets in units of the pitch, (N-1)/2 about the center."""
        return (np.arange(self.n_x) - (self.n_x - 1) / 2.0,
                np.arange(self.n_y) - (self.n_y - 1) / 2.0)


def _axis_response(n: int, scale: float, s: float) -> np.ndarray:
    return np.exp(1j * scale * np.arange(n) * s)


def steering_vector(geom: UpaGeometry, angle: AnglePair) -> np.ndarray:
    """Unit-norm UPA response ``q(u) kron p(v) / sqrt(M)``."""
    u, v = angle.uv
    q = _axis_response(geom.n_x, geom.phase_scale, u)
    p = _axis_response(geom.n_y, geom.phase_scale, v)
    return np.kron(q, p) / np.sqrt(geom.size)


def steering_matrix(geom: UpaGeometry, angles: Sequence[AnglePair]) -> np.ndarray:
    """Columns are ``steering_vector`` for each angle."""
    return np.stack([steering_vector(geom, a) for a in angles], axis=1)


def steering_gradient(geom: UpaGeometry, angle: AnglePair) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Steering vector and its derivatives with respect to elevation and azimuth."""
    a = steering_vector(geom, angle)
    th, ph = angle.elevation, angle.azimuth
    ix = np.repeat(np.arange(geom.n_x), geom.n_y).astype(float)
    iy = np.tile(np.arange(geom.n_y), geom.n_x).astype(float)
    k = geom.phase_scale
    du_dth, dv_dth = np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph)
    du_dph, dv_dph = -np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph)
    da_dth = a * 1j * k * (ix * du_dth + iy * dv_dth)
    da_dph = a * 1j * k * (ix * du_dph + iy * dv_dph)
    return a, da_dth, da_dph


def _gamma(incident: AnglePair, reflected_uv: tuple[np.ndarray, np.ndarray]):
    ut, vt = incident.uv
    return ut + reflected_uv[0], vt + reflected_uv[1]


def array_factor(weights, geom: UpaGeometry, incident: AnglePair, reflected: AnglePair) -> complex:
    """Coherent sum of element weights times the incident/reflected geometric phase.

    ``weights`` is ordered x-index outer, y-index inner and may be given flat
    (length M) or as an ``n_x`` by ``n_y`` grid.
    """
    w = np.asarray(weights, dtype=complex)
    if w.size != geom.size:
        raise ValueError(f"weights have {w.size} entries, geometry has {geom.size}")
    w = w.reshape(geom.n_x, geom.n_y)
    mx, ny = geom.centered_offsets()
    gx, gy = _gamma(incident, reflected.uv)
    k = geom.phase_scale
    ex = np.exp(1j * k * mx * gx)
    ey = np.exp(1j * k * ny * gy)
    return complex(ex @ w @ ey)


def power_pattern(weights, geom: UpaGeometry, incident: AnglePair,
                  grid: Sequence[AnglePair] | tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """|array_factor|^2 over a set of reflected directions.

    ``grid`` is either a sequence of ``AnglePair`` or a pair of equally shaped
    arrays ``(elevation, azimuth)`` in radians; the result has the matching
    shape.
    """
    w = np.asarray(weights, dtype=complex)
    if w.size != geom.size:
        raise ValueError(f"weights have {w.size} entries, geometry has {geom.size}")
    if isinstance(grid, tuple) and len(grid) == 2 and not isinstance(grid[0], AnglePair):
        el = np.asarray(grid[0], dtype=float)
        az = np.asarray(grid[1], dtype=float)
        shape = el.shape
        el, az = el.ravel(), az.ravel()
    else:
        grid = list(grid)
        if not grid:
            raise ValueError("empty grid")
        el = np.array([g.elevation for g in grid])
        az = np.array([g.azimuth for g in grid])
        shape = el.shape
    if el.size == 0:
        raise ValueError("empty grid")
    gx, gy = _gamma(incident, (np.sin(el) * np.cos(az), np.sin(el) * np.sin(az)))
    mx, ny = geom.centered_offsets()
    k = geom.phase_scale
    ex = np.exp(1j * k * np.outer(gx, mx))
    ey = np.exp(1j * k * np.outer(gy, ny))
    # separable sum: sum_mn ex[g,m] w[m,n] ey[g,n]
    af = np.einsum("gm,mn,gn->g", ex, w.reshape(geom.n_x, geom.n_y), ey, optimize=True)
    return (np.abs(af) ** 2).reshape(shape)


def direction_basis(geom: UpaGeometry, elevation: np.ndarray, azimuth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Conjugated per-axis responses over a grid, reusable across ``radiated_power`` calls."""
    el = np.asarray(elevation, dtype=float).ravel()
    az = np.asarray(azimuth, dtype=float).ravel()
    k = geom.phase_scale
    qx = np.exp(-1j * k * np.outer(np.sin(el) * np.cos(az), np.arange(geom.n_x)))
    py = np.exp(-1j * k * np.outer(np.sin(el) * np.sin(az), np.arange(geom.n_y)))
    return qx, py


def radiated_power(geom: UpaGeometry, x: np.ndarray, elevation: np.ndarray, azimuth: np.ndarray,
                   basis: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """``|a(psi)^H x|^2`` for the element excitation ``x`` over a grid of channel-frame directions."""
    x = np.asarray(x, dtype=complex).ravel()
    if x.size != geom.size:
        raise ValueError(f"excitation has {x.size} entries, geometry has {geom.size}")
    shape = np.shape(elevation)
    qx, py = basis if basis is not None else direction_basis(geom, elevation, azimuth)
    val = np.einsum("gm,mn,gn->g", qx, x.reshape(geom.n_x, geom.n_y), py, optimize=True) / np.sqrt(geom.size)
    return (np.abs(val) ** 2).reshape(shape)


def degree_grid(el_points: int = 181, az_points: int = 361) -> tuple[np.ndarray, np.ndarray]:
    """Meshgrid over elevation [0, 90] deg and azimuth [0, 360] deg, in radians."""
    el = np.deg2rad(np.linspace(0.0, 90.0, el_points))
    az = np.deg2rad(np.linspace(0.0, 360.0, az_points))
    return np.meshgrid(el, az, indexing="ij")
