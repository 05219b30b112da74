"""Hierarchical two-stage beam training over discrete-phase codebooks.

Codebooks act on one array axis. A planar codeword is ``w_x kron w_y``
(x-index outer), with the elevation codebook on x and the azimuth codebook
on y. Beam directions are expressed as spatial frequencies ``s`` (direction
cosines); a codeword ``w`` radiates toward ``s`` with gain
``|sum_n w_n exp(-j 2 pi (d / lambda) n s)|``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from risframe.arrays import AnglePair

AXES = ("azimuth", "elevation")
CENTER_GRID_STEP_DEG = 0.1


@dataclass(frozen=True)
class TreeNode:
    """Contiguous beam-index range ``[lo, hi)`` with the beam probing it.

    ``kappa`` is the fractional index the node beam aims at and ``aperture``
    the number of centered active elements.
    """

    lo: int
    hi: int
    depth: int
    kappa: float = 0.0
    aperture: int = 1

    @property
    def is_leaf(self) -> bool:
        return self.hi - self.lo == 1


@dataclass(frozen=True)
class Codebook:
    """Primary codebook: column k of ``entries`` is beam k over ``n_elements`` elements."""

    entries: np.ndarray
    axis: str
    n_phases: int
    n_beams: int
    spacing: float = 0.5  # element pitch in wavelengths

    @property
    def n_elements(self) -> int:
        return self.entries.shape[0]

    @property
    def total_states(self) -> int:
        return self.n_beams

    @property
    def layers(self) -> int:
        return max(1, math.ceil(math.log2(self.n_beams)))

    @property
    def denominator(self) -> int:
        return self.n_beams if self.axis == "azimuth" else 2 * self.n_beams - 2

    @property
    def beam_spacing(self) -> float:
        """Spatial-frequency step between adjacent primary beams."""
        return 1.0 / (self.spacing * self.denominator)

    def codeword(self, k: int) -> np.ndarray:
        return self.entries[:, k]

    def radiation(self, weights: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Complex far-field response of ``weights`` at spatial frequencies ``s``."""
        n = np.arange(len(weights))
        return np.exp(-2j * np.pi * self.spacing * np.outer(s, n)) @ weights

    @cached_property
    def beam_centers(self) -> np.ndarray:
        """Spatial frequency of each beam's pattern maximum on a 0.1 degree grid."""
        grid = np.sin(np.deg2rad(np.arange(-90.0, 90.0 + 1e-9, CENTER_GRID_STEP_DEG)))
        power = np.abs(self.radiation_matrix(grid)) ** 2
        return grid[np.argmax(power, axis=0)]

    def radiation_matrix(self, s: np.ndarray) -> np.ndarray:
        n = np.arange(self.n_elements)
        return np.exp(-2j * np.pi * self.spacing * np.outer(s, n)) @ self.entries

    # tree structure

    @property
    def root(self) -> TreeNode:
        return TreeNode(0, self.n_beams, 0, (self.n_beams - 1) / 2.0, 1)

    def children(self, node: TreeNode) -> tuple[TreeNode, ...]:
        """Two halves of a node's index range; a leaf above the last layer is carried down unchanged."""
        if node.is_leaf:
            if node.depth < self.layers:
                return (TreeNode(node.lo, node.hi, node.depth + 1, node.kappa, node.aperture),)
            return ()
        width = node.hi - node.lo
        mid = node.lo + math.ceil(width / 2)
        # siblings aim symmetrically about their shared boundary, with an
        # aperture whose main lobe spans the sibling separation, so that the
        # comparison flips at the boundary
        edge, half = mid - 0.5, width / 4.0
        aperture = int(min(self.n_elements, max(1, round(2 * self.denominator / width))))
        return (TreeNode(node.lo, mid, node.depth + 1, edge - half, aperture),
                TreeNode(mid, node.hi, node.depth + 1, edge + half, aperture))

    def node_codeword(self, node: TreeNode, full: bool = False) -> np.ndarray:
        """Beam of a tree node: a centered active sub-array steered to the node's sector.

        Reduced-aperture beams use the unquantized limit of the primary phase
        rule at the node's fractional index; a leaf at full aperture (or with
        ``full``) is its primary codeword.
        """
        n_active = node.aperture
        if node.is_leaf and (full or n_active >= self.n_elements):
            return self.codeword(node.lo)
        n = np.arange(n_active)
        w = np.zeros(self.n_elements, dtype=complex)
        start = (self.n_elements - n_active) // 2
        w[start:start + n_active] = np.exp(-2j * np.pi * n * node.kappa / self.denominator)
        return w

    def rotate(self, weights: np.ndarray, offset: float) -> np.ndarray:
        """Shift a codeword's pattern by ``offset`` in spatial frequency."""
        n = np.arange(len(weights))
        return weights * np.exp(2j * np.pi * self.spacing * n * offset)

    def table_rows(self) -> list[tuple[int, int, int]]:
        levels = np.rint(np.mod(-np.angle(self.entries), 2 * np.pi) / (2 * np.pi / self.n_phases)).astype(int)
        levels %= self.n_phases
        return [(k, n, int(levels[n, k])) for k in range(self.n_beams) for n in range(self.n_elements)]


def primary_codebook(axis: str, n_elements: int, n_phases: int, n_beams: int, spacing: float = 0.5) -> Codebook:
    """Discrete-phase primary codebook ``exp(-j 2 pi / tau * floor(n k tau / D))``.

    ``D`` is ``K`` for azimuth and ``2K - 2`` for elevation.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    if n_phases < 2 or n_beams < 2 or n_elements < 1:
        raise ValueError("need n_phases >= 2, n_beams >= 2, n_elements >= 1")
    den = n_beams if axis == "azimuth" else 2 * n_beams - 2
    n = np.arange(n_elements)[:, None]
    k = np.arange(n_beams)[None, :]
    levels = (n * k * n_phases) // den
    entries = np.exp(-2j * np.pi / n_phases * levels)
    return Codebook(entries, axis, n_phases, n_beams, spacing)


def write_codebook(book: Codebook, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: risframe-codebook/v1 axis={book.axis} tau={book.n_phases} K={book.n_beams}\n")
        wr = csv.writer(fh)
        wr.writerow(["beam", "element", "phase_level"])
        wr.writerows(book.table_rows())


Measure = Callable[[np.ndarray, np.ndarray], float]


@dataclass
class SearchResult:
    ris_index: tuple[int, int]
    ue_index: tuple[int, int]
    ris_offset: tuple[float, float]
    ue_offset: tuple[float, float]
    ris_weights: np.ndarray
    ue_weights: np.ndarray
    estimated_aoa: AnglePair
    estimated_aod: AnglePair
    stages_used: int
    measured_snr_trace: list[float] = field(default_factory=list)
    tree_measurements: int = 0
    refine_measurements: tuple[int, int] = (0, 0)    # (RIS side, UE side)
    axis_measurements: tuple[int, int] = (0, 0)      # tree measurements per axis
    refine_axis_measurements: tuple[int, int] = (0, 0)  # RIS-side refinement per axis

    @property
    def n_measurements(self) -> int:
        return self.tree_measurements + sum(self.refine_measurements)

    @property
    def final_power(self) -> float:
        return self.measured_snr_trace[-1]


def _checked(measure: Measure, trace: list[float]) -> Measure:
    def wrapped(wr, wu):
        p = float(measure(wr, wu))
        if not np.isfinite(p):
            raise ValueError("measurement returned a non-finite power")
        trace.append(p)
        return p
    return wrapped


def secondary_refine(score: Callable[[np.ndarray], float], book: Codebook, codeword: np.ndarray,
                     rotations: int, levels: int = 1) -> tuple[np.ndarray, float, list[float]]:
    """Pick the best of ``rotations`` phase-rotated copies of ``codeword``.

    The rotations are progressive phase offsets spanning one primary-beam
    spacing and always include the unrotated beam. With ``levels > 1`` the
    search zooms: each further level spans plus/minus one step of the
    previous level around its winner. Returns (codeword, total offset, measured powers).
    """
    if rotations < 1:
        raise ValueError("rotations must be >= 1")
    if rotations == 1:
        return codeword, 0.0, [score(codeword)]
    powers: list[float] = []
    center, step = 0.0, book.beam_spacing / rotations
    best_w = codeword
    for _ in range(levels):
        offsets = center + step * (np.arange(rotations) - rotations // 2)
        best_p = -np.inf
        for off in offsets:
            w = book.rotate(codeword, off)
            p = score(w)
            powers.append(p)
            if p > best_p:
                best_p, best_off, best_w = p, off, w
        center, step = best_off, 2.0 * step / rotations
    return best_w, float(center), powers


def _uv_to_angle(su: float, sv: float) -> AnglePair:
    return AnglePair.from_uv(su, sv)


def angles_from_codeword(result: SearchResult, books: Sequence[Codebook], *,
                         closed_form: bool = False, wavelength: float = 1.0) -> tuple[AnglePair, AnglePair]:
    """(AoA at the UE, AoD at the RIS) for the winning RIS codeword pair.

    The default maps each winning beam to the maximum of its pattern
    (precomputed table) plus the secondary-stage rotation; the two sides
    share the direction because the UE array is taken parallel to the RIS.
    ``closed_form`` evaluates the closed-form arcsine map directly,
    kept for comparison only.
    """
    bx, by = books
    kx, ky = result.ris_index
    if closed_form:
        tau = bx.n_phases
        a = -wavelength / tau * math.floor(ky * tau / by.n_beams)
        b = -wavelength / tau * math.floor(kx * tau / (2 * bx.n_beams - 2))
        el = float(np.arcsin(np.clip(a, -1, 1)))
        az = float(np.arcsin(np.clip(b, -1, 1)))
        pair = AnglePair(min(abs(el), np.pi / 2), az)
        return pair, pair
    su = bx.beam_centers[kx] + result.ris_offset[0]
    sv = by.beam_centers[ky] + result.ris_offset[1]
    pair = _uv_to_angle(su, sv)
    return pair, pair


def hierarchical_search(measure: Measure, ris_books: Sequence[Codebook], ue_books: Sequence[Codebook], *,
                        rotations: int = 1, levels: int = 1, refine_ue: bool = True) -> SearchResult:
    """Two-way tree search over (RIS, UE) codeword pairs, then secondary refinement.

    ``measure(ris_weights, ue_weights)`` returns the received power for a
    planar RIS codeword (length Mx*My) and a planar UE combiner. At each
    layer and axis the up-to-2x2 child pairs of the current winners are
    measured and the strongest kept (ties go to the lowest index).
    """
    trace: list[float] = []
    meas = _checked(measure, trace)
    r_nodes = [b.root for b in ris_books]
    u_nodes = [b.root for b in ue_books]
    r_w = [b.node_codeword(n) for b, n in zip(ris_books, r_nodes)]
    u_w = [b.node_codeword(n) for b, n in zip(ue_books, u_nodes)]

    def planar(ws):
        return np.kron(ws[0], ws[1])

    stages = 0
    axis_counts = [0, 0]
    for _ in range(max(b.layers for b in (*ris_books, *ue_books)) + 1):
        moved = False
        for ax in (0, 1):
            cr = ris_books[ax].children(r_nodes[ax]) or (r_nodes[ax],)
            cu = ue_books[ax].children(u_nodes[ax]) or (u_nodes[ax],)
            if len(cr) == 1 and len(cu) == 1 and cr[0] == r_nodes[ax] and cu[0] == u_nodes[ax]:
                continue
            if len(cr) == 1 and len(cu) == 1:
                # carried-down leaves: no decision to take, nothing to measure
                r_nodes[ax], u_nodes[ax] = cr[0], cu[0]
                r_w[ax], u_w[ax] = ris_books[ax].node_codeword(cr[0]), ue_books[ax].node_codeword(cu[0])
                continue
            moved = True
            axis_counts[ax] += len(cr) * len(cu)
            best = (-np.inf, None, None)
            for nr in cr:
                wr_ax = ris_books[ax].node_codeword(nr)
                for nu in cu:
                    wu_ax = ue_books[ax].node_codeword(nu)
                    wr = list(r_w); wr[ax] = wr_ax
                    wu = list(u_w); wu[ax] = wu_ax
                    p = meas(planar(wr), planar(wu))
                    if p > best[0]:
                        best = (p, (nr, wr_ax), (nu, wu_ax))
            (r_nodes[ax], r_w[ax]), (u_nodes[ax], u_w[ax]) = best[1], best[2]
        if not moved:
            break
        stages += 1
    r_w = [b.node_codeword(n, full=True) for b, n in zip(ris_books, r_nodes)]
    u_w = [b.node_codeword(n, full=True) for b, n in zip(ue_books, u_nodes)]
    n_tree = len(trace)

    r_off = [0.0, 0.0]
    u_off = [0.0, 0.0]
    counts = [0, 0]
    ris_axis = [0, 0]
    for side, books, ws, offs in ((0, ris_books, r_w, r_off), (1, ue_books, u_w, u_off)):
        if side == 1 and not refine_ue:
            continue
        for ax in (0, 1):
            def score(w, ax=ax, side=side):
                if side == 0:
                    wr = list(r_w); wr[ax] = w
                    return meas(planar(wr), planar(u_w))
                wu = list(u_w); wu[ax] = w
                return meas(planar(r_w), planar(wu))
            before = len(trace)
            ws[ax], offs[ax], _ = secondary_refine(score, books[ax], ws[ax], rotations, levels)
            counts[side] += len(trace) - before
            if side == 0:
                ris_axis[ax] = len(trace) - before

    result = SearchResult(
        ris_index=(r_nodes[0].lo, r_nodes[1].lo), ue_index=(u_nodes[0].lo, u_nodes[1].lo),
        ris_offset=(r_off[0], r_off[1]), ue_offset=(u_off[0], u_off[1]),
        ris_weights=planar(r_w), ue_weights=planar(u_w),
        estimated_aoa=AnglePair(0.0, 0.0), estimated_aod=AnglePair(0.0, 0.0),
        stages_used=stages, measured_snr_trace=trace, tree_measurements=n_tree,
        refine_measurements=(counts[0], counts[1]), axis_measurements=(axis_counts[0], axis_counts[1]),
        refine_axis_measurements=(ris_axis[0], ris_axis[1]))
    result.estimated_aoa, result.estimated_aod = angles_from_codeword(result, ris_books)
    return result


def exhaustive_search(measure: Measure, ris_books: Sequence[Codebook], ue_books: Sequence[Codebook]):
    """Brute force over every planar (RIS, UE) leaf-codeword pair; returns (power, ris_kxky, ue_kxky)."""
    best = (-np.inf, None, None)
    for kx in range(ris_books[0].n_beams):
        for ky in range(ris_books[1].n_beams):
            wr = np.kron(ris_books[0].codeword(kx), ris_books[1].codeword(ky))
            for jx in range(ue_books[0].n_beams):
                for jy in range(ue_books[1].n_beams):
                    wu = np.kron(ue_books[0].codeword(jx), ue_books[1].codeword(jy))
                    p = float(measure(wr, wu))
                    if p > best[0]:
                        best = (p, (kx, ky), (jx, jy))
    return best
