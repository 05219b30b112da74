"""Turn experiment results into CSV tables, figures and auxiliary exports."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from risframe.arrays import AnglePair, angular_distance
from risframe.beamsearch import write_codebook
from risframe.channel import child_rng
from risframe.harness import io, plots
from risframe.harness.config import ScenarioConfig, dump_config
from risframe.harness.experiments import (NOISE, PATTERN_CASES, PROBES, PatternResult, PipelineRow, SweepPoint,
                                          TrackingOutcome, TrialResult, pilot_count, build_system, draw_channels,
                                          run_proposed)
from risframe.ris_control import RisConfiguration, export_phase_grid


@dataclass
class TrialRow:
    scenario: str
    trial: int
    seed: int
    snr_db: float
    nmse: float
    events: int


@dataclass
class PeakRow:
    trial: int
    case: str
    peak_elevation_deg: float
    peak_azimuth_deg: float
    peak_db: float
    desired_db: float
    displacement_deg: float


@dataclass
class GridRow:
    elevation_deg: float
    azimuth_deg: float
    ideal_db: float
    sparse_db: float
    rich_db: float
    compensated_db: float


@dataclass
class TraceRow:
    trial: int
    time: int
    method: str
    nmse: float
    reestimated: bool
    nis: float


@dataclass
class TrackSummaryRow:
    trial: int
    initial_nmse: float
    final_nmse: float
    baseline_final_nmse: float
    events: int


def trial_rows(results: list[TrialResult]) -> list[TrialRow]:
    return [TrialRow(r.scenario, r.trial, r.seed, snr, float(v), r.events)
            for r in results for snr, v in sorted(r.nmse.items())]


def peak_rows(result: PatternResult) -> list[PeakRow]:
    rows = []
    for t in result.trials:
        ref = t.peak_power["ideal"]
        for case in PATTERN_CASES:
            el, az = t.peaks[case]
            rows.append(PeakRow(t.trial, case, math.degrees(el), math.degrees(az),
                                10 * math.log10(t.peak_power[case] / ref),
                                10 * math.log10(max(t.ue_power[case], 1e-300) / ref),
                                math.degrees(angular_distance(AnglePair(el, az), result.desired))))
    return rows


def grid_rows(result: PatternResult, floor_db: float = -300.0) -> list[GridRow]:
    ref = float(result.grids["ideal"].max())
    db = {c: 10 * np.log10(np.maximum(result.grids[c] / ref, 10 ** (floor_db / 10))) for c in PATTERN_CASES}
    el = np.rad2deg(result.elevation).ravel()
    az = np.rad2deg(result.azimuth).ravel()
    cols = [db[c].ravel() for c in PATTERN_CASES]
    return [GridRow(float(e), float(a), *(float(round(c[i], 6)) for c in cols))
            for i, (e, a) in enumerate(zip(el, az))]


def trace_rows(outcomes: list[TrackingOutcome]) -> list[TraceRow]:
    rows = []
    for k, o in enumerate(outcomes):
        for s in o.trace.steps:
            rows.append(TraceRow(k, s.time, "proposed", float(s.nmse), bool(s.reestimated), float(s.nis)))
        for i, v in enumerate(o.baseline_nmse):
            rows.append(TraceRow(k, o.trace.steps[i].time, "baseline", float(v), False, float("nan")))
    return rows


def track_summary_rows(outcomes: list[TrackingOutcome]) -> list[TrackSummaryRow]:
    return [TrackSummaryRow(k, float(o.initial_nmse), float(o.trace.steps[-1].nmse),
                            float(o.baseline_nmse[-1]) if o.baseline_nmse.size else float("nan"),
                            len(o.trace.events)) for k, o in enumerate(outcomes)]


class Reporter:
    """Writes every output of one run into ``out``."""

    def __init__(self, out: str | Path, cfg: ScenarioConfig, with_plots: bool = True):
        self.out = Path(out)
        self.cfg = cfg
        self.with_plots = with_plots
        self.written: list[Path] = []

    def _table(self, name: str, kind: str, records, record_type) -> Path:
        p = io.write_text(self.out / name, io.emit_records(kind, records, record_type))
        self.written.append(p)
        return p

    def _figure(self, fn, data, name: str) -> None:
        if self.with_plots:
            self.written.append(fn(data, self.out / name))

    def sweep(self, results: list[TrialResult], points: list[SweepPoint]) -> None:
        self._table("nmse_trials.csv", "nmse-trials", trial_rows(results), TrialRow)
        self._table("nmse_summary.csv", "nmse-summary", points, SweepPoint)
        self._figure(plots.plot_nmse_sweep, points, "nmse_vs_snr.png")

    def beam_pattern(self, result: PatternResult) -> None:
        self._table("beam_pattern_peaks.csv", "beam-peaks", peak_rows(result), PeakRow)
        self._table("beam_pattern_grid.csv", "beam-grid", grid_rows(result), GridRow)
        self._figure(plots.plot_beam_patterns, result, "beam_pattern.png")

    def tracking(self, outcomes: list[TrackingOutcome]) -> None:
        self._table("tracking_trace.csv", "tracking-trace", trace_rows(outcomes), TraceRow)
        self._table("tracking_summary.csv", "tracking-summary", track_summary_rows(outcomes), TrackSummaryRow)
        if outcomes:
            self._figure(plots.plot_tracking, outcomes, "tracking_nmse.png")

    def pipeline(self, rows: list[PipelineRow]) -> None:
        self._table("pipeline.csv", "pipeline", rows, PipelineRow)
        if rows:
            self._figure(plots.plot_pipeline, rows, "pipeline_nmse.png")
        self.artifacts()

    def artifacts(self, trial: int = 0) -> None:
        """Channel records, the compensated phase profile and the codebooks of one trial."""
        cfg = self.cfg
        system = build_system(cfg, cfg.m_ris)
        g, h = draw_channels(cfg, system, trial)
        art = self.out / "artifacts"
        self.written.append(io.write_text(art / "channel_g.txt", g.to_record()))
        self.written.append(io.write_text(art / "channel_h.txt", h.to_record()))
        snr = cfg.snr_db[-1]
        o = run_proposed(cfg, system, g, h, snr, pilot_count(cfg),
                         child_rng(cfg.seed, trial, NOISE, len(cfg.snr_db) - 1), child_rng(cfg.seed, trial, PROBES))
        # the compensated matrix is generally not diagonal; export the phases of its diagonal
        diag = RisConfiguration(system.ris, "g-compensated",
                                diagonal=np.exp(1j * np.angle(np.diag(o.theta.theta))))
        export_phase_grid(diag, art / "theta_phases.txt")
        self.written.append(art / "theta_phases.txt")
        for book in (*system.ris_books, *system.ue_books):
            side = "ris" if book.n_elements == system.ris.n_x else "ue"
            p = art / f"codebook_{side}_{book.axis}.csv"
            write_codebook(book, p)
            self.written.append(p)

    def run_info(self, mode: str, wall_time: float, extra: dict | None = None) -> Path:
        info = {"mode": mode, "seed": self.cfg.seed, "trials": self.cfg.trials, "wall_time_s": wall_time,
                "outputs": [str(p.relative_to(self.out)) for p in self.written]}
        info.update(extra or {})
        self.written.append(io.write_text(self.out / "config_used.ini", dump_config(self.cfg)))
        path = io.write_text(self.out / "run_info.json", json.dumps(info, indent=2, sort_keys=True) + "\n")
        self.written.append(path)
        return path
