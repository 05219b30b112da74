"""Figures written next to the CSV outputs (non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_nmse_sweep(points, path: str | Path) -> Path:
    """Mean NMSE against SNR, one line per (method, M_RIS)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.8, 3.4))
        keys = sorted({(p.method, p.m_ris, p.u_p) for p in points}, key=lambda k: (k[0] != "proposed", k[1]))
        for method, m, u in keys:
            sel = sorted((p for p in points if (p.method, p.m_ris, p.u_p) == (method, m, u)),
                         key=lambda p: p.snr_db)
            style = "-o" if method == "proposed" else "--s"
            ax.semilogy([p.snr_db for p in sel], [p.mean_nmse for p in sel], style, ms=4,
                        label=f"{method}, M_RIS={m}, U_p={u}")
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("mean NMSE")
        ax.legend(loc="best")
        return _save(fig, Path(path))


def plot_beam_patterns(result, path: str | Path, floor_db: float = -40.0) -> Path:
    """Four panels of reflected power (dB, relative to the ideal peak) over elevation and azimuth."""
    ref = float(result.grids["ideal"].max())
    el = np.rad2deg(result.elevation[:, 0])
    az = np.rad2deg(result.azimuth[0])
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 2, figsize=(7.2, 5.4), sharex=True, sharey=True)
        for ax, case in zip(axes.ravel(), ("ideal", "sparse", "rich", "compensated")):
            db = 10 * np.log10(np.maximum(result.grids[case] / ref, 10 ** (floor_db / 10)))
            im = ax.pcolormesh(az, el, db, shading="auto", vmin=floor_db, vmax=0, cmap="viridis")
            d_el, d_az = np.rad2deg(result.desired.elevation), np.rad2deg(result.desired.azimuth)
            ax.plot(d_az, d_el, "w+", ms=8)
            ax.set_title(f"{case} G")
            ax.grid(False)
        for ax in axes[-1]:
            ax.set_xlabel("azimuth (deg)")
        for ax in axes[:, 0]:
            ax.set_ylabel("elevation (deg)")
        fig.colorbar(im, ax=axes, shrink=0.8, label="power (dB)")
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def plot_tracking(outcomes, path: str | Path) -> Path:
    """Mean NMSE over time for the tracked estimate and the baseline, with re-estimation instants."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.6, 3.4))
        prop = np.array([[s.nmse for s in o.trace.steps] for o in outcomes])
        t = np.array([s.time for s in outcomes[0].trace.steps])
        ax.semilogy(t, np.mean(prop, axis=0), label="proposed (tracked)")
        base = [o.baseline_nmse for o in outcomes if o.baseline_nmse.size]
        if base:
            ax.semilogy(t, np.mean(base, axis=0), "--", label="baseline")
        for ev in outcomes[0].trace.events:
            ax.axvline(ev, color="0.6", lw=0.6, ls=":")
        ax.set_xlabel("time step")
        ax.set_ylabel("mean NMSE")
        ax.legend(loc="best")
        return _save(fig, Path(path))


def plot_pipeline(rows, path: str | Path) -> Path:
    """NMSE distribution per SNR for the full pipeline."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.8, 3.4))
        snrs = sorted({r.snr_db for r in rows})
        data = [[max(r.nmse, 1e-16) for r in rows if r.snr_db == s] for s in snrs]
        ax.boxplot([np.log10(d) for d in data], tick_labels=[f"{s:g}" for s in snrs])
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("log10 NMSE")
        return _save(fig, Path(path))
