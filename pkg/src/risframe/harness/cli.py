"""Command-line entry point: ``risframe <subcommand> [options]``.

Exit codes: 0 success, 2 bad arguments or configuration, 3 output failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from risframe.harness import experiments as ex
from risframe.harness.config import ConfigError, ScenarioConfig, load_config
from risframe.harness.io import OutputError
from risframe.harness.report import Reporter

EXIT_OK, EXIT_CONFIG, EXIT_OUTPUT = 0, 2, 3

COMMANDS = {
    "nmse-sweep": "nmse_sweep",
    "beam-pattern": "beam_pattern",
    "tracking": "tracking",
    "full-pipeline": "full_pipeline",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="risframe", description="RIS-aided mmWave channel estimation experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario file with a [scenario] section")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (default: results/<subcommand>)")
    common.add_argument("--trials", type=int, help="Monte Carlo trials, or random draws for beam-pattern")
    common.add_argument("--workers", type=int, help="worker processes (overrides the config)")
    common.add_argument("--no-plots", action="store_true", help="skip the figures")
    common.add_argument("--verbose", "-v", action="store_true", help="log per-iteration estimation traces")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
    return parser


def resolve_config(args: argparse.Namespace) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    changes = {"mode": COMMANDS[args.command]}
    for key in ("seed", "trials", "workers"):
        value = getattr(args, key)
        if value is not None:
            changes[key] = value
    if args.trials is not None and changes["mode"] == "beam_pattern":
        changes["pattern_trials"] = args.trials
    return cfg.replace(**changes)


def _summary_sweep(points) -> str:
    lines = ["method    M_RIS  U_p  SNR(dB)  mean NMSE"]
    for p in points:
        lines.append(f"{p.method:<9} {p.m_ris:>5} {p.u_p:>4} {p.snr_db:>8g}  {p.mean_nmse:.4g}")
    return "\n".join(lines)


def run(cfg: ScenarioConfig, out: Path, plots: bool = True) -> Reporter:
    rep = Reporter(out, cfg, plots)
    t0 = time.perf_counter()
    extra: dict = {}
    if cfg.mode == "nmse_sweep":
        results, points = ex.run_nmse_sweep(cfg)
        rep.sweep(results, points)
        print(_summary_sweep(points))
    elif cfg.mode == "beam_pattern":
        result = ex.run_beam_pattern(cfg)
        rep.beam_pattern(result)
        print(f"{len(result.trials)} draws, 3 dB beamwidth {np.rad2deg(result.beamwidth):.2f} deg")
    elif cfg.mode == "tracking":
        outcomes = ex.run_tracking_scenario(cfg)
        rep.tracking(outcomes)
        init = np.mean([o.initial_nmse for o in outcomes])
        final = np.mean([o.trace.steps[-1].nmse for o in outcomes])
        base = np.mean([o.baseline_nmse[-1] for o in outcomes])
        extra = {"events": [len(o.trace.events) for o in outcomes]}
        print(f"initial NMSE {init:.3g}, final tracked NMSE {final:.3g}, baseline final NMSE {base:.3g}")
    else:
        rows = ex.run_full_pipeline(cfg)
        rep.pipeline(rows)
        for snr in cfg.snr_db:
            vals = [r.nmse for r in rows if r.snr_db == float(snr)]
            print(f"SNR {snr:g} dB: mean NMSE {np.mean(vals):.4g} over {len(vals)} trials")
    rep.run_info(cfg.mode, time.perf_counter() - t0, extra)
    return rep


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"risframe: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out if args.out is not None else Path("results") / args.command
    try:
        rep = run(cfg, out, plots=not args.no_plots)
    except OutputError as exc:
        print(f"risframe: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    print(f"wrote {len(rep.written)} files to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
