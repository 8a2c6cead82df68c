"""Command-line interface.

Subcommands::

    twinbeam simulate   model -> trace file
    twinbeam select     trace + band -> report
    twinbeam sweep      bandwidth / gemellity / multiband / histograms scenarios
    twinbeam calibrate  shot-noise reference
    twinbeam analyze    external trace -> full report

Exit status is 0 on success, 1 on any analysis or I/O error, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ScenarioConfig, load_config, validate, with_overrides
from .errors import InsufficientSelectionError, TwinBeamError
from .scenarios import (
    DEFAULT_SWEEP,
    NoiseReport,
    ShotReference,
    acquire,
    analyze_trace,
    calibration_trace,
    point_record,
    run_scenario,
    sample_covariance,
    unconditioned_stats,
)
from .selection import SelectionBand, select
from .stats import variance
from .traceio import load_trace, save_trace

log = logging.getLogger("twinbeam")

SWEEP_SCENARIOS = ("bandwidth_sweep", "gemellity_sweep", "multiband", "histograms")


def _common(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", type=Path, help="scenario config (JSON)")
    p.add_argument("--seed", type=int, help="override the trace seed")
    p.add_argument("--out-dir", type=Path, help="directory for report and plot data")
    p.add_argument("--width-convention", choices=("half", "full"), help="how band widths are quoted")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="plot-data table format")


def _shot_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--shot-variance", type=float, help="shot-noise variance of the recording (default 1)")
    g.add_argument("--shot-trace", type=Path, help="calibration trace file; its signal variance is the shot reference")
    p.add_argument("--dark-variance", type=float, default=0.0, help="dark floor to subtract (default: none)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twinbeam", description=__doc__.splitlines()[1].strip() or None)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", help="generate a trace file from the source model")
    _common(p)
    p.add_argument("--n", type=int, help="number of samples")
    p.add_argument("--overwrite", action="store_true", help="replace an existing trace file")

    p = sub.add_parser("select", help="post-select a trace on one idler band")
    _common(p)
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--center", type=float, default=None, help="band center in shot-noise units")
    p.add_argument("--width", type=float, default=None, help="band width in shot-noise units")
    _shot_args(p)

    p = sub.add_parser("sweep", help="run a figure scenario")
    _common(p)
    p.add_argument("--scenario", choices=SWEEP_SCENARIOS, help="override the config's scenario")

    p = sub.add_parser("calibrate", help="generate and characterize a shot-noise reference")
    _common(p)
    p.add_argument("--n", type=int, help="number of calibration samples")
    p.add_argument("--overwrite", action="store_true")

    p = sub.add_parser("analyze", help="full report for a recorded trace")
    _common(p)
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--center", type=float, default=None)
    p.add_argument("--width", type=float, default=None)
    _shot_args(p)
    return parser


def _config(args, scenario: str = "bandwidth_sweep") -> ScenarioConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = validate(ScenarioConfig(scenario=scenario, half_widths=DEFAULT_SWEEP))
    return with_overrides(cfg, seed=args.seed, width_convention=args.width_convention)


def _emit(report, args) -> None:
    if args.out_dir is not None:
        for path in report.write(args.out_dir, args.format):
            log.info("wrote %s", path)
    sys.stdout.write(report.to_json())


def _shot(args) -> float:
    if args.shot_trace is not None:
        return variance(load_trace(args.shot_trace).signal)
    return 1.0 if args.shot_variance is None else args.shot_variance


def _band(args, cfg: ScenarioConfig) -> SelectionBand:
    center = cfg.center if args.center is None else args.center
    width = cfg.half_width if args.width is None else args.width
    return SelectionBand.from_width(center, width, cfg.width_convention)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    if args.n is not None:
        cfg = validate(replace(cfg, n=args.n))
    trace = acquire(cfg, cfg.model.covariance(), cfg.seeds.trace, cfg.seeds.dark)
    out = args.out_dir or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    path = save_trace(trace, out / "trace.csv", overwrite=args.overwrite)
    print(path)
    return 0


def cmd_select(args) -> int:
    cfg = _config(args)
    trace = load_trace(args.trace)
    band = _band(args, cfg)
    shot_var = _shot(args)
    shot = ShotReference(shot_var, shot_var, args.dark_variance)
    try:
        outcome = select(trace, band, shot_var, args.dark_variance)
    except InsufficientSelectionError as err:
        print(
            f"error: insufficient selection: {err.accepted_count} samples accepted "
            f"(success rate {err.success_rate:.3g}); widen the band",
            file=sys.stderr,
        )
        return 1
    cov = sample_covariance(trace)
    record = point_record(
        {"center": band.center, "half_width": band.half_width}, outcome, cov, band, shot, cfg.min_accepted
    )
    data = {
        "provenance": {"version": __version__, "trace_seed": trace.meta.seed, "samples": trace.length},
        "calibration": shot.to_dict(),
        "sample_covariance": cov.to_dict(),
        "unconditioned": unconditioned_stats(trace, shot),
        "selection": record,
    }
    m = record["measured"]
    rows = [[band.center, band.half_width, m["db"], record["predicted"]["db"], record["success_rate"], record["accepted_count"]]]
    cols = ["center_sigma0", "half_width_sigma0", "measured_db", "predicted_db", "success_rate", "accepted_count"]
    _emit(NoiseReport(data, {"selection": (cols, rows)}), args)
    return 0


def cmd_sweep(args) -> int:
    if args.config is None and args.scenario is None:
        print("error: sweep needs --config or --scenario", file=sys.stderr)
        return 2
    cfg = _config(args, scenario=args.scenario or "bandwidth_sweep")
    if args.scenario is not None and args.config is not None and args.scenario != cfg.scenario:
        print(f"error: --scenario {args.scenario} conflicts with config scenario {cfg.scenario}", file=sys.stderr)
        return 2
    if cfg.scenario == "calibrate":
        print("error: use the calibrate subcommand for calibration configs", file=sys.stderr)
        return 2
    if args.config is None:
        defaults = {
            "gemellity_sweep": {"loss_grid": tuple(round(0.1 * k, 1) for k in range(9))},
            "multiband": {"centers": tuple(float(c) for c in range(-10, 11))},
            "histograms": {},
            "bandwidth_sweep": {},
        }[args.scenario]
        cfg = validate(replace(cfg, scenario=args.scenario, **defaults))
    _emit(run_scenario(cfg), args)
    return 0


def cmd_calibrate(args) -> int:
    cfg = _config(args, scenario="calibrate")
    cfg = replace(cfg, scenario="calibrate")
    if args.n is not None:
        cfg = replace(cfg, calibration_n=args.n)
    if args.seed is not None:
        cfg = replace(cfg, seeds=replace(cfg.seeds, calibration=args.seed))
    cfg = validate(cfg)
    report = run_scenario(cfg)
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        save_trace(calibration_trace(cfg), args.out_dir / "calibration.csv", overwrite=args.overwrite)
    _emit(report, args)
    return 0


def cmd_analyze(args) -> int:
    cfg = _config(args)
    trace = load_trace(args.trace)
    band = _band(args, cfg)
    widths = cfg.half_widths if cfg.scenario == "bandwidth_sweep" and cfg.half_widths else DEFAULT_SWEEP
    widths = [cfg.half_width_of(w) for w in widths]
    report = analyze_trace(
        trace,
        shot_variance=_shot(args),
        center=band.center,
        half_width=band.half_width,
        half_widths=widths,
        dark_variance=args.dark_variance,
        min_accepted=cfg.min_accepted,
    )
    _emit(report, args)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "select": cmd_select,
    "sweep": cmd_sweep,
    "calibrate": cmd_calibrate,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (TwinBeamError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
