#!/usr/bin/env python3
# scripts/wislat.py
"""
WiSLAT command line.

Usage:
    python scripts/wislat.py simulate   --config configs/default_experiment.json --out out/sim
    python scripts/wislat.py detect     out/sim/csi_station*.csv --trim-lead --out out/det
    python scripts/wislat.py solve      out/sim/doppler.csv --out out/solve
    python scripts/wislat.py evaluate   out/solve/result.json out/sim/scenario.json --out out/eval
    python scripts/wislat.py experiment --config configs/default_experiment.json --workers 4

Exit codes: 0 success, 2 usage/config error, 3 data-contract violation, 4 solver failure.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from rich.console import Console
from rich.logging import RichHandler

import report_console
from config import AppConfig, env_log_level, env_out_dir, load_config, with_overrides
from csi_doppler import Spectrogram, window_spectrograms
from ekf_reconstructor import reconstruct_trajectory
from errors import EXIT_OK, EXIT_USAGE, ConfigError, RefineFailed, exit_code_for
from evaluate_runs import evaluate_run
from formats import (
    read_csi_csv,
    read_doppler_csv,
    read_json,
    report_payload,
    result_from_dict,
    result_to_dict,
    scenario_from_dict,
    scenario_to_dict,
    write_csi_csv,
    write_doppler_csv,
    write_ekf_trace_csv,
    write_json,
    write_spectrogram_csv,
)
from generate_scenarios import build_scenario, detect_from_csi, generate_measurements, synthesize_station_csi
from run_experiment import run_experiment
from slat_solver import SlatSolver, build_candidate_sets

logger = logging.getLogger("wislat")


def configure_logging(verbosity):
    if verbosity >= 2:
        level = "DEBUG"
    elif verbosity == 1:
        level = "INFO"
    else:
        level = env_log_level()
    logging.basicConfig(
        level=level,
        format="%(name)s: %(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def load_app_config(args):
    config = load_config(args.config) if args.config else AppConfig()
    return with_overrides(config, seed=args.seed, workers=args.workers, max_outer=args.max_outer)


def output_dir(args):
    out = Path(args.out or env_out_dir())
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {out}: {e}") from e
    return out


def cmd_simulate(args, config):
    out = output_dir(args)
    scn = build_scenario(config.scenario, config.scene, config.solver)
    measured = generate_measurements(scn, config.detector)
    write_json(out / "scenario.json", scenario_to_dict(scn))
    write_doppler_csv(out / "doppler.csv", measured)
    if scn.noise.use_csi_path or args.write_csi:
        streams = synthesize_station_csi(scn, config.detector, np.random.default_rng(scn.seed))
        for m, stream in enumerate(streams):
            write_csi_csv(out / f"csi_station{m}.csv", stream)
    report_console.print_scenario(scn, measured)
    return EXIT_OK


def cmd_detect(args, config):
    if not args.csi_files:
        raise ConfigError("detect needs at least one CSI file")
    out = output_dir(args)
    streams = [read_csi_csv(path) for path in args.csi_files]
    lead = config.detector.q_half if args.trim_lead else 0
    measured = detect_from_csi(streams, config.detector, config.scene, lead=lead)
    write_doppler_csv(out / "doppler.csv", measured)

    if args.spectrogram_at is not None:
        for m, stream in enumerate(streams):
            magnitudes, centres = window_spectrograms(stream, config.detector, config.scene)
            rows = np.flatnonzero(centres == args.spectrogram_at + lead)
            if len(rows) == 0:
                raise ConfigError(f"no centred window at interval {args.spectrogram_at}")
            spec = Spectrogram(magnitudes=magnitudes[rows[0]], n_fft=config.detector.n_fft, fs=config.scene.fs)
            write_spectrogram_csv(out / f"spectrogram_station{m}.csv", spec)
    report_console.console.print(
        f"Detected [bold]{int(measured.availability.sum())}[/bold] Doppler values "
        f"from {len(streams)} station(s)"
    )
    return EXIT_OK


def cmd_solve(args, config):
    out = output_dir(args)
    measured = read_doppler_csv(args.doppler_csv)
    candidates = build_candidate_sets(config.solver, config.scene, measured.num_stations)
    if args.scenario:
        scn = scenario_from_dict(read_json(args.scenario))
        candidates = candidates.with_truth(scn.true_traj.start, scn.true_layout)

    solver = SlatSolver(config.scene, config.ekf, config.solver)
    try:
        result = solver.solve(measured, candidates)
    except RefineFailed as e:
        if e.best is not None:
            write_json(out / "result.json", result_to_dict(e.best))
        raise
    write_json(out / "result.json", result_to_dict(result))

    if args.dump_trace:
        trace = []
        reconstruct_trajectory(result.trajectory.start, result.layout, measured, config.ekf, config.scene, trace=trace)
        write_ekf_trace_csv(out / "ekf_trace.csv", trace)
    report_console.print_solver_result(result)
    return EXIT_OK


def cmd_evaluate(args, config):
    out = output_dir(args)
    result = result_from_dict(read_json(args.result))
    scn = scenario_from_dict(read_json(args.scenario))
    report = evaluate_run(result, scn, run_id=Path(args.result).parent.name or "run")
    write_json(out / "report.json", report_payload(report))
    report_console.print_run_report(report)
    return EXIT_OK


def cmd_experiment(args, config):
    out = output_dir(args)
    reports, failures, aggregate = run_experiment(config, out)
    report_console.print_experiment_summary(reports, failures, aggregate)
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment/scenario JSON config")
    common.add_argument("--out", help="output directory (default: $WISLAT_OUT_DIR or ./out)")
    common.add_argument("--seed", type=int, help="override scenario and experiment seeds")
    common.add_argument("--workers", type=int, help="worker processes for experiments")
    common.add_argument("--max-outer", type=int, help="outer refinement iterations (0 = coarse only)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")

    parser = argparse.ArgumentParser(
        prog="wislat",
        description="Doppler-only station localization and target tracking on synthetic Wi-Fi scenes",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", parents=[common], help="generate a scenario and its measurements")
    simulate.add_argument("--write-csi", action="store_true", help="also write per-station CSI CSVs")
    simulate.set_defaults(handler=cmd_simulate)

    detect = sub.add_parser("detect", parents=[common], help="detect Doppler from per-station CSI CSVs")
    detect.add_argument("csi_files", nargs="*", help="one CSI CSV per station, in station order")
    detect.add_argument("--trim-lead", action="store_true",
                        help="drop the Q lead-in/lead-out samples written by simulate")
    detect.add_argument("--spectrogram-at", type=int, help="dump the spectrogram of this interval per station")
    detect.set_defaults(handler=cmd_detect)

    solve = sub.add_parser("solve", parents=[common], help="estimate stations and trajectory from a Doppler CSV")
    solve.add_argument("doppler_csv")
    solve.add_argument("--scenario", help="scenario JSON whose ground truth joins the coarse candidates")
    solve.add_argument("--dump-trace", action="store_true", help="write the final EKF state trace")
    solve.set_defaults(handler=cmd_solve)

    evaluate = sub.add_parser("evaluate", parents=[common], help="score a result against its scenario")
    evaluate.add_argument("result")
    evaluate.add_argument("scenario")
    evaluate.set_defaults(handler=cmd_evaluate)

    experiment = sub.add_parser("experiment", parents=[common], help="run a full simulated experiment")
    experiment.set_defaults(handler=cmd_experiment)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    configure_logging(args.verbose)
    try:
        config = load_app_config(args)
        return args.handler(args, config)
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        report_console.print_error(e)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
