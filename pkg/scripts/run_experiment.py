# scripts/run_experiment.py
"""
Experiment work queue.

Every (shape, noise level, run index) triple becomes one independent job with
its own seed derived from the experiment seed, so results do not depend on the
worker count or on the order in which jobs finish. Failed runs are recorded
with their error string and the experiment carries on.

Output layout (under the experiment output directory):
    runs/<run_id>/report.json, runs/<run_id>/result.json
    cdf_tracking.csv, cdf_tracking_run_medians.csv
    cdf_localization.csv, cdf_localization_run_medians.csv
    aggregate.json, experiment.json
"""

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np

from errors import ConfigError, WislatError
from evaluate_runs import aggregate_stations, cdf_table, evaluate_run
from formats import report_payload, result_to_dict, write_cdf_csv, write_json
from generate_scenarios import SHAPES, build_scenario, generate_measurements
from slat_solver import SlatSolver, build_candidate_sets

logger = logging.getLogger(__name__)

CENTER_JITTER = 0.1  # m
SIZE_SCALE = (0.9, 1.0)


@dataclass(frozen=True)
class RunJob:
    run_id: str
    shape: str
    noise: float
    seed: int
    center: tuple
    size: float


@dataclass(eq=False)
class RunOutcome:
    job: RunJob
    report: object = None
    result: object = None
    scenario: object = None
    error: str | None = None

    @property
    def ok(self):
        return self.error is None


def plan_jobs(config):
    """Deterministic job list: shapes x noise levels x runs, each with a spawned seed."""
    exp = config.experiment
    jobs = []
    for shape in exp.shapes:
        if shape not in SHAPES:
            raise ConfigError(f"unknown shape {shape!r} in experiment.shapes")
        for noise_idx, noise in enumerate(exp.noise_levels):
            for k in range(exp.runs_per_shape):
                seq = np.random.SeedSequence(exp.seed, spawn_key=(SHAPES.index(shape), noise_idx, k))
                rng = np.random.default_rng(seq)
                jitter = rng.uniform(-CENTER_JITTER, CENTER_JITTER, size=2)
                center = tuple(float(c) for c in np.asarray(config.scenario.center) + jitter)
                jobs.append(RunJob(
                    run_id=f"{shape}_noise{noise:g}_run{k:02d}",
                    shape=shape,
                    noise=float(noise),
                    seed=int(rng.integers(2**31 - 1)),
                    center=center,
                    size=float(config.scenario.size * rng.uniform(*SIZE_SCALE)),
                ))
    return jobs


def execute_job(job, config):
    """Simulate, solve and score one run; any failure is captured in the outcome."""
    try:
        spec = dataclasses.replace(
            config.scenario, shape=job.shape, seed=job.seed, doppler_sigma=job.noise,
            center=job.center, size=job.size,
        )
        scn = build_scenario(spec, config.scene, config.solver)
        measured = generate_measurements(scn, config.detector)
        candidates = build_candidate_sets(config.solver, config.scene, measured.num_stations)
        if config.experiment.inject_truth:
            candidates = candidates.with_truth(scn.true_traj.start, scn.true_layout)
        result = SlatSolver(config.scene, config.ekf, config.solver).solve(measured, candidates)
        report = evaluate_run(result, scn, run_id=job.run_id)
        return RunOutcome(job=job, report=report, result=result, scenario=scn)
    except Exception as e:
        logger.error(f"Run {job.run_id} failed: {e}")
        return RunOutcome(job=job, error=f"{type(e).__name__}: {e}")


class ExperimentRunner:
    def __init__(self, config, out_dir):
        self.config = config
        self.out_dir = Path(out_dir)

    def run_jobs(self, jobs):
        workers = max(1, self.config.experiment.workers)
        worker = partial(execute_job, config=self.config)
        if workers == 1 or len(jobs) <= 1:
            return [worker(job) for job in jobs]
        logger.info(f"Running {len(jobs)} jobs on {workers} worker processes")
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(worker, jobs))

    def write_run_files(self, outcome):
        run_dir = self.out_dir / "runs" / outcome.job.run_id
        meta = {"shape": outcome.job.shape, "noise_hz": outcome.job.noise, "seed": outcome.job.seed}
        if outcome.ok:
            payload = report_payload(outcome.report)
            payload.update(meta, status="ok")
            write_json(run_dir / "result.json", result_to_dict(outcome.result))
        else:
            payload = dict(meta, run_id=outcome.job.run_id, status="failed", error=outcome.error)
        write_json(run_dir / "report.json", payload)

    def aggregate(self, outcomes):
        """Density-filtered station aggregation over all runs and per noise level."""
        exp = self.config.experiment
        groups = {"all": [o for o in outcomes if o.ok]}
        for noise in exp.noise_levels:
            groups[f"noise{noise:g}"] = [o for o in groups["all"] if o.job.noise == float(noise)]
        payload, overall = {}, None
        for name, members in groups.items():
            try:
                report = aggregate_stations(
                    [(o.result, o.scenario) for o in members],
                    eps=exp.aggregate_eps, min_pts=exp.aggregate_min_pts, density_filter=exp.density_filter,
                )
            except WislatError as e:
                payload[name] = {"status": "skipped", "reason": str(e)}
                continue
            payload[name] = dict(report.to_dict(), status="ok")
            if name == "all":
                overall = report
        return payload, overall

    def run(self):
        jobs = plan_jobs(self.config)
        logger.info(f"Planned {len(jobs)} runs")
        outcomes = self.run_jobs(jobs)
        outcomes.sort(key=lambda o: o.job.run_id)

        for outcome in outcomes:
            self.write_run_files(outcome)

        reports = [o.report for o in outcomes if o.ok]
        tracking = np.concatenate([r.tracking_errors for r in reports]) if reports else np.array([])
        localization = np.concatenate([r.localization_errors for r in reports]) if reports else np.array([])
        write_cdf_csv(self.out_dir / "cdf_tracking.csv", cdf_table(tracking))
        write_cdf_csv(self.out_dir / "cdf_tracking_run_medians.csv", cdf_table([r.tracking_median for r in reports]))
        write_cdf_csv(self.out_dir / "cdf_localization.csv", cdf_table(localization))
        write_cdf_csv(self.out_dir / "cdf_localization_run_medians.csv",
                      cdf_table([r.localization_median for r in reports]))

        aggregate_payload, aggregate = self.aggregate(outcomes)
        write_json(self.out_dir / "aggregate.json", aggregate_payload)

        failures = [(o.job.run_id, o.error) for o in outcomes if not o.ok]
        write_json(self.out_dir / "experiment.json", {
            "runs": [{"run_id": o.job.run_id, "status": "ok" if o.ok else "failed"} for o in outcomes],
            "completed": len(reports),
            "failed": len(failures),
        })
        logger.info(f"Experiment finished: {len(reports)} completed, {len(failures)} failed")
        return reports, failures, aggregate


def run_experiment(config, out_dir):
    return ExperimentRunner(config, out_dir).run()
