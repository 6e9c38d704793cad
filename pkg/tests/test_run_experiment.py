import dataclasses
import json

import numpy as np
import pandas as pd
import pytest

import run_experiment as runner
from config import config_from_dict
from errors import ConfigError


@pytest.fixture
def config(small_config_dict):
    return config_from_dict(small_config_dict)


def with_experiment(config, **changes):
    return dataclasses.replace(config, experiment=dataclasses.replace(config.experiment, **changes))


def test_plan_is_deterministic_and_complete(config):
    config = with_experiment(config, shapes=("circle", "square"), noise_levels=(0.0, 1.0), runs_per_shape=3)
    jobs = runner.plan_jobs(config)
    assert len(jobs) == 2 * 2 * 3
    assert jobs == runner.plan_jobs(config)
    assert len({job.seed for job in jobs}) == len(jobs)
    assert jobs[0].run_id == "circle_noise0_run00"
    assert {job.run_id for job in jobs} >= {"square_noise1_run02"}
    for job in jobs:
        assert np.all(np.abs(np.asarray(job.center) - np.asarray(config.scenario.center)) <= runner.CENTER_JITTER)
        assert 0.9 * config.scenario.size <= job.size <= config.scenario.size


def test_plan_changes_with_the_experiment_seed(config):
    first = runner.plan_jobs(config)
    second = runner.plan_jobs(with_experiment(config, seed=12))
    assert [j.seed for j in first] != [j.seed for j in second]


def test_unknown_shape_is_a_config_error(config):
    with pytest.raises(ConfigError):
        runner.plan_jobs(with_experiment(config, shapes=("pentagon",)))


def test_empty_experiment_writes_empty_summary(tmp_path, config):
    reports, failures, aggregate = runner.run_experiment(with_experiment(config, shapes=()), tmp_path)
    assert reports == [] and failures == [] and aggregate is None
    summary = json.loads((tmp_path / "experiment.json").read_text())
    assert summary == {"runs": [], "completed": 0, "failed": 0}
    assert pd.read_csv(tmp_path / "cdf_tracking.csv").empty
    payload = json.loads((tmp_path / "aggregate.json").read_text())
    assert payload["all"]["status"] == "skipped"


def test_runs_are_reproducible(tmp_path, config):
    first, _, _ = runner.run_experiment(config, tmp_path / "a")
    second, _, _ = runner.run_experiment(config, tmp_path / "b")
    assert [r.run_id for r in first] == [r.run_id for r in second]
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.tracking_errors, b.tracking_errors)
        assert a.final_mse == b.final_mse
    report = json.loads((tmp_path / "a" / "runs" / "circle_noise0_run00" / "report.json").read_text())
    assert report["status"] == "ok"
    assert (tmp_path / "a" / "runs" / "circle_noise0_run00" / "result.json").is_file()


def test_a_failing_run_does_not_stop_the_experiment(tmp_path, config, monkeypatch):
    real = runner.generate_measurements

    def flaky(scn, detector=None):
        if scn.shape == "square":
            raise RuntimeError("detector offline")
        return real(scn, detector)

    monkeypatch.setattr(runner, "generate_measurements", flaky)
    config = with_experiment(config, shapes=("circle", "square"), runs_per_shape=1)
    reports, failures, _ = runner.run_experiment(config, tmp_path)
    assert [r.run_id for r in reports] == ["circle_noise0_run00"]
    assert failures == [("square_noise0_run00", "RuntimeError: detector offline")]
    failed = json.loads((tmp_path / "runs" / "square_noise0_run00" / "report.json").read_text())
    assert failed["status"] == "failed"
    summary = json.loads((tmp_path / "experiment.json").read_text())
    assert summary["completed"] == 1 and summary["failed"] == 1


def test_aggregate_groups_by_noise_level(tmp_path, config):
    config = with_experiment(config, runs_per_shape=3, noise_levels=(0.0, 0.5))
    _, _, aggregate = runner.run_experiment(config, tmp_path)
    payload = json.loads((tmp_path / "aggregate.json").read_text())
    assert set(payload) == {"all", "noise0", "noise0.5"}
    if aggregate is not None:
        assert payload["all"]["runs"] == aggregate.runs


@pytest.mark.slow
def test_worker_count_does_not_change_results(tmp_path, config):
    inline, _, _ = runner.run_experiment(config, tmp_path / "inline")
    pooled, _, _ = runner.run_experiment(with_experiment(config, workers=2), tmp_path / "pooled")
    for a, b in zip(inline, pooled):
        assert a.run_id == b.run_id
        np.testing.assert_allclose(a.tracking_errors, b.tracking_errors)
