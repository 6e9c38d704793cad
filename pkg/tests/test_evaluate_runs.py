import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from config import ScenarioSpec, SceneConfig
from errors import DimensionMismatch, LayoutMismatch
from evaluate_runs import aggregate_stations, cdf_table, density_core, evaluate_run, gauge_align
from generate_scenarios import build_scenario
from motion_geometry import StationLayout, Trajectory, positions_of, rotate_scene
from slat_solver import SolverResult

SCENE = SceneConfig()


@pytest.fixture(scope="module")
def scn():
    return build_scenario(ScenarioSpec(shape="square", size=1.2), SCENE)


def as_result(layout, traj, mse_trace=(1.0,)):
    return SolverResult(layout=layout, trajectory=traj, mse_trace=list(mse_trace), coarse_mse=mse_trace[0],
                        iterations=len(mse_trace) - 1, converged=True)


def test_identity_alignment(scn):
    aligned = gauge_align(scn.true_layout, scn.true_traj, scn.true_layout, scn.true_traj)
    assert aligned.theta == pytest.approx(0.0, abs=1e-12)
    assert not aligned.reflect
    assert aligned.residual == pytest.approx(0.0, abs=1e-20)


def test_rotated_estimate_is_brought_back(scn):
    layout, traj = rotate_scene(scn.true_layout, scn.true_traj, math.radians(-30))
    aligned = gauge_align(layout, traj, scn.true_layout)
    assert math.degrees(aligned.theta) == pytest.approx(30.0, abs=1e-9)
    assert not aligned.reflect
    np.testing.assert_allclose(aligned.layout.stations, scn.true_layout.stations, atol=1e-9)
    np.testing.assert_allclose(positions_of(aligned.trajectory), positions_of(scn.true_traj), atol=1e-9)


def test_reflected_estimate_is_brought_back(scn):
    layout, traj = rotate_scene(scn.true_layout, scn.true_traj, 0.4, reflect=True)
    aligned = gauge_align(layout, traj, scn.true_layout)
    assert aligned.reflect
    np.testing.assert_allclose(aligned.layout.stations, scn.true_layout.stations, atol=1e-9)


def test_shifted_estimate_is_not_made_worse(scn):
    shifted = StationLayout(stations=scn.true_layout.stations + np.array([0.3, 0.0]))
    traj = scn.true_traj.with_start(scn.true_traj.start + np.array([0.3, 0.0]))
    report = evaluate_run(as_result(shifted, traj), scn)
    assert np.mean(report.localization_errors ** 2) <= 0.09 + 1e-12
    assert report.raw_localization_median == pytest.approx(0.3)


@given(theta=st.floats(min_value=-math.pi, max_value=math.pi), reflect=st.booleans())
def test_errors_do_not_depend_on_the_estimate_frame(theta, reflect):
    scn = build_scenario(ScenarioSpec(shape="triangle", size=1.2), SCENE)
    rng = np.random.default_rng(0)
    noisy = StationLayout(stations=scn.true_layout.stations + rng.normal(0.0, 0.2, size=(4, 2)))
    noisy_traj = scn.true_traj.with_start(scn.true_traj.start + np.array([0.1, -0.1]))
    base = evaluate_run(as_result(noisy, noisy_traj), scn)
    layout, traj = rotate_scene(noisy, noisy_traj, theta, reflect)
    moved = evaluate_run(as_result(layout, traj), scn)
    np.testing.assert_allclose(moved.localization_errors, base.localization_errors, atol=1e-9)
    np.testing.assert_allclose(moved.tracking_errors, base.tracking_errors, atol=1e-9)


def test_perfect_estimate_scores_zero(scn):
    layout, traj = rotate_scene(scn.true_layout, scn.true_traj, 1.1)
    report = evaluate_run(as_result(layout, traj, (2.0, 0.5)), scn, run_id="square_run00")
    assert report.tracking_median < 1e-9
    assert report.localization_median < 1e-9
    assert report.raw_localization_median > 0.1
    assert report.final_mse == 0.5
    assert report.iterations == 1
    payload = report.to_dict()
    assert payload["run_id"] == "square_run00"
    assert len(payload["tracking_errors_m"]) == scn.true_traj.num_instants


def test_coarse_errors_are_reported_when_available(scn):
    result = as_result(scn.true_layout, scn.true_traj)
    assert math.isnan(evaluate_run(result, scn).coarse_tracking_median)
    result.coarse_layout, result.coarse_trajectory = scn.true_layout, scn.true_traj
    assert evaluate_run(result, scn).coarse_tracking_median == pytest.approx(0.0, abs=1e-12)


def test_instant_count_must_match(scn):
    short = Trajectory(start=scn.true_traj.start, velocities=scn.true_traj.velocities[:-1], dt=SCENE.dt)
    with pytest.raises(DimensionMismatch):
        evaluate_run(as_result(scn.true_layout, short), scn)


def test_station_count_must_match(scn):
    three = StationLayout(stations=scn.true_layout.stations[:3])
    with pytest.raises(LayoutMismatch):
        gauge_align(three, scn.true_traj, scn.true_layout)


def test_cdf_table_is_monotone_and_ends_at_one():
    table = cdf_table([0.3, 0.1, 0.2, 0.2])
    assert list(table.columns) == ["error_m", "cum_fraction"]
    assert table["error_m"].is_monotonic_increasing
    assert table["cum_fraction"].is_monotonic_increasing
    assert table["cum_fraction"].iloc[-1] == 1.0
    assert len(cdf_table([])) == 0


def test_density_core_drops_isolated_points():
    points = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [0.1, 0.1], [0.05, 0.05], [5.0, 5.0]])
    assert density_core(points, eps=0.5, min_pts=3).tolist() == [0, 1, 2, 3, 4]


def test_density_core_keeps_everything_without_a_cluster():
    points = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]])
    assert density_core(points, eps=0.5, min_pts=3).tolist() == [0, 1, 2]


def noisy_runs(scn, count, sigma, seed, outliers=0):
    rng = np.random.default_rng(seed)
    runs = []
    for k in range(count):
        stations = scn.true_layout.stations + rng.normal(0.0, sigma, size=(4, 2))
        if k < outliers:
            stations[0] += np.array([3.0, 3.0]) + rng.normal(0.0, 0.5, size=2)
        layout, traj = rotate_scene(StationLayout(stations=stations), scn.true_traj, rng.uniform(-math.pi, math.pi),
                                    reflect=bool(k % 2))
        runs.append((as_result(layout, traj), scn))
    return runs


def test_aggregation_discards_outlier_runs(scn):
    report = aggregate_stations(noisy_runs(scn, 12, 0.05, seed=1, outliers=2), eps=1.0, min_pts=3)
    assert report.kept[0] == 10
    assert np.linalg.norm(report.stations[0] - scn.true_layout.stations[0]) < 0.3
    assert report.mean_error_after < report.mean_error_before
    assert report.runs == 12


def test_aggregation_without_filter_is_a_plain_mean(scn):
    runs = noisy_runs(scn, 5, 0.1, seed=2)
    report = aggregate_stations(runs, density_filter=False)
    aligned = np.stack([gauge_align(r.layout, r.trajectory, scn.true_layout).layout.stations for r, _ in runs])
    np.testing.assert_allclose(report.stations, aligned.mean(axis=0), atol=1e-12)
    assert report.kept == [5, 5, 5, 5]
    assert not report.to_dict()["density_filter"]


def test_aggregation_beats_single_runs_on_average(scn):
    report = aggregate_stations(noisy_runs(scn, 20, 0.2, seed=3), eps=1.0, min_pts=3)
    assert report.mean_error_after <= report.mean_error_before


def test_aggregation_needs_matching_layouts(scn):
    with pytest.raises(LayoutMismatch):
        aggregate_stations(noisy_runs(scn, 1, 0.1, seed=4))
    other = build_scenario(ScenarioSpec(shape="square", size=1.2, layout_seed=99), SCENE)
    runs = noisy_runs(scn, 2, 0.1, seed=5) + noisy_runs(other, 1, 0.1, seed=6)
    with pytest.raises(LayoutMismatch):
        aggregate_stations(runs)
