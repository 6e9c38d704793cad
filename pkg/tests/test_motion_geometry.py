import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from config import SceneConfig
from errors import DegenerateGeometry, DimensionMismatch, InsufficientStations
from motion_geometry import (
    DopplerMatrix,
    Position2D,
    StationLayout,
    Trajectory,
    Velocity2D,
    bistatic_doppler,
    doppler_frequency,
    model_doppler_matrix,
    mse,
    orthogonal_map,
    positions_of,
    residual_matrix,
    rotate_scene,
)

SCENE = SceneConfig()


def small_scene(num_intervals=40, seed=0):
    rng = np.random.default_rng(seed)
    velocities = rng.uniform(-1.0, 1.0, size=(num_intervals, 2))
    traj = Trajectory(start=(1.2, 0.7), velocities=velocities, dt=0.01)
    layout = StationLayout(stations=[(3.0, 0.5), (-2.0, 2.5), (0.5, -3.2), (-2.8, -1.0)])
    return traj, layout


def test_doppler_frequency_hand_checked_value():
    f = doppler_frequency(Position2D(1, 1), Velocity2D(0, -1), Position2D(2, 0), SCENE)
    expected = math.sqrt(2) / SCENE.wavelength
    assert f == pytest.approx(expected, rel=1e-12)
    assert f == pytest.approx(24.715, abs=0.01)


def test_doppler_frequency_zero_velocity_is_zero():
    assert doppler_frequency(Position2D(1, 1), Velocity2D(0, 0), Position2D(2, 0), SCENE) == 0.0


def test_doppler_frequency_reverses_with_velocity():
    p, r = Position2D(0.4, -1.3), Position2D(-2.0, 1.0)
    forward = doppler_frequency(p, Velocity2D(0.3, 0.8), r, SCENE)
    backward = doppler_frequency(p, Velocity2D(-0.3, -0.8), r, SCENE)
    assert forward == pytest.approx(-backward, rel=1e-12)


def test_doppler_bounded_by_twice_speed_over_wavelength():
    rng = np.random.default_rng(3)
    points = rng.uniform(-2, 2, size=(500, 2))
    velocities = rng.uniform(-1.5, 1.5, size=(500, 2))
    stations = np.array([[3.1, 0.2], [-2.2, 2.9]])
    f = bistatic_doppler(points, velocities, stations, SCENE.wavelength)
    speeds = np.hypot(velocities[:, 0], velocities[:, 1])
    assert np.all(np.abs(f) <= 2 * speeds[None, :] / SCENE.wavelength + 1e-9)


def test_target_at_transmitter_is_degenerate():
    with pytest.raises(DegenerateGeometry):
        doppler_frequency(Position2D(0, 0), Velocity2D(1, 0), Position2D(2, 0), SCENE)


def test_target_on_station_reports_station_and_instant():
    points = np.array([[1.0, 1.0], [2.0, 0.0]])
    with pytest.raises(DegenerateGeometry) as info:
        bistatic_doppler(points, np.ones((2, 2)), np.array([[5.0, 5.0], [2.0, 0.0]]), SCENE.wavelength)
    assert info.value.station == 1
    assert info.value.instant == 1


def test_positions_follow_forward_euler():
    traj = Trajectory(start=(0.5, 0.5), velocities=[(1.0, 0.0), (0.0, 2.0), (-1.0, -1.0)], dt=0.1)
    expected = np.array([[0.5, 0.5], [0.6, 0.5], [0.6, 0.7], [0.5, 0.6]])
    np.testing.assert_allclose(positions_of(traj), expected, atol=1e-12)
    assert traj.num_instants == 4


def test_trajectory_rejects_non_positive_dt():
    with pytest.raises(ValueError):
        Trajectory(start=(0, 1), velocities=[(1, 0)], dt=0.0)


def test_model_matrix_uses_interval_start_positions():
    traj, layout = small_scene(num_intervals=5)
    model = model_doppler_matrix(traj, layout, SCENE)
    assert model.shape == (4, 5)
    points = positions_of(traj)
    direct = bistatic_doppler(points[2], traj.velocities[2], layout.stations, SCENE.wavelength)[:, 0]
    np.testing.assert_allclose(model.values[:, 2], direct, rtol=1e-12)


def test_mse_of_identical_matrices_is_zero():
    traj, layout = small_scene()
    model = model_doppler_matrix(traj, layout, SCENE)
    assert mse(model, model) == 0.0


def test_mse_normalizes_by_available_entries():
    values = np.zeros((3, 4))
    availability = np.ones((3, 4), dtype=bool)
    availability[0, 0] = False
    measured = DopplerMatrix(values=values + 2.0, availability=availability)
    model = DopplerMatrix.full(values)
    assert mse(measured, model) == pytest.approx(4.0)
    residual, mask = residual_matrix(measured, model)
    assert residual[0, 0] == 0.0
    assert mask.sum() == 11


def test_mse_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        mse(DopplerMatrix.full(np.zeros((3, 4))), DopplerMatrix.full(np.zeros((3, 5))))


def test_doppler_matrix_zeroes_unavailable_entries_and_is_read_only():
    matrix = DopplerMatrix(values=np.full((3, 2), 7.0), availability=[[True, False], [True, True], [True, True]])
    assert matrix.values[0, 1] == 0.0
    with pytest.raises(ValueError):
        matrix.values[0, 0] = 1.0


def test_doppler_matrix_needs_three_stations_per_column():
    availability = np.ones((4, 6), dtype=bool)
    availability[:2, 3] = False
    with pytest.raises(InsufficientStations) as info:
        DopplerMatrix(values=np.zeros((4, 6)), availability=availability).validate()
    assert info.value.column == 3


def test_doppler_matrix_gap_columns_pass_validation():
    availability = np.ones((4, 6), dtype=bool)
    availability[:, 0] = False
    matrix = DopplerMatrix(values=np.zeros((4, 6)), availability=availability).validate()
    assert matrix.gap_columns().tolist() == [True] + [False] * 5


def test_layout_validation():
    with pytest.raises(InsufficientStations):
        StationLayout(stations=[(1, 1), (2, 2)]).validate()
    with pytest.raises(DegenerateGeometry):
        StationLayout(stations=[(0, 0), (2, 2), (3, 1)]).validate()
    with pytest.raises(DegenerateGeometry):
        StationLayout(stations=[(1, 1), (1, 1), (3, 1)]).validate()


def test_orthogonal_map_is_orthogonal():
    q = orthogonal_map(0.7, reflect=True)
    np.testing.assert_allclose(q @ q.T, np.eye(2), atol=1e-12)
    assert np.linalg.det(q) == pytest.approx(-1.0)


@given(
    theta=st.floats(min_value=-math.pi, max_value=math.pi),
    reflect=st.booleans(),
    seed=st.integers(min_value=0, max_value=10_000),
)
def test_model_doppler_is_gauge_invariant(theta, reflect, seed):
    traj, layout = small_scene(num_intervals=20, seed=seed)
    rotated_layout, rotated_traj = rotate_scene(layout, traj, theta, reflect)
    before = model_doppler_matrix(traj, layout, SCENE).values
    after = model_doppler_matrix(rotated_traj, rotated_layout, SCENE).values
    np.testing.assert_allclose(after, before, rtol=1e-9, atol=1e-9 * np.max(np.abs(before)))


def test_positions_difference_back_to_velocities():
    traj, _ = small_scene(num_intervals=30, seed=2)
    np.testing.assert_allclose(np.diff(positions_of(traj), axis=0) / traj.dt, traj.velocities, atol=1e-9)


def test_rotate_scene_identity_and_involution():
    traj, layout = small_scene(num_intervals=10, seed=4)
    same_layout, same_traj = rotate_scene(layout, traj, 0.0)
    np.testing.assert_array_equal(same_layout.stations, layout.stations)
    np.testing.assert_array_equal(same_traj.velocities, traj.velocities)

    once = rotate_scene(layout, traj, 1.1, reflect=True)
    back_layout, back_traj = rotate_scene(*once, 1.1, reflect=True)
    np.testing.assert_allclose(back_layout.stations, layout.stations, atol=1e-12)
    np.testing.assert_allclose(back_traj.start, traj.start, atol=1e-12)
    np.testing.assert_allclose(back_traj.velocities, traj.velocities, atol=1e-12)


def test_doppler_matrix_magnitude_bound():
    matrix = DopplerMatrix.full(np.full((4, 3), 50.0))
    assert matrix.validate(max_abs=SCENE.max_doppler) is matrix
    with pytest.raises(DimensionMismatch):
        DopplerMatrix.full(np.full((4, 3), 5000.0)).validate(max_abs=SCENE.max_doppler)
