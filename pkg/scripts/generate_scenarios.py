# scripts/generate_scenarios.py
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from config import DetectorConfig, SceneConfig, ScenarioSpec
from csi_doppler import MultipathConfig, detect_doppler_series, synthesize_csi
from errors import ConfigError, ShapeExceedsArena
from motion_geometry import DopplerMatrix, StationLayout, Trajectory, model_doppler_matrix, positions_of

logger = logging.getLogger(__name__)

SHAPES = ("circle", "square", "triangle")


@dataclass(frozen=True)
class NoiseModel:
    doppler_sigma: float = 0.0
    use_csi_path: bool = False
    static_gain: float = 1.0
    target_gain: float = 0.3
    n_static_paths: int = 3

    def __post_init__(self):
        if self.doppler_sigma < 0:
            raise ConfigError(f"doppler_sigma must be >= 0, got {self.doppler_sigma}")


@dataclass(frozen=True, eq=False)
class Scenario:
    scene: SceneConfig
    true_layout: StationLayout
    true_traj: Trajectory
    shape: str
    seed: int
    noise: NoiseModel = field(default_factory=NoiseModel)
    blockage: tuple = ()  # (station, first interval, stop interval)


def _polygon_trajectory(vertices, speed, dt):
    """Constant speed along each edge, instantaneous turns at the vertices, closed.

    Edges take a whole number of intervals, rounded up so no edge is walked
    faster than `speed`.
    """
    velocities = []
    corners = list(vertices) + [vertices[0]]
    for a, b in zip(corners[:-1], corners[1:]):
        edge = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        steps = max(1, math.ceil(np.linalg.norm(edge) / (speed * dt) - 1e-9))
        velocities.append(np.repeat((edge / (steps * dt))[None, :], steps, axis=0))
    return Trajectory(start=vertices[0], velocities=np.vstack(velocities), dt=dt)


def _circle_trajectory(radius, center, speed, dt, num_intervals=None):
    """
    Regular polygon inscribed in the circle, one vertex per instant.

    The turn per interval is constant, so the angular rate is constant and
    every chord has the same length speed * dt.
    """
    if num_intervals is None:
        num_intervals = max(8, int(round(2 * np.pi * radius / (speed * dt))))
    step = 2 * np.pi / num_intervals
    inscribed = speed * dt / (2 * math.sin(step / 2))
    angles = step * np.arange(num_intervals + 1)
    vertices = np.column_stack([np.cos(angles), np.sin(angles)]) * inscribed + np.asarray(center)
    velocities = np.diff(vertices, axis=0) / dt
    return Trajectory(start=vertices[0], velocities=velocities, dt=dt)


def generate_trajectory(shape, size, center, speed, scene):
    """
    Closed ground-truth trajectory of the given shape.

    Args:
        shape (str): circle (size = radius), square or triangle (size = side length).
        center (tuple): shape centre (centroid for the triangle).
        speed (float): target speed in m/s, in (0, v_max].

    Raises:
        ConfigError: for an unknown shape or a speed outside (0, v_max].
        ShapeExceedsArena: when any position leaves the arena square.
    """
    if not 0 < speed <= scene.v_max:
        raise ConfigError(f"speed must lie in (0, {scene.v_max}] m/s, got {speed}")
    cx, cy = center
    if shape == "circle":
        traj = _circle_trajectory(size, center, speed, scene.dt)
    elif shape == "square":
        h = size / 2
        traj = _polygon_trajectory([(cx - h, cy - h), (cx + h, cy - h), (cx + h, cy + h), (cx - h, cy + h)],
                                   speed, scene.dt)
    elif shape == "triangle":
        r = size / math.sqrt(3)
        angles = np.radians([-90.0, 30.0, 150.0])
        traj = _polygon_trajectory([(cx + r * math.cos(a), cy + r * math.sin(a)) for a in angles], speed, scene.dt)
    else:
        raise ConfigError(f"unknown trajectory shape {shape!r}")

    if traj.max_speed() > scene.v_max * (1 + 1e-9):
        raise ConfigError(f"{shape} needs {traj.max_speed():.3f} m/s, above v_max={scene.v_max} m/s")

    half = scene.arena_size / 2
    reach = float(np.max(np.abs(positions_of(traj))))
    if reach > half:
        raise ShapeExceedsArena(f"{shape} of size {size} m reaches {reach:.2f} m, arena half-width is {half} m")
    return traj


def random_layout(rng, num_stations, r_min=2.0, r_max=4.0, min_separation=0.5):
    """Stations drawn uniformly from an annulus around the AP, kept apart from each other."""
    stations = []
    while len(stations) < num_stations:
        radius = rng.uniform(r_min, r_max)
        angle = rng.uniform(0.0, 2 * np.pi)
        point = np.array([radius * math.cos(angle), radius * math.sin(angle)])
        if all(np.linalg.norm(point - s) >= min_separation for s in stations):
            stations.append(point)
    return StationLayout(stations=np.array(stations))


def build_scenario(spec, scene, solver_cfg=None):
    """Ground-truth Scenario from a ScenarioSpec recipe."""
    if spec.layout is not None:
        layout = StationLayout(stations=np.asarray(spec.layout, dtype=float))
    else:
        r_min = solver_cfg.r_min if solver_cfg is not None else 2.0
        r_max = solver_cfg.r_max if solver_cfg is not None else 4.0
        layout = random_layout(np.random.default_rng(spec.layout_seed), scene.num_stations, r_min, r_max)
    layout.validate(scene.eps_geo)

    traj = generate_trajectory(spec.shape, spec.size, spec.center, spec.speed, scene)
    noise = NoiseModel(
        doppler_sigma=spec.doppler_sigma,
        use_csi_path=spec.use_csi_path,
        static_gain=spec.static_gain,
        target_gain=spec.target_gain,
        n_static_paths=spec.n_static_paths,
    )
    blockage = tuple((int(m), int(a), int(b)) for m, a, b in spec.blockage)
    for m, a, b in blockage:
        if not 0 <= m < layout.num_stations or not 0 <= a <= b:
            raise ConfigError(f"invalid blockage entry ({m}, {a}, {b})")
    logger.info(f"Built {spec.shape} scenario with {traj.num_instants} instants and {layout.num_stations} stations")
    return Scenario(scene=scene, true_layout=layout, true_traj=traj, shape=spec.shape, seed=spec.seed,
                    noise=noise, blockage=blockage)


def synthesize_station_csi(scn, detector, rng):
    """
    One CSI stream per station, padded with Q held samples on both sides.

    The padding gives every tracked interval a centred detection window.
    """
    truth = model_doppler_matrix(scn.true_traj, scn.true_layout, scn.scene).values
    q = detector.q_half
    streams = []
    for m in range(truth.shape[0]):
        series = np.concatenate([np.full(q, truth[m, 0]), truth[m], np.full(q, truth[m, -1])])
        multipath = MultipathConfig.random(
            rng,
            static_gain=scn.noise.static_gain,
            target_gain=scn.noise.target_gain,
            n_static_paths=scn.noise.n_static_paths,
            phase_offset_seed=int(rng.integers(2**31 - 1)),
        )
        streams.append(synthesize_csi(series, multipath, scn.scene))
    return streams


def detect_from_csi(streams, detector, scene, lead=0):
    """Doppler matrix detected from per-station CSI streams, lead samples dropped at both ends."""
    values, availability = [], []
    for stream in streams:
        f, ok = detect_doppler_series(stream, detector, scene)
        stop = len(f) - lead
        values.append(f[lead:stop])
        availability.append(ok[lead:stop])
    return DopplerMatrix(values=np.array(values), availability=np.array(availability))


def generate_measurements(scn, detector=None):
    """
    Measured Doppler matrix for a scenario.

    Either the model matrix plus seeded Gaussian noise, or the full CSI chain
    (synthesis, ratio, STFT, peak picking). Blocked intervals are marked
    unavailable and every non-gap interval must keep at least 3 stations.

    Raises:
        InsufficientStations: when blockage leaves fewer than 3 stations in an interval.
    """
    detector = detector or DetectorConfig()
    rng = np.random.default_rng(scn.seed)
    if scn.noise.use_csi_path:
        streams = synthesize_station_csi(scn, detector, rng)
        measured = detect_from_csi(streams, detector, scn.scene, lead=detector.q_half)
    else:
        truth = model_doppler_matrix(scn.true_traj, scn.true_layout, scn.scene)
        values = truth.values
        if scn.noise.doppler_sigma > 0:
            values = values + rng.normal(0.0, scn.noise.doppler_sigma, size=values.shape)
        measured = DopplerMatrix.full(values)

    if scn.blockage:
        availability = measured.availability.copy()
        for m, first, stop in scn.blockage:
            availability[m, first:stop] = False
        measured = measured.with_availability(availability)
        logger.info(f"Applied {len(scn.blockage)} blockage interval(s)")
    return measured.validate(min_stations=3)


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    scene = SceneConfig()
    for shape in SHAPES:
        scenario = build_scenario(ScenarioSpec(shape=shape), scene)
        measured = generate_measurements(scenario)
        print(f"Generated {shape} scenario: {measured.num_stations} x {measured.num_intervals} Doppler matrix")
