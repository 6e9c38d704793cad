# scripts/motion_geometry.py
"""
Kinematic forward model.

The transmitter (AP) sits at the origin. A trajectory is a starting point plus
one velocity per sampling interval; positions follow by forward Euler. The
Doppler frequency seen by station m in interval n is the bistatic sum of the
velocity projections onto the unit vectors towards the transmitter and towards
the station, divided by the wavelength.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from errors import DegenerateGeometry, DimensionMismatch, InsufficientStations

logger = logging.getLogger(__name__)


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Position2D:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite position ({self.x}, {self.y})")

    def as_array(self):
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class Velocity2D:
    vx: float
    vy: float

    def __post_init__(self):
        if not (math.isfinite(self.vx) and math.isfinite(self.vy)):
            raise ValueError(f"non-finite velocity ({self.vx}, {self.vy})")

    @property
    def speed(self):
        return math.hypot(self.vx, self.vy)

    def as_array(self):
        return np.array([self.vx, self.vy], dtype=float)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Starting point p1, N-1 per-interval velocities and the interval length dt."""
    start: np.ndarray
    velocities: np.ndarray
    dt: float

    def __post_init__(self):
        start = _frozen(self.start).reshape(2)
        velocities = _frozen(np.asarray(self.velocities, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "velocities", velocities)
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if len(velocities) < 1:
            raise ValueError("a trajectory needs at least 2 instants")
        if not (np.all(np.isfinite(start)) and np.all(np.isfinite(velocities))):
            raise ValueError("trajectory holds non-finite values")

    @property
    def num_instants(self):
        return len(self.velocities) + 1

    @property
    def start_position(self):
        return Position2D(float(self.start[0]), float(self.start[1]))

    def with_start(self, start):
        return Trajectory(start=start, velocities=self.velocities, dt=self.dt)

    def max_speed(self):
        return float(np.max(np.hypot(self.velocities[:, 0], self.velocities[:, 1])))


@dataclass(frozen=True, eq=False)
class StationLayout:
    stations: np.ndarray

    def __post_init__(self):
        stations = _frozen(np.asarray(self.stations, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "stations", stations)
        if not np.all(np.isfinite(stations)):
            raise ValueError("station layout holds non-finite values")

    @property
    def num_stations(self):
        return len(self.stations)

    def validate(self, eps_geo=1e-6, min_stations=3):
        """Check the layout invariants: enough stations, none on the AP, pairwise distinct."""
        if self.num_stations < min_stations:
            raise InsufficientStations("layout", self.num_stations, min_stations)
        ranges = np.hypot(self.stations[:, 0], self.stations[:, 1])
        if np.any(ranges < eps_geo):
            m = int(np.argmin(ranges))
            raise DegenerateGeometry("station coincides with the transmitter", station=m)
        gaps = np.linalg.norm(self.stations[:, None, :] - self.stations[None, :, :], axis=-1)
        gaps[np.diag_indices(self.num_stations)] = np.inf
        if np.any(gaps < eps_geo):
            raise DegenerateGeometry("two stations coincide")
        return self

    def positions(self):
        return [Position2D(float(x), float(y)) for x, y in self.stations]


@dataclass(frozen=True, eq=False)
class DopplerMatrix:
    """M x (N-1) Doppler frequencies (Hz) with an availability mask.

    Unavailable entries hold 0.0. A column with no available station at all
    is a gap (nothing measured in that interval).
    """
    values: np.ndarray
    availability: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DimensionMismatch(f"Doppler matrix must be 2-D, got shape {values.shape}")
        availability = np.array(self.availability, dtype=bool)
        if availability.shape != values.shape:
            raise DimensionMismatch(
                f"availability mask shape {availability.shape} != values shape {values.shape}"
            )
        values = np.where(availability, values, 0.0)
        if not np.all(np.isfinite(values)):
            raise DimensionMismatch("Doppler matrix holds non-finite available entries")
        values.setflags(write=False)
        availability.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "availability", availability)

    @classmethod
    def full(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(values=values, availability=np.ones(values.shape, dtype=bool))

    @property
    def shape(self):
        return self.values.shape

    @property
    def num_stations(self):
        return self.values.shape[0]

    @property
    def num_intervals(self):
        return self.values.shape[1]

    def row(self, m):
        return self.values[m], self.availability[m]

    def gap_columns(self):
        return ~np.any(self.availability, axis=0)

    def validate(self, min_stations=3, max_abs=None):
        """Every non-gap column needs `min_stations` available entries; optional magnitude bound."""
        counts = self.availability.sum(axis=0)
        short = np.flatnonzero((counts > 0) & (counts < min_stations))
        if len(short):
            n = int(short[0])
            raise InsufficientStations(n, int(counts[n]), min_stations)
        if max_abs is not None and np.any(np.abs(self.values) > max_abs):
            m, n = np.argwhere(np.abs(self.values) > max_abs)[0]
            raise DimensionMismatch(f"|Doppler| at ({m}, {n}) exceeds bound {max_abs:.2f} Hz")
        return self

    def with_availability(self, availability):
        return DopplerMatrix(values=self.values, availability=np.asarray(availability, dtype=bool))


def positions_of(traj):
    """Instant positions p_1..p_N as an (N, 2) array: p_n = p_{n-1} + v_{n-1} dt."""
    steps = np.cumsum(traj.velocities * traj.dt, axis=0)
    return np.vstack([traj.start[None, :], traj.start[None, :] + steps])


def doppler_terms(points, velocities, stations, wavelength):
    """
    Bistatic Doppler arithmetic shared by every caller (no degeneracy checks).

    Args:
        points, velocities: arrays of shape (..., 2).
        stations: array of shape (..., M, 2), broadcastable against points[..., None, :].

    Returns:
        ndarray: (..., M) Doppler frequencies in Hz.
    """
    p = np.asarray(points, dtype=float)[..., None, :]
    v = np.asarray(velocities, dtype=float)[..., None, :]
    to_tx = -p
    to_rx = np.asarray(stations, dtype=float) - p
    r_tx = np.hypot(to_tx[..., 0], to_tx[..., 1])
    r_rx = np.hypot(to_rx[..., 0], to_rx[..., 1])
    proj_tx = (to_tx[..., 0] * v[..., 0] + to_tx[..., 1] * v[..., 1]) / r_tx
    proj_rx = (to_rx[..., 0] * v[..., 0] + to_rx[..., 1] * v[..., 1]) / r_rx
    return (proj_tx + proj_rx) / wavelength


def check_geometry(points, stations, eps_geo=1e-6):
    """Raise DegenerateGeometry if a point sits on the transmitter or on a station."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    stations = np.asarray(stations, dtype=float).reshape(-1, 2)
    r_tx = np.hypot(points[:, 0], points[:, 1])
    if np.any(r_tx < eps_geo):
        raise DegenerateGeometry("target coincides with the transmitter", instant=int(np.argmin(r_tx)))
    gaps = stations[:, None, :] - points[None, :, :]
    r_rx = np.hypot(gaps[..., 0], gaps[..., 1])
    if np.any(r_rx < eps_geo):
        m, k = np.unravel_index(int(np.argmin(r_rx)), r_rx.shape)
        raise DegenerateGeometry("target coincides with a station", station=int(m), instant=int(k))


def bistatic_doppler(points, velocities, stations, wavelength, eps_geo=1e-6):
    """
    Doppler frequencies for K target states at M stations.

    Args:
        points (ndarray): (K, 2) target positions.
        velocities (ndarray): (K, 2) target velocities.
        stations (ndarray): (M, 2) receive-station positions.

    Returns:
        ndarray: (M, K) Doppler frequencies in Hz.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    velocities = np.asarray(velocities, dtype=float).reshape(-1, 2)
    stations = np.asarray(stations, dtype=float).reshape(-1, 2)
    check_geometry(points, stations, eps_geo)
    return doppler_terms(points, velocities, stations[None, :, :], wavelength).T


def doppler_frequency(p_target, v, p_rx, scene):
    """Doppler frequency (Hz) at one station for one target state."""
    p = p_target.as_array() if isinstance(p_target, Position2D) else p_target
    vel = v.as_array() if isinstance(v, Velocity2D) else v
    rx = p_rx.as_array() if isinstance(p_rx, Position2D) else p_rx
    return float(bistatic_doppler(p, vel, rx, scene.wavelength, scene.eps_geo)[0, 0])


def model_doppler_matrix(traj, layout, scene):
    """Model Doppler matrix Z(J, R): entry (m, n) uses p_n and v_n of interval n."""
    positions = positions_of(traj)[:-1]
    values = bistatic_doppler(positions, traj.velocities, layout.stations, scene.wavelength, scene.eps_geo)
    return DopplerMatrix.full(values)


def residual_matrix(measured, model):
    """E = Z~ - Z restricted to entries available in the measurement (zeros elsewhere)."""
    if measured.shape != model.shape:
        raise DimensionMismatch(f"measured shape {measured.shape} != model shape {model.shape}")
    mask = measured.availability & model.availability
    return np.where(mask, measured.values - model.values, 0.0), mask


def mse(measured, model):
    """Mean squared Doppler error over available entries (Hz^2)."""
    residual, mask = residual_matrix(measured, model)
    count = int(mask.sum())
    if count == 0:
        return 0.0
    return float(np.sum(residual ** 2) / count)


def orthogonal_map(theta, reflect=False):
    """2x2 orthogonal matrix: optional reflection y -> -y, then rotation by theta."""
    c, s = math.cos(theta), math.sin(theta)
    rotation = np.array([[c, -s], [s, c]])
    if reflect:
        return rotation @ np.diag([1.0, -1.0])
    return rotation


def rotate_scene(layout, traj, theta, reflect=False):
    """Apply one orthogonal map about the origin to stations, start point and velocities."""
    q = orthogonal_map(theta, reflect)
    new_layout = StationLayout(stations=layout.stations @ q.T)
    new_traj = Trajectory(start=q @ traj.start, velocities=traj.velocities @ q.T, dt=traj.dt)
    return new_layout, new_traj
