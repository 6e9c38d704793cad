# scripts/ekf_reconstructor.py
"""
Constant-velocity EKF over the state [x, y, vx, vy] with the bistatic Doppler
measurement model.

Given a starting point, a station layout and a measured Doppler matrix the
filter reconstructs one velocity per interval; the position track is then
re-derived from the starting point by forward Euler. The filter core is
batched: `reconstruct_batch` runs many (starting point, layout) candidates in
lock-step, which is what the coarse search needs.
"""

import logging
from dataclasses import dataclass

import numpy as np

from errors import DegenerateGeometry, DimensionMismatch, SingularInnovation
from motion_geometry import Trajectory, bistatic_doppler, check_geometry, doppler_terms

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EkfState:
    s: np.ndarray  # [x, y, vx, vy]
    P: np.ndarray  # 4x4 covariance

    def __post_init__(self):
        object.__setattr__(self, "s", np.asarray(self.s, dtype=float).reshape(4))
        object.__setattr__(self, "P", np.asarray(self.P, dtype=float).reshape(4, 4))

    @property
    def position(self):
        return self.s[:2]

    @property
    def velocity(self):
        return self.s[2:]

    def is_valid(self, tol=1e-9):
        """P symmetric and positive semi-definite within tolerance."""
        if not np.allclose(self.P, self.P.T, atol=1e-12, rtol=0):
            return False
        return bool(np.min(np.linalg.eigvalsh(self.P)) >= -tol)


@dataclass(frozen=True, eq=False)
class MeasurementSlice:
    z: np.ndarray
    availability: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).reshape(-1)
        availability = np.asarray(self.availability, dtype=bool).reshape(-1)
        if z.shape != availability.shape:
            raise DimensionMismatch("measurement and availability lengths differ")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "availability", availability)

    @property
    def indices(self):
        return np.flatnonzero(self.availability)


def transition_matrix(dt):
    F = np.eye(4)
    F[0, 2] = dt
    F[1, 3] = dt
    return F


def process_noise(cfg, dt):
    """Process covariance W; the position-velocity cross terms use the position intensities."""
    W = np.zeros((4, 4))
    W[0, 0] = cfg.sigma_x ** 2 * dt ** 3 / 3
    W[1, 1] = cfg.sigma_y ** 2 * dt ** 3 / 3
    W[0, 2] = W[2, 0] = cfg.sigma_x ** 2 * dt ** 2 / 2
    W[1, 3] = W[3, 1] = cfg.sigma_y ** 2 * dt ** 2 / 2
    W[2, 2] = cfg.sigma_vx ** 2 * dt
    W[3, 3] = cfg.sigma_vy ** 2 * dt
    return W


def doppler_partials(points, velocities, stations, wavelength):
    """
    Closed-form partial derivatives of the Doppler frequency.

    Args:
        points, velocities: arrays of shape (..., 2).
        stations: array of shape (..., M, 2), broadcastable against points[..., None, :].

    Returns:
        ndarray: (..., M, 4) with columns [df/dx, df/dy, df/dvx, df/dvy].
    """
    p = np.asarray(points, dtype=float)[..., None, :]
    v = np.asarray(velocities, dtype=float)[..., None, :]
    st = np.asarray(stations, dtype=float)

    a = -p  # towards the transmitter
    b = st - p
    r_a = np.hypot(a[..., 0], a[..., 1])
    r_b = np.hypot(b[..., 0], b[..., 1])
    cross_a = a[..., 0] * v[..., 1] - a[..., 1] * v[..., 0]
    cross_b = b[..., 0] * v[..., 1] - b[..., 1] * v[..., 0]

    d_dx = (a[..., 1] * cross_a / r_a ** 3 + b[..., 1] * cross_b / r_b ** 3) / wavelength
    d_dy = -(a[..., 0] * cross_a / r_a ** 3 + b[..., 0] * cross_b / r_b ** 3) / wavelength
    d_dvx = (a[..., 0] / r_a + b[..., 0] / r_b) / wavelength
    d_dvy = (a[..., 1] / r_a + b[..., 1] / r_b) / wavelength
    d_dx, d_dy, d_dvx, d_dvy = np.broadcast_arrays(d_dx, d_dy, d_dvx, d_dvy)
    return np.stack([d_dx, d_dy, d_dvx, d_dvy], axis=-1)


def predict(state, cfg, dt):
    F = transition_matrix(dt)
    return EkfState(s=F @ state.s, P=F @ state.P @ F.T + process_noise(cfg, dt))


def measurement_fn(state, layout, scene):
    """Predicted Doppler (Hz) at every station for the state's position and velocity."""
    return bistatic_doppler(state.position, state.velocity, layout.stations, scene.wavelength, scene.eps_geo)[:, 0]


def measurement_jacobian(state, layout, scene):
    """M x 4 Jacobian of measurement_fn."""
    measurement_fn(state, layout, scene)  # raises on degenerate geometry
    return doppler_partials(state.position, state.velocity, layout.stations, scene.wavelength)


def update(state, measurement, layout, scene, cfg):
    """Kalman update restricted to the available stations."""
    idx = measurement.indices
    if len(idx) == 0:
        return state
    stations = layout.stations[idx]
    h = bistatic_doppler(state.position, state.velocity, stations, scene.wavelength, scene.eps_geo)[:, 0]
    D = doppler_partials(state.position, state.velocity, stations, scene.wavelength)
    S = D @ state.P @ D.T + cfg.sigma_fd ** 2 * np.eye(len(idx))
    condition = np.linalg.cond(S)
    if not condition <= cfg.max_condition:
        raise SingularInnovation(f"innovation covariance condition number {condition:.3g} exceeds {cfg.max_condition:.3g}")
    K = np.linalg.solve(S, D @ state.P).T
    s = state.s + K @ (measurement.z[idx] - h)
    P = (np.eye(4) - K @ D) @ state.P
    return EkfState(s=s, P=(P + P.T) / 2)


def _check_measured(measured, num_stations):
    if measured.num_stations != num_stations:
        raise DimensionMismatch(
            f"Doppler matrix has {measured.num_stations} rows but the layout has {num_stations} stations"
        )


def reconstruct_batch(starts, stations, measured, cfg, scene, strict=False, trace=None):
    """
    Run the filter for B candidates at once.

    Args:
        starts (ndarray): (B, 2) starting points.
        stations (ndarray): (B, M, 2) station layouts.
        measured (DopplerMatrix): M x (N-1) measurements shared by all candidates.
        strict (bool): raise on the first degenerate or singular step instead of
            flagging the candidate as failed.
        trace (list | None): when given, receives (n, s, trace(P)) of candidate 0 per instant.

    Returns:
        (ndarray, ndarray): velocities (B, N-1, 2) and an ok-mask (B,).
    """
    starts = np.asarray(starts, dtype=float).reshape(-1, 2)
    stations = np.asarray(stations, dtype=float)
    batch, num_stations = stations.shape[0], stations.shape[1]
    _check_measured(measured, num_stations)

    F = transition_matrix(scene.dt)
    W = process_noise(cfg, scene.dt)
    P0 = np.diag(np.asarray(cfg.p0_diag, dtype=float))
    noise_var = cfg.sigma_fd ** 2
    eye4 = np.eye(4)

    s = np.zeros((batch, 4))
    s[:, :2] = starts
    s[:, 2:] = np.asarray(cfg.v_init, dtype=float)
    P = np.broadcast_to(P0, (batch, 4, 4)).copy()
    ok = np.ones(batch, dtype=bool)
    velocities = np.zeros((batch, measured.num_intervals, 2))

    for n in range(measured.num_intervals):
        if n > 0:
            s = s @ F.T
            P = F @ P @ F.T + W

        idx = np.flatnonzero(measured.availability[:, n])
        if len(idx):
            st = stations[:, idx, :]
            if strict:
                try:
                    check_geometry(s[0, :2], st[0], scene.eps_geo)
                except DegenerateGeometry as e:
                    station = int(idx[e.station]) if e.station is not None else None
                    raise DegenerateGeometry("filter state coincides with the transmitter or a station",
                                             station=station, instant=n) from e
            gaps = st - s[:, None, :2]
            degenerate = (np.hypot(s[:, 0], s[:, 1]) < scene.eps_geo) | np.any(
                np.hypot(gaps[..., 0], gaps[..., 1]) < scene.eps_geo, axis=1)
            s[degenerate, :2] += 10 * scene.eps_geo  # such candidates are discarded below

            with np.errstate(all="ignore"):
                h = doppler_terms(s[:, :2], s[:, 2:], st, scene.wavelength)
                D = doppler_partials(s[:, :2], s[:, 2:], st, scene.wavelength)
                S = D @ P @ np.swapaxes(D, 1, 2) + noise_var * np.eye(len(idx))
                finite = np.all(np.isfinite(S), axis=(1, 2))
                S[~finite] = np.eye(len(idx))
                condition = np.linalg.cond(S)
            singular = ~finite | ~(condition <= cfg.max_condition)
            if strict and singular[0]:
                raise SingularInnovation(
                    f"interval {n}: innovation covariance condition number {condition[0]:.3g} "
                    f"exceeds {cfg.max_condition:.3g}"
                )
            S[singular] = np.eye(len(idx))
            D[singular] = 0.0

            with np.errstate(all="ignore"):
                K = np.swapaxes(np.linalg.solve(S, D @ P), 1, 2)
                innovation = measured.values[idx, n][None, :] - h
                s = s + np.einsum("bij,bj->bi", K, innovation)
                P = (eye4 - K @ D) @ P
                P = (P + np.swapaxes(P, 1, 2)) / 2

            bad = degenerate | singular | ~np.all(np.isfinite(s), axis=1) | ~np.all(np.isfinite(P), axis=(1, 2))
            if strict and bad[0]:
                raise SingularInnovation(f"interval {n}: filter diverged to non-finite values")
            if np.any(bad):
                ok &= ~bad
                s[bad, :2] = starts[bad]
                s[bad, 2:] = 0.0
                P[bad] = P0

        velocities[:, n] = s[:, 2:]
        if trace is not None:
            trace.append((n, s[0].copy(), float(np.trace(P[0]))))

    return velocities, ok


def reconstruct_trajectory(p1, layout, measured, cfg, scene, trace=None):
    """
    Reconstruct a trajectory from a starting point, a layout and measured Doppler.

    The velocity of interval n is the filtered velocity at instant n; positions
    follow from p1 by forward Euler, not from the filter's position states.
    """
    start = p1.as_array() if hasattr(p1, "as_array") else np.asarray(p1, dtype=float)
    velocities, _ = reconstruct_batch(
        start[None, :], layout.stations[None, :, :], measured, cfg, scene, strict=True, trace=trace
    )
    return Trajectory(start=start, velocities=velocities[0], dt=scene.dt)


