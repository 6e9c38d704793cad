# scripts/evaluate_runs.py
"""
Scoring of solver output against ground truth.

Doppler measurements cannot see rotations or reflections about the AP, so
every estimate is first brought into the truth frame by the orthogonal map
that best matches the station positions; errors are then plain Euclidean
distances. Station estimates from many runs are combined with a density
filter (DBSCAN core points) followed by a mean.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.cluster import DBSCAN

from errors import DimensionMismatch, LayoutMismatch
from motion_geometry import positions_of, rotate_scene

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GaugeAlignment:
    theta: float
    reflect: bool
    layout: object
    trajectory: object
    residual: float


@dataclass(eq=False)
class RunReport:
    run_id: str
    tracking_errors: np.ndarray
    localization_errors: np.ndarray
    tracking_median: float
    localization_median: float
    tracking_rmse: float
    final_mse: float
    gauge: tuple
    raw_tracking_median: float = math.nan
    raw_localization_median: float = math.nan
    coarse_tracking_median: float = math.nan
    coarse_localization_median: float = math.nan
    iterations: int = 0
    converged: bool = False
    mse_trace: list = field(default_factory=list)

    def to_dict(self):
        return {
            "run_id": self.run_id,
            "tracking_median_m": self.tracking_median,
            "localization_median_m": self.localization_median,
            "tracking_rmse_m": self.tracking_rmse,
            "raw_tracking_median_m": self.raw_tracking_median,
            "raw_localization_median_m": self.raw_localization_median,
            "coarse_tracking_median_m": self.coarse_tracking_median,
            "coarse_localization_median_m": self.coarse_localization_median,
            "final_mse_hz2": self.final_mse,
            "gauge": {"theta": self.gauge[0], "reflect": bool(self.gauge[1])},
            "iterations": self.iterations,
            "converged": self.converged,
            "mse_trace": [float(g) for g in self.mse_trace],
            "tracking_errors_m": [float(e) for e in self.tracking_errors],
            "localization_errors_m": [float(e) for e in self.localization_errors],
        }


@dataclass(eq=False)
class AggregateReport:
    stations: np.ndarray          # (M, 2) aggregated positions in the truth frame
    mean_error_before: float      # mean per-run localization error
    mean_error_after: float       # mean error of the aggregated stations
    median_error_before: float
    kept: list                    # points kept per station by the density filter
    runs: int
    density_filter: bool = True

    def to_dict(self):
        return {
            "stations": [[float(x), float(y)] for x, y in self.stations],
            "mean_error_before_m": self.mean_error_before,
            "mean_error_after_m": self.mean_error_after,
            "median_error_before_m": self.median_error_before,
            "kept_per_station": [int(k) for k in self.kept],
            "runs": self.runs,
            "density_filter": self.density_filter,
        }


def procrustes_map(estimated, truth):
    """Orthogonal 2x2 Q (rotation or reflection) minimizing sum |Q e_m - t_m|^2."""
    u, _, vt = np.linalg.svd(np.asarray(truth).T @ np.asarray(estimated))
    return u @ vt


def gauge_align(est_layout, est_traj, true_layout, true_traj=None):
    """
    Bring the estimate into the truth frame.

    Returns:
        GaugeAlignment: theta and reflect such that Q = R(theta) @ diag(1, -1 if reflect),
        the mapped layout and trajectory, and the remaining station residual.
    """
    if est_layout.num_stations != true_layout.num_stations:
        raise LayoutMismatch(
            f"estimated layout has {est_layout.num_stations} stations, truth has {true_layout.num_stations}"
        )
    if est_layout.num_stations < 2:
        raise LayoutMismatch("gauge alignment needs at least 2 stations")
    q = procrustes_map(est_layout.stations, true_layout.stations)
    reflect = bool(np.linalg.det(q) < 0)
    theta = math.atan2(q[1, 0], q[0, 0])
    layout, traj = rotate_scene(est_layout, est_traj, theta, reflect)
    residual = float(np.sum((layout.stations - true_layout.stations) ** 2))
    return GaugeAlignment(theta=theta, reflect=reflect, layout=layout, trajectory=traj, residual=residual)


def _errors(est_layout, est_traj, true_layout, true_traj):
    tracking = np.linalg.norm(positions_of(est_traj) - positions_of(true_traj), axis=1)
    localization = np.linalg.norm(est_layout.stations - true_layout.stations, axis=1)
    return tracking, localization


def evaluate_run(result, scn, run_id="run"):
    """Gauge-aligned tracking and localization errors for one solver result."""
    if result.trajectory.num_instants != scn.true_traj.num_instants:
        raise DimensionMismatch(
            f"estimated trajectory has {result.trajectory.num_instants} instants, "
            f"truth has {scn.true_traj.num_instants}"
        )
    aligned = gauge_align(result.layout, result.trajectory, scn.true_layout, scn.true_traj)
    tracking, localization = _errors(aligned.layout, aligned.trajectory, scn.true_layout, scn.true_traj)
    raw_tracking, raw_localization = _errors(result.layout, result.trajectory, scn.true_layout, scn.true_traj)

    coarse_tracking = coarse_localization = math.nan
    if result.coarse_layout is not None and result.coarse_trajectory is not None:
        coarse = gauge_align(result.coarse_layout, result.coarse_trajectory, scn.true_layout, scn.true_traj)
        ct, cl = _errors(coarse.layout, coarse.trajectory, scn.true_layout, scn.true_traj)
        coarse_tracking, coarse_localization = float(np.median(ct)), float(np.median(cl))

    report = RunReport(
        run_id=run_id,
        tracking_errors=tracking,
        localization_errors=localization,
        tracking_median=float(np.median(tracking)),
        localization_median=float(np.median(localization)),
        tracking_rmse=float(np.sqrt(np.mean(tracking ** 2))),
        final_mse=float(result.mse_trace[-1]),
        gauge=(aligned.theta, aligned.reflect),
        raw_tracking_median=float(np.median(raw_tracking)),
        raw_localization_median=float(np.median(raw_localization)),
        coarse_tracking_median=coarse_tracking,
        coarse_localization_median=coarse_localization,
        iterations=result.iterations,
        converged=result.converged,
        mse_trace=list(result.mse_trace),
    )
    logger.info(
        f"{run_id}: tracking median {report.tracking_median:.3f} m, "
        f"localization median {report.localization_median:.3f} m"
    )
    return report


def cdf_table(errors):
    """Empirical CDF: sorted errors against the cumulative fraction i/n."""
    errors = np.sort(np.asarray(errors, dtype=float).reshape(-1))
    n = len(errors)
    return pd.DataFrame({"error_m": errors, "cum_fraction": np.arange(1, n + 1) / n if n else []})


def density_core(points, eps=1.0, min_pts=3):
    """Indices of points with at least min_pts neighbours within eps; all indices when none qualify."""
    points = np.asarray(points, dtype=float)
    clustering = DBSCAN(eps=eps, min_samples=min_pts + 1).fit(points)
    core = np.sort(clustering.core_sample_indices_)
    if len(core) == 0:
        return np.arange(len(points))
    return core


def aggregate_stations(runs, eps=1.0, min_pts=3, density_filter=True):
    """
    Combine station estimates over runs that share one true layout.

    Args:
        runs (list): (SolverResult, Scenario) pairs.

    Raises:
        LayoutMismatch: fewer than 2 runs, or runs over different true layouts.
    """
    if len(runs) < 2:
        raise LayoutMismatch(f"aggregation needs at least 2 runs, got {len(runs)}")
    truth = runs[0][1].true_layout
    aligned = []
    for result, scn in runs:
        if scn.true_layout.stations.shape != truth.stations.shape or not np.allclose(
                scn.true_layout.stations, truth.stations, atol=1e-9):
            raise LayoutMismatch("runs do not share the same true station layout")
        aligned.append(gauge_align(result.layout, result.trajectory, truth).layout.stations)
    estimates = np.stack(aligned)  # (R, M, 2)

    stations, kept = [], []
    for m in range(truth.num_stations):
        points = estimates[:, m, :]
        keep = density_core(points, eps, min_pts) if density_filter else np.arange(len(points))
        stations.append(points[keep].mean(axis=0))
        kept.append(len(keep))
    stations = np.array(stations)

    before = np.linalg.norm(estimates - truth.stations[None, :, :], axis=-1)
    after = np.linalg.norm(stations - truth.stations, axis=-1)
    report = AggregateReport(
        stations=stations,
        mean_error_before=float(before.mean()),
        mean_error_after=float(after.mean()),
        median_error_before=float(np.median(before)),
        kept=kept,
        runs=len(runs),
        density_filter=density_filter,
    )
    logger.info(
        f"Aggregated {len(runs)} runs: mean localization error "
        f"{report.mean_error_before:.3f} m -> {report.mean_error_after:.3f} m"
    )
    return report

