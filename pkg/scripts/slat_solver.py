# scripts/slat_solver.py
"""
Joint station localization and target tracking from Doppler alone.

Stages:
    1. Coarse search over a grid of starting points x random station layouts;
       every pair is scored by EKF reconstruction + MSE.
    2. Alternate refinement: stations one by one (ray-fit seed + LM), then the
       starting point (LM with velocities fixed, EKF re-reconstruction),
       repeated until the MSE stops improving.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from config import EkfConfig, LmConfig, SceneConfig, SolverConfig
from ekf_reconstructor import doppler_partials, reconstruct_batch, reconstruct_trajectory
from errors import (
    AllCandidatesDegenerate,
    CoarseFailed,
    DegenerateGeometry,
    GeometryError,
    RefineFailed,
    SingularNormalMatrix,
    SlowTarget,
)
from motion_geometry import (
    StationLayout,
    Trajectory,
    check_geometry,
    doppler_terms,
    model_doppler_matrix,
    mse,
    positions_of,
)

logger = logging.getLogger(__name__)

COARSE_CHUNK = 1024
MAX_DAMPING = 1e12
DAMPING_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class CandidateSets:
    p1_candidates: np.ndarray      # (I, 2)
    layout_candidates: np.ndarray  # (J, M, 2)

    def __post_init__(self):
        p1 = np.asarray(self.p1_candidates, dtype=float).reshape(-1, 2)
        layouts = np.asarray(self.layout_candidates, dtype=float)
        if layouts.ndim == 2:
            layouts = layouts[None, :, :]
        if len(p1) == 0 or len(layouts) == 0:
            raise ValueError("candidate sets must be non-empty")
        object.__setattr__(self, "p1_candidates", p1)
        object.__setattr__(self, "layout_candidates", layouts)

    def within(self, half_width):
        """True when every candidate lies in the square [-half_width, half_width]^2."""
        return bool(np.all(np.abs(self.p1_candidates) <= half_width)
                    and np.all(np.abs(self.layout_candidates) <= half_width))

    def with_truth(self, start, layout):
        """Candidate sets with the given pair prepended."""
        return CandidateSets(
            p1_candidates=np.vstack([np.asarray(start, dtype=float)[None, :], self.p1_candidates]),
            layout_candidates=np.concatenate([layout.stations[None, :, :], self.layout_candidates]),
        )


@dataclass(frozen=True)
class DirectionSet:
    betas: tuple
    valid: bool


@dataclass(frozen=True, eq=False)
class CoarseResult:
    start: np.ndarray
    layout: StationLayout
    trajectory: Trajectory
    mse: float
    index: tuple
    skipped: int


@dataclass(eq=False)
class SolverResult:
    layout: StationLayout
    trajectory: Trajectory
    mse_trace: list
    coarse_mse: float
    iterations: int
    converged: bool
    stage: str = "refined"
    coarse_layout: StationLayout | None = None
    coarse_trajectory: Trajectory | None = None
    skipped_candidates: int = 0
    notes: list = field(default_factory=list)

    @property
    def final_mse(self):
        return self.mse_trace[-1]


def build_candidate_sets(solver_cfg, scene, num_stations):
    """
    Uniform start-point grid over the arena and seeded random annulus layouts.

    Doppler cannot tell a scene from its rotations and reflections about the
    AP, so layouts are drawn in one gauge: station 0 on the +x axis, station 1
    in the upper half-plane.
    """
    half = scene.arena_size / 2
    steps = int(math.floor(half / solver_cfg.grid_spacing + 1e-9))
    axis = solver_cfg.grid_spacing * np.arange(-steps, steps + 1)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    p1 = np.column_stack([gx.ravel(), gy.ravel()])

    rng = np.random.default_rng(solver_cfg.layout_seed)
    radii = rng.uniform(solver_cfg.r_min, solver_cfg.r_max, size=(solver_cfg.n_layouts, num_stations))
    angles = rng.uniform(0.0, 2 * np.pi, size=(solver_cfg.n_layouts, num_stations))
    angles[:, 0] = 0.0
    if num_stations > 1:
        angles[:, 1] %= np.pi
    layouts = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=-1)
    return CandidateSets(p1_candidates=p1, layout_candidates=layouts)


def _batch_mse(starts, velocities, stations, measured, scene):
    """MSE of each candidate's re-derived trajectory; non-finite or degenerate -> inf."""
    steps = np.cumsum(velocities * scene.dt, axis=1)
    points = np.concatenate([starts[:, None, :], starts[:, None, :] + steps[:, :-1]], axis=1)
    with np.errstate(all="ignore"):
        model = doppler_terms(points, velocities, stations[:, None, :, :], scene.wavelength)  # (B, K, M)
        gaps_tx = np.hypot(points[..., 0], points[..., 1])
        gaps_rx = np.hypot(stations[:, None, :, 0] - points[..., None, 0], stations[:, None, :, 1] - points[..., None, 1])
        mask = measured.availability.T[None, :, :]
        residual = np.where(mask, measured.values.T[None, :, :] - model, 0.0)
        count = max(int(measured.availability.sum()), 1)
        g = np.sum(residual ** 2, axis=(1, 2)) / count
    degenerate = np.any(gaps_tx < scene.eps_geo, axis=1) | np.any(gaps_rx < scene.eps_geo, axis=(1, 2))
    g[degenerate | ~np.isfinite(g)] = np.inf
    return g


def coarse_candidates(candidates, measured, ekf_cfg, scene, keep=1):
    """
    Score every (starting point, layout) pair and keep the `keep` best, one per layout.

    Pairs are ordered start-point-major; ties keep the lowest (i, j). The
    returned list is sorted by score.
    """
    p1 = candidates.p1_candidates
    layouts = candidates.layout_candidates
    num_p1, num_layouts = len(p1), len(layouts)
    pair_i, pair_j = np.meshgrid(np.arange(num_p1), np.arange(num_layouts), indexing="ij")
    pair_i, pair_j = pair_i.ravel(), pair_j.ravel()

    scores = np.full(len(pair_i), np.inf)
    for lo in range(0, len(pair_i), COARSE_CHUNK):
        hi = min(lo + COARSE_CHUNK, len(pair_i))
        starts = p1[pair_i[lo:hi]]
        stations = layouts[pair_j[lo:hi]]
        velocities, ok = reconstruct_batch(starts, stations, measured, ekf_cfg, scene)
        g = _batch_mse(starts, velocities, stations, measured, scene)
        g[~ok] = np.inf
        scores[lo:hi] = g

    skipped = int(np.sum(~np.isfinite(scores)))
    if skipped == len(scores):
        raise AllCandidatesDegenerate(f"all {len(scores)} candidate pairs were degenerate")
    if skipped:
        logger.warning(f"Coarse search skipped {skipped}/{len(scores)} degenerate candidate pairs")

    picked, seen = [], set()
    for best in np.argsort(scores, kind="stable"):
        if len(picked) == keep or not np.isfinite(scores[best]):
            break
        i, j = int(pair_i[best]), int(pair_j[best])
        if j in seen:
            continue
        seen.add(j)
        layout = StationLayout(stations=layouts[j])
        try:
            trajectory = reconstruct_trajectory(p1[i], layout, measured, ekf_cfg, scene)
        except GeometryError as e:
            if not picked:
                raise
            logger.debug(f"Coarse pair ({i}, {j}) dropped as a start ({e})")
            continue
        g_best = mse(measured, model_doppler_matrix(trajectory, layout, scene))
        picked.append(CoarseResult(start=p1[i].copy(), layout=layout, trajectory=trajectory, mse=g_best,
                                   index=(i, j), skipped=skipped))
    logger.info(f"Coarse search picked start #{picked[0].index[0]} and layout #{picked[0].index[1]} "
                f"with g={picked[0].mse:.4g} Hz^2")
    return picked


def coarse_search(candidates, measured, ekf_cfg, scene):
    """The single best (starting point, layout) pair."""
    return coarse_candidates(candidates, measured, ekf_cfg, scene, keep=1)[0]



def beta_candidates(p, v, f_meas, scene, v_min=0.05, clamp_eps=0.02):
    """Angles from the velocity to the target->station direction consistent with one Doppler value."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    speed = math.hypot(v[0], v[1])
    if speed <= v_min:
        raise SlowTarget(f"speed {speed:.3g} m/s <= v_min {v_min} m/s")
    r_tx = math.hypot(p[0], p[1])
    if r_tx < scene.eps_geo:
        raise DegenerateGeometry("target coincides with the transmitter")

    towards_tx = -(p[0] * v[0] + p[1] * v[1]) / r_tx
    c = (scene.wavelength * f_meas - towards_tx) / speed
    if abs(c) > 1.0 + clamp_eps:
        return DirectionSet(betas=(), valid=False)
    c = min(1.0, max(-1.0, c))
    beta = math.acos(c)
    if beta < 1e-12 or math.pi - beta < 1e-12:
        return DirectionSet(betas=(beta,), valid=True)
    return DirectionSet(betas=(beta, -beta), valid=True)


def direction_vector(v, beta):
    heading = math.atan2(v[1], v[0])
    return np.array([math.cos(heading + beta), math.sin(heading + beta)])


def _within_prior(u, prior):
    """Bearing of u (degrees, world frame) inside the [lo, hi] interval, with wrap-around."""
    lo, hi = prior
    bearing = math.degrees(math.atan2(u[1], u[0])) % 360.0
    lo, hi = lo % 360.0, hi % 360.0
    if lo <= hi:
        return lo <= bearing <= hi
    return bearing >= lo or bearing <= hi


def init_station_position(traj, measured_row, scene, stride=10, v_min=0.05, clamp_eps=0.02,
                          aoa_prior=None, max_condition=1e10):
    """
    Point with the least summed squared distance to the candidate station lines.

    measured_row is (values, availability) for one station; every `stride`-th
    interval contributes the lines through p_n along each admissible direction.
    """
    values, available = measured_row
    points = positions_of(traj)
    A = np.zeros((2, 2))
    b = np.zeros(2)
    used = 0
    for n in range(0, len(traj.velocities), stride):
        if not available[n]:
            continue
        v = traj.velocities[n]
        try:
            directions = beta_candidates(points[n], v, values[n], scene, v_min, clamp_eps)
        except (SlowTarget, DegenerateGeometry):
            continue
        if not directions.valid:
            continue
        contributed = False
        for beta in directions.betas:
            u = direction_vector(v, beta)
            if aoa_prior is not None and not _within_prior(u, aoa_prior):
                continue
            projector = np.eye(2) - np.outer(u, u)
            A += projector
            b += projector @ points[n]
            contributed = True
        used += contributed

    if used < 2:
        raise SingularNormalMatrix(f"only {used} usable instants for the ray fit")
    condition = np.linalg.cond(A)
    if not condition <= max_condition:
        raise SingularNormalMatrix(f"ray normal matrix condition number {condition:.3g}")
    return np.linalg.solve(A, b)


def station_jacobian(traj, p_rx, scene):
    """(N-1) x 2 Jacobian of e_m = z~_m - z_m with respect to the station position."""
    p_rx = np.asarray(p_rx, dtype=float)
    points = positions_of(traj)[:-1]
    try:
        check_geometry(points, p_rx, scene.eps_geo)
    except DegenerateGeometry as e:
        raise DegenerateGeometry("station Jacobian undefined", instant=e.instant) from e
    d = p_rx[None, :] - points
    v = traj.velocities
    cross = d[:, 0] * v[:, 1] - d[:, 1] * v[:, 0]
    scale = cross / (scene.wavelength * np.hypot(d[:, 0], d[:, 1]) ** 3)
    return np.column_stack([scale * d[:, 1], -scale * d[:, 0]])


def _station_residual(traj, p_rx, measured_row, scene):
    values, available = measured_row
    points = positions_of(traj)[:-1]
    check_geometry(points, p_rx, scene.eps_geo)
    model = doppler_terms(points, traj.velocities, np.asarray(p_rx, dtype=float)[None, None, :],
                          scene.wavelength)[:, 0]
    e = np.where(available, values - model, 0.0)
    g = float(np.sum(e ** 2) / max(int(np.sum(available)), 1))
    return e, g


def station_mse(traj, p_rx, measured_row, scene):
    return _station_residual(traj, p_rx, measured_row, scene)[1]


def _damping_floor(G):
    """Smallest damping that keeps G^T G + mu I invertible in floating point."""
    return DAMPING_FLOOR * max(1.0, float(np.trace(G.T @ G)))


def _damped_step(G, e, mu):
    """Solve (G^T G + mu I) step = G^T e; None when the system is singular or the step non-finite."""
    try:
        step = np.linalg.solve(G.T @ G + mu * np.eye(G.shape[1]), G.T @ e)
    except np.linalg.LinAlgError:
        return None
    return step if np.all(np.isfinite(step)) else None


def refine_station(traj, p_rx_init, measured_row, lm, scene, max_range=None):
    """
    Levenberg-Marquardt on one station; the returned point never scores worse than the seed.

    A singular or non-finite step, or one landing farther than `max_range`
    from the AP, is rejected like any step that raises the cost.
    """
    _, available = measured_row
    p = np.asarray(p_rx_init, dtype=float).copy()
    e, g = _station_residual(traj, p, measured_row, scene)
    mu = lm.mu0
    iteration = 0
    for iteration in range(lm.max_iters):
        if g <= lm.g_tol:
            break
        G = station_jacobian(traj, p, scene) * available[:, None]
        floor = _damping_floor(G)
        mu = max(mu, floor)
        step = _damped_step(G, e, mu)
        g_new = np.inf
        if step is not None:
            candidate = p - step
            if max_range is None or math.hypot(candidate[0], candidate[1]) <= max_range:
                try:
                    e_new, g_new = _station_residual(traj, candidate, measured_row, scene)
                except DegenerateGeometry:
                    pass
        if g_new < g:
            p, e, g = candidate, e_new, g_new
            mu = max(mu * lm.mu_down, floor)
            if np.linalg.norm(step) < lm.step_tol:
                break
        else:
            mu *= lm.mu_up
            if mu > MAX_DAMPING:
                break
    logger.debug(f"Station refined to ({p[0]:.3f}, {p[1]:.3f}) with g_m={g:.4g} after {iteration + 1} iteration(s)")
    return p


def refine_all_stations(traj, layout_init, measured, lm, scene, solver_cfg=None):
    """
    Refine every station independently against its own measurement row.

    Each station is refined from the ray-fit seed and from its current position;
    the better of the two is kept. Neither seed nor iterate may leave the disc
    of radius 2 * r_max around the AP.
    """
    solver_cfg = solver_cfg or SolverConfig()
    max_range = 2 * solver_cfg.r_max
    refined, failures = [], []
    for m in range(layout_init.num_stations):
        row = measured.row(m)
        prior = solver_cfg.aoa_priors[m] if solver_cfg.aoa_priors else None
        seeds = []
        try:
            ray_seed = init_station_position(traj, row, scene, solver_cfg.stride, solver_cfg.v_min,
                                             solver_cfg.clamp_eps, aoa_prior=prior)
            if math.hypot(ray_seed[0], ray_seed[1]) <= max_range:
                seeds.append(ray_seed)
            else:
                logger.debug(f"Station {m}: ray-fit seed {np.round(ray_seed, 2)} out of range, dropped")
        except GeometryError as e:
            logger.debug(f"Station {m}: ray-fit seed unavailable ({e})")
        seeds.append(layout_init.stations[m])

        best, best_g = None, np.inf
        for seed in seeds:
            try:
                p = refine_station(traj, seed, row, lm, scene, max_range=max_range)
                g = station_mse(traj, p, row, scene)
            except (GeometryError, np.linalg.LinAlgError) as e:
                logger.debug(f"Station {m}: refinement from seed failed ({e})")
                continue
            if g < best_g:
                best, best_g = p, g
        if best is None:
            failures.append(m)
            continue
        refined.append(best)

    if failures:
        raise RefineFailed(f"station refinement failed for stations {failures}")
    return StationLayout(stations=np.array(refined))


def start_point_jacobian(traj, layout, scene):
    """
    Jacobian of vec(E_Z) with respect to p1, velocities held fixed.

    Rows follow column-major order over (m, n): row index = n * M + m.
    """
    points = positions_of(traj)[:-1]
    check_geometry(points, layout.stations, scene.eps_geo)
    partials = doppler_partials(points, traj.velocities, layout.stations[None, :, :], scene.wavelength)
    return -partials[..., :2].reshape(-1, 2)


def _objective(traj, layout, measured, scene):
    return mse(measured, model_doppler_matrix(traj, layout, scene))


def _start_point_step(traj, layout, measured, lm, scene, mu):
    """One damped step on p1 with velocities fixed; returns (new start, damping) or (None, damping)."""
    model = model_doppler_matrix(traj, layout, scene)
    e = np.where(measured.availability, measured.values - model.values, 0.0).reshape(-1, order="F")
    mask = measured.availability.reshape(-1, order="F")
    G = start_point_jacobian(traj, layout, scene) * mask[:, None]
    g = _objective(traj, layout, measured, scene)
    floor = _damping_floor(G)
    mu = max(mu, floor)
    while mu <= MAX_DAMPING:
        step = _damped_step(G, e, mu)
        g_new = np.inf
        if step is not None:
            candidate = traj.start - step
            try:
                g_new = _objective(traj.with_start(candidate), layout, measured, scene)
            except DegenerateGeometry:
                pass
        if g_new < g:
            return candidate, max(mu * lm.mu_down, floor)
        mu *= lm.mu_up
    return None, lm.mu0


def refine_start_point(traj_prev, layout, measured, lm, ekf_cfg, scene, max_inner=10, rel_tol=1e-6):
    """
    Inner loop on the starting point: LM step with the shape fixed, then EKF reshaping.

    Returns the best trajectory seen (the input when nothing improves it).
    """
    best = traj_prev
    best_g = _objective(traj_prev, layout, measured, scene)
    current, current_g = traj_prev, best_g
    mu = lm.mu0
    rises = 0
    for j in range(max_inner):
        try:
            start, mu = _start_point_step(current, layout, measured, lm, scene, mu)
        except DegenerateGeometry as e:
            logger.debug(f"Inner iteration {j}: start-point step undefined ({e})")
            break
        if start is None:
            break
        try:
            candidate = reconstruct_trajectory(start, layout, measured, ekf_cfg, scene)
            g = _objective(candidate, layout, measured, scene)
        except GeometryError as e:
            logger.debug(f"Inner iteration {j}: EKF reshaping failed ({e})")
            break
        logger.debug(f"Inner iteration {j}: p1=({start[0]:.3f}, {start[1]:.3f}) g={g:.4g}")
        if g < best_g:
            best, best_g = candidate, g
        rises = rises + 1 if g > current_g else 0
        if rises >= 3:
            logger.debug("Inner loop diverging; keeping the best iterate")
            break
        converged = abs(current_g - g) <= rel_tol * max(current_g, 1e-300)
        current, current_g = candidate, g
        if converged:
            break
    return best


@dataclass(eq=False)
class _Run:
    """Alternate refinement from one coarse start."""
    coarse: CoarseResult
    rank: int
    layout: StationLayout
    trajectory: Trajectory
    mse_trace: list
    iterations: int = 0
    converged: bool = False
    stopped: bool = False
    notes: list = field(default_factory=list)

    @classmethod
    def from_coarse(cls, coarse, rank=0):
        return cls(coarse=coarse, rank=rank, layout=coarse.layout, trajectory=coarse.trajectory,
                   mse_trace=[coarse.mse])

    @property
    def g(self):
        return self.mse_trace[-1]


class SlatSolver:
    """
    Coarse search followed by alternate refinement of stations and starting point.

    The `n_starts` best coarse pairs (distinct layouts) are each refined for
    `screen_outer` outer iterations; the one with the lowest g is carried on to
    `max_outer`.
    """

    def __init__(self, scene=None, ekf_cfg=None, solver_cfg=None):
        self.scene = scene or SceneConfig()
        self.ekf_cfg = ekf_cfg or EkfConfig()
        self.solver_cfg = solver_cfg or SolverConfig()

    @property
    def lm(self):
        return self.solver_cfg.lm if self.solver_cfg.lm is not None else LmConfig()

    def objective(self, traj, layout, measured):
        return _objective(traj, layout, measured, self.scene)

    def coarse_starts(self, measured, candidates, keep=1):
        try:
            return coarse_candidates(candidates, measured, self.ekf_cfg, self.scene, keep=keep)
        except (AllCandidatesDegenerate, GeometryError) as e:
            raise CoarseFailed(f"coarse search failed: {e}") from e

    def coarse(self, measured, candidates):
        return self.coarse_starts(measured, candidates)[0]

    def refine_once(self, traj, layout, measured):
        """One outer iteration: stations, EKF re-reconstruction, starting point."""
        cfg = self.solver_cfg
        new_layout = refine_all_stations(traj, layout, measured, self.lm, self.scene, cfg)
        reshaped = reconstruct_trajectory(traj.start, new_layout, measured, self.ekf_cfg, self.scene)
        new_traj = refine_start_point(reshaped, new_layout, measured, self.lm, self.ekf_cfg, self.scene,
                                      max_inner=cfg.max_inner, rel_tol=cfg.rel_tol)
        return new_layout, new_traj

    def _iterate(self, run, measured, until):
        """Outer iterations on `run` up to iteration `until`; `run` only ever holds accepted iterates."""
        cfg = self.solver_cfg
        for kappa in range(run.iterations + 1, until + 1):
            g = run.g
            new_layout, new_traj = self.refine_once(run.trajectory, run.layout, measured)
            g_new = self.objective(new_traj, new_layout, measured)
            if g_new > g:
                # fall back to the new stations on the previous trajectory
                g_stations = self.objective(run.trajectory, new_layout, measured)
                if g_stations <= g:
                    new_traj, g_new = run.trajectory, g_stations

            if g_new > g:
                logger.warning(f"Outer iteration {kappa} raised g to {g_new:.4g} Hz^2; rolling back")
                run.notes.append(f"rolled back at outer iteration {kappa}")
                run.stopped = True
                return run

            converged = abs(g - g_new) <= cfg.rel_tol * g or g_new <= cfg.abs_tol
            run.layout, run.trajectory = new_layout, new_traj
            run.mse_trace.append(g_new)
            run.iterations = kappa
            logger.info(f"Start {run.rank}, outer iteration {kappa}: g={g_new:.4g} Hz^2")
            if converged:
                run.converged = run.stopped = True
                return run
        return run

    def _result(self, run, stage="refined"):
        return SolverResult(
            layout=run.layout,
            trajectory=run.trajectory,
            mse_trace=list(run.mse_trace),
            coarse_mse=run.coarse.mse,
            iterations=run.iterations,
            converged=run.converged,
            stage=stage,
            coarse_layout=run.coarse.layout,
            coarse_trajectory=run.coarse.trajectory,
            skipped_candidates=run.coarse.skipped,
            notes=list(run.notes),
        )

    def _screen(self, starts, measured):
        """Short refinement of every start; failed starts are skipped."""
        cfg = self.solver_cfg
        until = cfg.max_outer if len(starts) == 1 else min(cfg.screen_outer, cfg.max_outer)
        runs, failures = [], []
        for rank, coarse in enumerate(starts):
            run = _Run.from_coarse(coarse, rank)
            try:
                self._iterate(run, measured, until)
            except (GeometryError, RefineFailed, np.linalg.LinAlgError) as e:
                if len(starts) == 1:
                    raise RefineFailed(f"outer iteration {run.iterations + 1} failed: {e}",
                                       best=self._result(run)) from e
                logger.warning(f"Start {rank} failed during screening ({e})")
                failures.append(e)
                continue
            runs.append(run)
            if run.g <= cfg.abs_tol:
                break
        if not runs:
            error = failures[0]
            raise RefineFailed(f"every start failed, first: {error}",
                               best=self._result(_Run.from_coarse(starts[0]))) from error
        return runs

    def solve(self, measured, candidates=None):
        measured.validate(min_stations=3, max_abs=self.scene.max_doppler)
        cfg = self.solver_cfg
        if candidates is None:
            candidates = build_candidate_sets(cfg, self.scene, measured.num_stations)
        logger.info(
            f"Starting coarse search over {len(candidates.p1_candidates)} start points x "
            f"{len(candidates.layout_candidates)} layouts"
        )
        keep = cfg.n_starts if cfg.max_outer > 0 else 1
        starts = self.coarse_starts(measured, candidates, keep=keep)
        if cfg.max_outer == 0:
            return self._result(_Run.from_coarse(starts[0]), stage="coarse")

        runs = self._screen(starts, measured)
        run = min(runs, key=lambda r: (r.g, r.rank))
        if len(runs) > 1:
            logger.info(f"Screening kept start {run.rank} with g={run.g:.4g} Hz^2")
        if not run.stopped and run.iterations < cfg.max_outer:
            try:
                self._iterate(run, measured, cfg.max_outer)
            except (GeometryError, RefineFailed, np.linalg.LinAlgError) as e:
                raise RefineFailed(f"outer iteration {run.iterations + 1} failed: {e}",
                                   best=self._result(run)) from e

        if run.g > starts[0].mse:
            logger.warning("No start refined below the best coarse pair; returning the coarse pair")
            run = _Run.from_coarse(starts[0])
            run.notes.append("refinement did not improve on the coarse search")
        elif run.rank > 0:
            run.notes.append(f"refined from coarse start {run.rank}")
        return self._result(run)
