# scripts/config.py
"""
Configuration sections for the WiSLAT toolkit.

One JSON file drives everything. Each top-level section ("scene", "detector",
"ekf", "solver", "scenario", "experiment") maps to a frozen dataclass below;
missing sections fall back to defaults and unknown keys are rejected.
Environment variables (loaded from a .env file when present) provide
defaults for the worker count, the log level and the output directory.
"""

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from dotenv import load_dotenv

from errors import ConfigError

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
CARRIER_HZ = 5.24e9


def env_workers(default=1):
    try:
        return max(1, int(os.getenv("WISLAT_WORKERS", default)))
    except ValueError:
        return default


def env_log_level(default="WARNING"):
    return os.getenv("WISLAT_LOG_LEVEL", default).upper()


def env_out_dir(default="out"):
    return os.getenv("WISLAT_OUT_DIR", default)


@dataclass(frozen=True)
class SceneConfig:
    """Geometric ground: transmitter at the origin, carrier wavelength, sampling interval."""
    wavelength: float = SPEED_OF_LIGHT / CARRIER_HZ
    dt: float = 0.01
    num_stations: int = 4
    num_instants: int = 0  # 0: taken from the trajectory
    v_max: float = 3.0
    eps_geo: float = 1e-6
    arena_size: float = 5.0

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ConfigError(f"scene.wavelength must be > 0, got {self.wavelength}")
        if not self.dt > 0:
            raise ConfigError(f"scene.dt must be > 0, got {self.dt}")
        if self.v_max <= 0 or self.arena_size <= 0:
            raise ConfigError("scene.v_max and scene.arena_size must be > 0")

    @property
    def fs(self):
        return 1.0 / self.dt

    @property
    def max_doppler(self):
        return 2.0 * self.v_max / self.wavelength


@dataclass(frozen=True)
class DetectorConfig:
    q_half: int = 64
    n_fft: int = 256
    f_guard: float = 2.0
    window: str = "rectangular"
    eps_ratio: float = 1e-12
    detrend: bool = True
    amplitude_threshold: float | None = None

    def __post_init__(self):
        if self.window not in ("rectangular", "hann"):
            raise ConfigError(f"detector.window must be 'rectangular' or 'hann', got {self.window!r}")
        if 2 * self.q_half + 1 < 8:
            raise ConfigError("detector.q_half too small: window 2Q+1 must be >= 8")
        if self.n_fft < 2 * self.q_half + 1:
            raise ConfigError("detector.n_fft must be >= 2*q_half+1")


@dataclass(frozen=True)
class EkfConfig:
    sigma_x: float = 0.5
    sigma_y: float = 0.5
    sigma_vx: float = 0.5
    sigma_vy: float = 0.5
    sigma_fd: float = 1.0
    p0_diag: tuple = (0.01, 0.01, 1.0, 1.0)
    v_init: tuple = (0.0, 0.0)
    max_condition: float = 1e12

    def __post_init__(self):
        sigmas = (self.sigma_x, self.sigma_y, self.sigma_vx, self.sigma_vy, self.sigma_fd)
        if any(not s > 0 for s in sigmas):
            raise ConfigError("ekf sigmas must all be > 0")
        if len(self.p0_diag) != 4 or any(not p > 0 for p in self.p0_diag):
            raise ConfigError("ekf.p0_diag must hold 4 positive entries")
        if len(self.v_init) != 2:
            raise ConfigError("ekf.v_init must be [vx, vy]")


@dataclass(frozen=True)
class LmConfig:
    mu0: float = 1e-2
    mu_up: float = 10.0
    mu_down: float = 0.1
    max_iters: int = 50
    g_tol: float = 1e-12
    step_tol: float = 1e-6

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ConfigError("lm.mu0 must be > 0")
        if not (self.mu_up > 1.0 > self.mu_down > 0.0):
            raise ConfigError("lm damping multipliers must satisfy mu_up > 1 > mu_down > 0")


@dataclass(frozen=True)
class SolverConfig:
    grid_spacing: float = 1.0
    n_layouts: int = 256
    layout_seed: int = 0
    r_min: float = 2.0
    r_max: float = 4.0
    max_outer: int = 20
    rel_tol: float = 1e-6
    abs_tol: float = 1e-10
    stride: int = 10
    max_inner: int = 10
    n_starts: int = 4
    screen_outer: int = 2
    v_min: float = 0.05
    clamp_eps: float = 0.02
    aoa_priors: tuple | None = None
    lm: LmConfig = field(default_factory=LmConfig)

    def __post_init__(self):
        if self.grid_spacing <= 0 or self.n_layouts < 1:
            raise ConfigError("solver.grid_spacing must be > 0 and solver.n_layouts >= 1")
        if not 0 < self.r_min < self.r_max:
            raise ConfigError("solver annulus must satisfy 0 < r_min < r_max")
        if self.stride < 1 or self.max_outer < 0 or self.max_inner < 0:
            raise ConfigError("solver.stride >= 1, max_outer >= 0, max_inner >= 0 required")
        if self.n_starts < 1 or self.screen_outer < 1:
            raise ConfigError("solver.n_starts and solver.screen_outer must be >= 1")


@dataclass(frozen=True)
class ScenarioSpec:
    """Ground-truth scenario recipe used by `simulate` and as the experiment template."""
    shape: str = "circle"
    size: float = 1.5  # circle radius, square side, triangle side (m)
    center: tuple = (0.1, 0.05)
    speed: float = 1.0
    layout: tuple | None = None
    layout_seed: int = 7
    seed: int = 0
    doppler_sigma: float = 0.0
    use_csi_path: bool = False
    blockage: tuple = ()
    static_gain: float = 1.0
    target_gain: float = 0.3
    n_static_paths: int = 3

    def __post_init__(self):
        if self.shape not in ("circle", "square", "triangle"):
            raise ConfigError(f"scenario.shape must be circle|square|triangle, got {self.shape!r}")
        if self.doppler_sigma < 0:
            raise ConfigError("scenario.doppler_sigma must be >= 0")
        if abs(self.static_gain) <= abs(self.target_gain):
            raise ConfigError("scenario.static_gain must dominate scenario.target_gain")


@dataclass(frozen=True)
class ExperimentConfig:
    shapes: tuple = ("circle", "square", "triangle")
    runs_per_shape: int = 5
    noise_levels: tuple = (0.0, 1.0)
    seed: int = 2024
    workers: int = field(default_factory=env_workers)
    inject_truth: bool = False
    density_filter: bool = True
    aggregate_eps: float = 1.0
    aggregate_min_pts: int = 3


@dataclass(frozen=True)
class AppConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    ekf: EkfConfig = field(default_factory=EkfConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)


SECTIONS = {
    "scene": SceneConfig,
    "detector": DetectorConfig,
    "ekf": EkfConfig,
    "solver": SolverConfig,
    "scenario": ScenarioSpec,
    "experiment": ExperimentConfig,
}


def _freeze(value):
    """JSON lists become tuples so the frozen dataclasses stay hashable."""
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def _build_section(name, cls, data):
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be a JSON object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if cls is SolverConfig and key == "lm":
            kwargs[key] = _build_section("solver.lm", LmConfig, value)
        else:
            kwargs[key] = _freeze(value)
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"section {name!r}: {e}") from e


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
    sections = {name: _build_section(name, cls, data.get(name, {})) for name, cls in SECTIONS.items()}
    return AppConfig(**sections)


def load_config(path):
    """
    Load an AppConfig from a JSON file.

    Args:
        path (str | Path): Path to the JSON config file.

    Raises:
        ConfigError: if the file is missing, is not valid JSON or holds invalid fields.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    config = config_from_dict(data)
    logger.info(f"Loaded config from {path}")
    return config


def config_to_dict(config):
    return dataclasses.asdict(config)


def with_overrides(config, seed=None, workers=None, max_outer=None):
    """Apply scalar CLI overrides; None leaves a field untouched."""
    if seed is not None:
        config = dataclasses.replace(
            config,
            scenario=dataclasses.replace(config.scenario, seed=seed),
            experiment=dataclasses.replace(config.experiment, seed=seed),
        )
    if workers is not None:
        config = dataclasses.replace(config, experiment=dataclasses.replace(config.experiment, workers=max(1, workers)))
    if max_outer is not None:
        config = dataclasses.replace(config, solver=dataclasses.replace(config.solver, max_outer=max_outer))
    return config
