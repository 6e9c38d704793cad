# scripts/formats.py
"""
File formats.

JSON: trajectories {"dt", "start", "velocities"}, layouts {"stations"},
scenarios, solver results and run reports.
CSV (through pandas): Doppler matrices (one row per station, one column per
interval, empty cell = unavailable), CSI streams (q, re1, im1, re2, im2),
spectrogram dumps (bin, frequency_hz, magnitude), EKF traces
(n, x, y, vx, vy, trace_P) and CDF tables (error_m, cum_fraction).
"""

import json
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from config import SceneConfig, config_to_dict
from errors import ConfigError, CsvFormatError
from generate_scenarios import NoiseModel, Scenario
from motion_geometry import DopplerMatrix, StationLayout, Trajectory
from slat_solver import SolverResult

logger = logging.getLogger(__name__)

CSI_COLUMNS = ["q", "re1", "im1", "re2", "im2"]


def _finite_or_none(value):
    value = float(value)
    return value if math.isfinite(value) else None


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Wrote {path}")


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    try:
        with open(path, "r") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e


def trajectory_to_dict(traj):
    return {
        "dt": traj.dt,
        "start": [float(v) for v in traj.start],
        "velocities": [[float(vx), float(vy)] for vx, vy in traj.velocities],
    }


def trajectory_from_dict(data):
    return Trajectory(start=data["start"], velocities=data["velocities"], dt=data["dt"])


def layout_to_dict(layout):
    return {"stations": [[float(x), float(y)] for x, y in layout.stations]}


def layout_from_dict(data):
    return StationLayout(stations=data["stations"])


def scenario_to_dict(scn):
    return {
        "scene": config_to_dict(scn.scene),
        "shape": scn.shape,
        "seed": scn.seed,
        "noise": {
            "doppler_sigma": scn.noise.doppler_sigma,
            "use_csi_path": scn.noise.use_csi_path,
            "static_gain": scn.noise.static_gain,
            "target_gain": scn.noise.target_gain,
            "n_static_paths": scn.noise.n_static_paths,
        },
        "blockage": [list(b) for b in scn.blockage],
        "true_layout": layout_to_dict(scn.true_layout),
        "true_traj": trajectory_to_dict(scn.true_traj),
    }


def scenario_from_dict(data):
    try:
        return Scenario(
            scene=SceneConfig(**data["scene"]),
            true_layout=layout_from_dict(data["true_layout"]),
            true_traj=trajectory_from_dict(data["true_traj"]),
            shape=data["shape"],
            seed=data["seed"],
            noise=NoiseModel(**data.get("noise", {})),
            blockage=tuple(tuple(b) for b in data.get("blockage", [])),
        )
    except (KeyError, TypeError) as e:
        raise ConfigError(f"malformed scenario JSON: {e}") from e


def result_to_dict(result):
    payload = {
        "stage": result.stage,
        "layout": layout_to_dict(result.layout),
        "trajectory": trajectory_to_dict(result.trajectory),
        "mse_trace": [float(g) for g in result.mse_trace],
        "coarse_mse": float(result.coarse_mse),
        "iterations": result.iterations,
        "converged": result.converged,
        "skipped_candidates": result.skipped_candidates,
        "notes": list(result.notes),
    }
    if result.coarse_layout is not None:
        payload["coarse_layout"] = layout_to_dict(result.coarse_layout)
        payload["coarse_trajectory"] = trajectory_to_dict(result.coarse_trajectory)
    return payload


def result_from_dict(data):
    try:
        coarse_layout = layout_from_dict(data["coarse_layout"]) if "coarse_layout" in data else None
        coarse_traj = trajectory_from_dict(data["coarse_trajectory"]) if "coarse_trajectory" in data else None
        return SolverResult(
            layout=layout_from_dict(data["layout"]),
            trajectory=trajectory_from_dict(data["trajectory"]),
            mse_trace=list(data["mse_trace"]),
            coarse_mse=data["coarse_mse"],
            iterations=data["iterations"],
            converged=data["converged"],
            stage=data.get("stage", "refined"),
            coarse_layout=coarse_layout,
            coarse_trajectory=coarse_traj,
            skipped_candidates=data.get("skipped_candidates", 0),
            notes=list(data.get("notes", [])),
        )
    except (KeyError, TypeError) as e:
        raise ConfigError(f"malformed result JSON: {e}") from e


def report_payload(report):
    """RunReport dict with NaN medians written as null."""
    payload = report.to_dict()
    for key, value in payload.items():
        if isinstance(value, float):
            payload[key] = _finite_or_none(value)
    return payload


def write_doppler_csv(path, matrix):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.where(matrix.availability, matrix.values, np.nan)
    df = pd.DataFrame(values, columns=[str(n) for n in range(matrix.num_intervals)])
    df.insert(0, "station", np.arange(matrix.num_stations))
    df.to_csv(path, index=False, float_format="%.17g", na_rep="")
    logger.info(f"Wrote {matrix.num_stations}x{matrix.num_intervals} Doppler matrix to {path}")


def _read_text_csv(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise ConfigError(f"{path} is empty") from e
    except pd.errors.ParserError as e:
        raise CsvFormatError(path, None, str(e)) from e


def _parse_cell(path, line, column, text):
    try:
        value = float(text)
    except ValueError as e:
        raise CsvFormatError(path, line, f"column {column!r}: {text!r} is not a number") from e
    if not math.isfinite(value):
        raise CsvFormatError(path, line, f"column {column!r}: non-finite value {text!r}")
    return value


def read_doppler_csv(path):
    """DopplerMatrix from CSV; an empty cell marks an unavailable entry."""
    df = _read_text_csv(path)
    columns = [c for c in df.columns if c != "station"]
    if not columns or len(df) == 0:
        raise ConfigError(f"{path} holds no Doppler values")
    values = np.zeros((len(df), len(columns)))
    availability = np.zeros((len(df), len(columns)), dtype=bool)
    for i, row in enumerate(df[columns].itertuples(index=False)):
        line = i + 2  # header is line 1
        for j, text in enumerate(row):
            text = text.strip()
            if text:
                values[i, j] = _parse_cell(path, line, columns[j], text)
                availability[i, j] = True
    return DopplerMatrix(values=values, availability=availability)


def write_csi_csv(path, stream):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stream = np.asarray(stream, dtype=complex)
    df = pd.DataFrame({
        "q": np.arange(stream.shape[1]),
        "re1": stream[0].real,
        "im1": stream[0].imag,
        "re2": stream[1].real,
        "im2": stream[1].imag,
    })
    df.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote {stream.shape[1]} CSI samples to {path}")


def read_csi_csv(path):
    """(2, K) complex CSI stream; malformed rows raise CsvFormatError with their line number."""
    df = _read_text_csv(path)
    missing = [c for c in CSI_COLUMNS if c not in df.columns]
    if missing:
        raise CsvFormatError(path, 1, f"missing columns {missing}")
    if len(df) == 0:
        raise ConfigError(f"{path} holds no CSI samples")
    parsed = np.zeros((len(df), len(CSI_COLUMNS)))
    for i, row in enumerate(df[CSI_COLUMNS].itertuples(index=False)):
        for j, text in enumerate(row):
            parsed[i, j] = _parse_cell(path, i + 2, CSI_COLUMNS[j], text.strip())
    order = np.argsort(parsed[:, 0], kind="stable")
    parsed = parsed[order]
    return np.vstack([parsed[:, 1] + 1j * parsed[:, 2], parsed[:, 3] + 1j * parsed[:, 4]])


def write_spectrogram_csv(path, spectrogram):
    df = pd.DataFrame({
        "bin": np.arange(spectrogram.n_fft),
        "frequency_hz": spectrogram.frequencies(),
        "magnitude": spectrogram.magnitudes,
    })
    df.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote spectrogram to {path}")


def write_ekf_trace_csv(path, trace):
    rows = [
        {"n": n, "x": s[0], "y": s[1], "vx": s[2], "vy": s[3], "trace_P": trace_p}
        for n, s, trace_p in trace
    ]
    pd.DataFrame(rows, columns=["n", "x", "y", "vx", "vy", "trace_P"]).to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote EKF trace with {len(rows)} rows to {path}")


def write_cdf_csv(path, table):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format="%.17g")
