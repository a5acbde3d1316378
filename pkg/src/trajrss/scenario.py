"""Scenario files and the built-in hexagon layout.

A scenario file is a JSON object::

    {
      "base_stations": [[x, y, z], ...],     # m
      "velocities":    [[vx, vy, vz], ...],  # m/s, K-1 rows; [vx, vy] is zero-filled
      "intervals_s":   [dt, ...],            # s, K-1 entries
      "gamma":         3.3,
      "d0_m":          1.0,
      "alpha_dbm":     -40.0,
      "sigma_db":      6.0,                  # scalar or K x N matrix
      "true_u1":       [x, y, z],            # m
      "d_min_m":       1.0                   # optional
    }

Everything is in meters, seconds and dB.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from trajrss.errors import DegenerateGeometryError, ScenarioSchemaError
from trajrss.model import (
    DEFAULT_D_MIN,
    NoiseModel,
    PathLossParams,
    Scenario,
    TrajectoryKnowledge,
)

REQUIRED_KEYS = (
    "base_stations",
    "velocities",
    "intervals_s",
    "gamma",
    "d0_m",
    "alpha_dbm",
    "sigma_db",
    "true_u1",
)
OPTIONAL_KEYS = ("d_min_m",)

# Built-in layout: six BSs on a hexagon with 1 km sides, UAV flying +x.
HEX_SPACING_M = 1000.0
HEX_BS_HEIGHT_M = 20.0
UAV_ALTITUDE_M = 100.0
HEX_K = 10
HEX_VELOCITY = (10.0, 0.0, 0.0)
HEX_INTERVAL_S = 5.0
HEX_GAMMA = 3.3
HEX_SIGMA_DB = 6.0
HEX_ALPHA_DBM = -40.0
# Default horizontal start point of the UAV (AOI centre); override per scenario.
HEX_TRUE_U1 = (0.0, 0.0, UAV_ALTITUDE_M)

BUILTINS = ("paper-hexagon",)


def hexagon_base_stations(spacing: float = HEX_SPACING_M, height: float = HEX_BS_HEIGHT_M) -> np.ndarray:
    """Six BSs on the corners of a regular hexagon centred at the origin.

    For a regular hexagon the side length equals the circumradius, so
    ``spacing`` is also the distance of each BS from the origin.
    """
    angles = np.deg2rad(np.arange(6) * 60.0)
    return np.column_stack([spacing * np.cos(angles), spacing * np.sin(angles), np.full(6, height)])


def hexagon_scenario(*, K: int = HEX_K, sigma: float = HEX_SIGMA_DB, gamma: float = HEX_GAMMA,
                     true_u1=HEX_TRUE_U1, velocity=HEX_VELOCITY, interval: float = HEX_INTERVAL_S,
                     alpha: float = HEX_ALPHA_DBM) -> Scenario:
    bs = hexagon_base_stations()
    return Scenario(
        base_stations=bs,
        trajectory=TrajectoryKnowledge.constant(velocity, interval, K),
        path_loss=PathLossParams(gamma, 1.0, alpha),
        noise=NoiseModel.homogeneous(sigma, K, len(bs)),
        true_u1=true_u1,
    )


def builtin(name: str) -> Scenario:
    if name == "paper-hexagon":
        return hexagon_scenario()
    raise ScenarioSchemaError("scenario", f"unknown builtin {name!r}; known: {', '.join(BUILTINS)}")


def scenario_to_dict(scenario: Scenario) -> dict:
    """Normalized JSON-compatible form; sigma collapses to a scalar when homogeneous."""
    noise = scenario.noise
    sigma = float(noise.sigma.flat[0]) if noise.is_homogeneous else noise.sigma.tolist()
    return {
        "base_stations": scenario.base_stations.tolist(),
        "velocities": scenario.trajectory.velocities.tolist(),
        "intervals_s": scenario.trajectory.intervals.tolist(),
        "gamma": float(scenario.path_loss.gamma),
        "d0_m": float(scenario.path_loss.d0),
        "alpha_dbm": float(scenario.path_loss.alpha),
        "sigma_db": sigma,
        "true_u1": scenario.true_u1.tolist(),
        "d_min_m": float(scenario.d_min),
    }


def _matrix(data: dict, key: str, cols: tuple[int, ...], allow_empty: bool = False) -> np.ndarray:
    try:
        arr = np.asarray(data[key], dtype=float)
    except (TypeError, ValueError):
        raise ScenarioSchemaError(key, "must be a list of numeric rows") from None
    if arr.size == 0 and allow_empty:
        return np.zeros((0, 3))
    if arr.ndim != 2 or arr.shape[1] not in cols:
        raise ScenarioSchemaError(key, f"rows must have {' or '.join(map(str, cols))} entries, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioSchemaError(key, "entries must be finite")
    return arr


def _number(data: dict, key: str) -> float:
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        raise ScenarioSchemaError(key, f"must be a finite number, got {value!r}")
    return float(value)


def scenario_from_dict(data: dict) -> Scenario:
    """Validate and build a scenario; errors name the offending field."""
    if not isinstance(data, dict):
        raise ScenarioSchemaError("scenario", "top level must be a JSON object")
    for key in REQUIRED_KEYS:
        if key not in data:
            raise ScenarioSchemaError(key, "missing required field")
    unknown = set(data) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS)
    if unknown:
        raise ScenarioSchemaError(sorted(unknown)[0], "unknown field")

    bs = _matrix(data, "base_stations", (3,))
    vel = _matrix(data, "velocities", (2, 3), allow_empty=True)
    if vel.shape[1] == 2:
        vel = np.hstack([vel, np.zeros((len(vel), 1))])
    try:
        dt = np.asarray(data["intervals_s"], dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ScenarioSchemaError("intervals_s", "must be a list of numbers") from None
    if len(dt) != len(vel):
        raise ScenarioSchemaError("intervals_s", f"expected {len(vel)} entries (one per velocity), got {len(dt)}")
    if np.any(~(dt > 0)):
        raise ScenarioSchemaError("intervals_s", "entries must be strictly positive")

    gamma = _number(data, "gamma")
    d0 = _number(data, "d0_m")
    alpha = _number(data, "alpha_dbm")
    d_min = _number(data, "d_min_m") if "d_min_m" in data else DEFAULT_D_MIN
    try:
        path_loss = PathLossParams(gamma, d0, alpha)
    except ValueError as exc:
        field = "d0_m" if "d0" in str(exc) else "gamma"
        raise ScenarioSchemaError(field, str(exc)) from None

    K, N = len(vel) + 1, len(bs)
    sigma_raw = data["sigma_db"]
    try:
        sigma = np.asarray(sigma_raw, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioSchemaError("sigma_db", "must be a number or a K x N matrix") from None
    if sigma.ndim == 0:
        sigma = np.full((K, N), float(sigma))
    if sigma.shape != (K, N) or not np.all(np.isfinite(sigma)) or np.any(sigma < 0):
        raise ScenarioSchemaError("sigma_db", f"must be a non-negative scalar or a {K}x{N} matrix")

    try:
        true_u1 = np.asarray(data["true_u1"], dtype=float)
    except (TypeError, ValueError):
        raise ScenarioSchemaError("true_u1", "must be [x, y, z]") from None
    if true_u1.shape != (3,) or not np.all(np.isfinite(true_u1)):
        raise ScenarioSchemaError("true_u1", "must be three finite numbers [x, y, z]")
    if not d_min > 0:
        raise ScenarioSchemaError("d_min_m", "must be positive")

    try:
        return Scenario(bs, TrajectoryKnowledge(vel, dt), path_loss, NoiseModel(sigma), true_u1, d_min)
    except DegenerateGeometryError as exc:
        raise ScenarioSchemaError("true_u1", str(exc)) from None


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioSchemaError("scenario", f"invalid JSON: {exc}") from None
    return scenario_from_dict(data)


def dump_scenario(scenario: Scenario) -> str:
    return json.dumps(scenario_to_dict(scenario), indent=2, sort_keys=True) + "\n"


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(dump_scenario(scenario))


def scenario_hash(scenario: Scenario) -> str:
    """SHA-256 of the normalized scenario JSON."""
    return hashlib.sha256(dump_scenario(scenario).encode()).hexdigest()
