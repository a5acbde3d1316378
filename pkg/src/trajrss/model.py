"""Scenario geometry, virtual moving base stations and RSS synthesis.

Conventions
-----------
* Positions are float arrays of shape ``(3,)`` in meters.
* Time steps ``k`` and base-station indices ``n`` are zero-based:
  ``k = 0`` is the first trajectory point, whose displacement is zero.
* Measurement matrices are ``(K, N)``: one row per time step, one column per
  base station. Flattening is row-major everywhere (time-major, BS fastest).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from trajrss.errors import DegenerateGeometryError

DEFAULT_D_MIN = 1.0  # m
GAMMA_RANGE = (2.0, 5.0)


def as_position(value, name: str = "position") -> np.ndarray:
    """Return ``value`` as a finite float array of shape (3,)."""
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr}")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TrajectoryKnowledge:
    """Known per-step velocities (m/s) and intervals (s) of the UAV.

    ``velocities[i]`` is flown during ``intervals[i]``; with ``K - 1`` steps
    there are ``K`` trajectory points. 2D velocities are zero-filled in z.
    """

    velocities: np.ndarray
    intervals: np.ndarray
    displacements: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vel = np.asarray(self.velocities, dtype=float)
        if vel.size == 0:
            vel = np.zeros((0, 3))
        if vel.ndim != 2 or vel.shape[1] not in (2, 3):
            raise ValueError(f"velocities must be (K-1, 2|3), got shape {vel.shape}")
        if vel.shape[1] == 2:
            vel = np.hstack([vel, np.zeros((vel.shape[0], 1))])
        dt = np.asarray(self.intervals, dtype=float).reshape(-1)
        if dt.shape[0] != vel.shape[0]:
            raise ValueError(
                f"got {vel.shape[0]} velocities but {dt.shape[0]} intervals"
            )
        if np.any(~(dt > 0)) or not np.all(np.isfinite(vel)):
            raise ValueError("intervals must be strictly positive and velocities finite")
        steps = vel * dt[:, None]
        disp = np.zeros((vel.shape[0] + 1, 3))
        # sequential prefix sum keeps disp[k] - disp[k-1] == steps[k-1]
        for i, step in enumerate(steps):
            disp[i + 1] = disp[i] + step
        object.__setattr__(self, "velocities", _frozen(vel))
        object.__setattr__(self, "intervals", _frozen(dt))
        object.__setattr__(self, "displacements", _frozen(disp))

    @classmethod
    def constant(cls, velocity, interval: float, K: int) -> "TrajectoryKnowledge":
        """Straight flight at one velocity with ``K`` equally spaced samples."""
        if K < 1:
            raise ValueError("K must be >= 1")
        vel = np.tile(np.asarray(velocity, dtype=float), (K - 1, 1))
        return cls(vel, np.full(K - 1, float(interval)))

    @property
    def K(self) -> int:
        return self.displacements.shape[0]


@dataclass(frozen=True)
class PathLossParams:
    """Log-distance path-loss parameters shared by every base station.

    ``alpha`` is the reference power in dBm at ``d0`` meters. Estimators never
    read it; it only drives measurement synthesis.
    """

    gamma: float
    d0: float = 1.0
    alpha: float = -40.0
    check_gamma: dataclasses.InitVar[bool] = True

    def __post_init__(self, check_gamma):
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if check_gamma and not GAMMA_RANGE[0] <= self.gamma <= GAMMA_RANGE[1]:
            raise ValueError(f"gamma must lie in {list(GAMMA_RANGE)}, got {self.gamma}")
        if not self.d0 > 0:
            raise ValueError(f"d0 must be positive, got {self.d0}")
        if not np.isfinite(self.alpha):
            raise ValueError("alpha must be finite")

    @property
    def beta(self) -> float:
        """Derivative scale of the mean RSS w.r.t. log-distance: -10*gamma/ln 10."""
        return -10.0 * self.gamma / np.log(10.0)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Per-measurement shadowing standard deviations in dB, shape (K, N).

    Zero entries are accepted so that the noiseless limit can be simulated;
    weighting requires either all-zero or all-positive entries.
    """

    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim != 2:
            raise ValueError(f"sigma must be a (K, N) matrix, got shape {sigma.shape}")
        if not np.all(np.isfinite(sigma)) or np.any(sigma < 0):
            raise ValueError("sigma entries must be finite and non-negative")
        object.__setattr__(self, "sigma", _frozen(sigma))

    @classmethod
    def homogeneous(cls, sigma: float, K: int, N: int) -> "NoiseModel":
        return cls(np.full((K, N), float(sigma)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.sigma.shape

    @property
    def is_homogeneous(self) -> bool:
        return bool(np.all(self.sigma == self.sigma.flat[0]))

    def weights(self) -> np.ndarray:
        """Inverse variances used by the likelihood.

        A noiseless model (all zeros) gets unit weights, which have the same
        minimizer as any common weight.
        """
        if np.all(self.sigma == 0):
            return np.ones(self.shape)
        if np.any(self.sigma == 0):
            raise ValueError("cannot weight a mix of zero and non-zero sigma")
        return 1.0 / self.sigma**2


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything needed to simulate and localize one UAV.

    Only ``true_u1`` and ``path_loss.alpha`` are hidden from the estimators.
    """

    base_stations: np.ndarray
    trajectory: TrajectoryKnowledge
    path_loss: PathLossParams
    noise: NoiseModel
    true_u1: np.ndarray
    d_min: float = DEFAULT_D_MIN

    def __post_init__(self):
        bs = np.asarray(self.base_stations, dtype=float)
        if bs.ndim != 2 or bs.shape[1] != 3 or bs.shape[0] < 1:
            raise ValueError(f"base_stations must be (N>=1, 3), got shape {bs.shape}")
        if not np.all(np.isfinite(bs)):
            raise ValueError("base station coordinates must be finite")
        object.__setattr__(self, "base_stations", _frozen(bs))
        object.__setattr__(self, "true_u1", _frozen(as_position(self.true_u1, "true_u1")))
        if not self.d_min > 0:
            raise ValueError(f"d_min must be positive, got {self.d_min}")
        if self.noise.shape != (self.K, self.N):
            raise ValueError(
                f"sigma shape {self.noise.shape} does not match (K, N) = {(self.K, self.N)}"
            )
        d = distance_matrix(self.true_u1, self)
        if np.any(d < self.d_min):
            k, n = np.argwhere(d < self.d_min)[0]
            raise DegenerateGeometryError(
                f"true UAV position at k={k} is {d[k, n]:.3g} m from BS {n} (d_min={self.d_min})"
            )

    @property
    def K(self) -> int:
        return self.trajectory.K

    @property
    def N(self) -> int:
        return self.base_stations.shape[0]

    def virtual_base_stations(self) -> np.ndarray:
        """Virtual BS positions s_n - du_k, shape (K, N, 3)."""
        return self.base_stations[None, :, :] - self.trajectory.displacements[:, None, :]

    def with_sigma(self, sigma) -> "Scenario":
        """Copy with homogeneous ``sigma`` (scalar) or a full (K, N) matrix."""
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim == 0:
            noise = NoiseModel.homogeneous(float(sigma), self.K, self.N)
        else:
            noise = NoiseModel(sigma)
        return dataclasses.replace(self, noise=noise)

    def with_gamma(self, gamma: float) -> "Scenario":
        pl = self.path_loss
        return dataclasses.replace(self, path_loss=PathLossParams(gamma, pl.d0, pl.alpha))

    def with_true_u1(self, u1) -> "Scenario":
        return dataclasses.replace(self, true_u1=as_position(u1, "true_u1"))

    def first_steps(self, K: int) -> "Scenario":
        """Copy restricted to the first ``K`` trajectory points."""
        if not 1 <= K <= self.K:
            raise ValueError(f"K must be in [1, {self.K}], got {K}")
        traj = TrajectoryKnowledge(
            self.trajectory.velocities[: K - 1], self.trajectory.intervals[: K - 1]
        )
        return dataclasses.replace(
            self, trajectory=traj, noise=NoiseModel(self.noise.sigma[:K])
        )


@dataclass(frozen=True, eq=False)
class RssMatrix:
    """Measured RSS in dBm; ``values[k, n]`` is BS ``n`` heard at time ``k``."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError(f"RSS matrix must be 2D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("RSS values must be finite")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def shifted(self, offset: float) -> "RssMatrix":
        return RssMatrix(self.values + offset)


def _check_k(trajectory: TrajectoryKnowledge, k: int) -> None:
    if not 0 <= k < trajectory.K:
        raise IndexError(f"time index k={k} out of range for K={trajectory.K}")


def displacement(trajectory: TrajectoryKnowledge, k: int) -> np.ndarray:
    """Displacement of the UAV at step ``k`` relative to the first point."""
    _check_k(trajectory, k)
    return trajectory.displacements[k].copy()


def virtual_bs_position(bs, trajectory: TrajectoryKnowledge, k: int) -> np.ndarray:
    """Position of ``bs`` seen from a UAV frozen at its first point."""
    _check_k(trajectory, k)
    return as_position(bs, "bs") - trajectory.displacements[k]


def distance(u1, bs, trajectory: TrajectoryKnowledge, k: int, d_min: float = DEFAULT_D_MIN) -> float:
    """UAV-to-BS distance at time ``k`` given the initial position ``u1``.

    Raises DegenerateGeometryError below ``d_min``.
    """
    diff = as_position(u1, "u1") - virtual_bs_position(bs, trajectory, k)
    d = float(np.sqrt(diff @ diff))
    if d < d_min:
        raise DegenerateGeometryError(f"distance {d:.3g} m below d_min={d_min} m at k={k}")
    return d


def _log_distance_gain(d: np.ndarray | float, path_loss: PathLossParams):
    return 10.0 * path_loss.gamma * np.log10(path_loss.d0 / d)


def mean_rss(u1, scenario: Scenario, k: int, n: int) -> float:
    """Mean received power relative to ``alpha`` (dB) for BS ``n`` at time ``k``."""
    if not 0 <= n < scenario.N:
        raise IndexError(f"BS index n={n} out of range for N={scenario.N}")
    d = distance(u1, scenario.base_stations[n], scenario.trajectory, k, scenario.d_min)
    return float(_log_distance_gain(d, scenario.path_loss))


def distance_matrix(u1, scenario: Scenario) -> np.ndarray:
    """All distances d[k, n] for one initial position, without the d_min check."""
    diff = as_position(u1, "u1")[None, None, :] - scenario.virtual_base_stations()
    return np.sqrt(np.sum(diff * diff, axis=-1))


def mean_rss_matrix(u1, scenario: Scenario) -> np.ndarray:
    """The (K, N) matrix of mean RSS terms relative to ``alpha``."""
    d = distance_matrix(u1, scenario)
    if np.any(d < scenario.d_min):
        raise DegenerateGeometryError(
            f"minimum distance {d.min():.3g} m below d_min={scenario.d_min} m"
        )
    return _log_distance_gain(d, scenario.path_loss)


def rng(seed) -> np.random.Generator:
    """The package's random generator: PCG64 seeded through SeedSequence.

    ``seed`` may be an int or a ``numpy.random.SeedSequence``.
    """
    return np.random.Generator(np.random.PCG64(seed))


def synthesize(scenario: Scenario, seed) -> RssMatrix:
    """Draw one noisy RSS matrix for the scenario's ground truth.

    The noise is ``sigma * z`` where ``z`` is a (K, N) block of standard
    normals drawn in row-major order, so the matrix depends only on
    ``(scenario, seed)``.
    """
    a = mean_rss_matrix(scenario.true_u1, scenario)
    z = rng(seed).standard_normal((scenario.K, scenario.N))
    return RssMatrix(scenario.path_loss.alpha + a + scenario.noise.sigma * z)
