"""Seeded Monte Carlo trials, sweeps over sigma and gamma, and CEP maps.

Trial ``t`` of a batch with master seed ``s`` draws its noise from
``SeedSequence(entropy=s, spawn_key=(t,))`` fed to PCG64. The child seed
depends only on ``(s, t)``: adding estimators, axis points or workers never
changes the noise of an existing trial, and every axis point of a sweep sees
the same standard-normal draws (common random numbers).
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from trajrss.crlb import crlb_report
from trajrss.errors import SingularFisherError, TrajRssError
from trajrss.estimators import ESTIMATORS, GridModel, SearchGrid, estimate
from trajrss.model import Scenario, synthesize
from trajrss.scenario import scenario_hash, scenario_to_dict

log = logging.getLogger(__name__)

SWEEP_COLUMNS = (
    "axis",
    "axis_value",
    "estimator",
    "mean_miss_m",
    "stderr_m",
    "rms_miss_m",
    "rms_stderr_m",
    "crlb_m",
    "n_ok",
    "n_failed",
)
CEP_COLUMNS = (
    "sigma_db",
    "gamma",
    "cep_m",
    "cep_stderr_m",
    "threshold_m",
    "below_threshold",
    "n_ok",
    "n_failed",
)
BATCH_COLUMNS = ("trial", "miss_m", "failed")


def child_seed(master_seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(trial),))


def quantization_floor(grid: SearchGrid) -> float:
    """RMS position error of rounding to the grid, uniform per searched axis (step/sqrt(12) each)."""
    axes = 2 if grid.mode == "2d" else 3
    return float(np.sqrt(np.sum(grid.step[:axes] ** 2) / 12.0))


def _code_version() -> str:
    from trajrss import __version__

    return __version__


def _utc_now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True, eq=False)
class TrialBatch:
    scenario: Scenario
    estimator: str
    grid: SearchGrid
    n_trials: int
    master_seed: int = 0
    refine: bool = False

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")


@dataclass
class MissStats:
    mean: float
    stderr: float
    rms: float
    rms_stderr: float
    median: float
    n_ok: int
    n_failed: int


def miss_stats(distances) -> MissStats:
    """Summary of per-trial miss distances; NaN entries are failed trials.

    ``stderr`` is sample-std/sqrt(n) of the distances; ``rms_stderr`` is the
    delta-method error of sqrt(mean(d**2)).
    """
    d = np.asarray(distances, dtype=float)
    ok = d[np.isfinite(d)]
    n, n_failed = ok.size, int(d.size - ok.size)
    if n == 0:
        nan = float("nan")
        return MissStats(nan, nan, nan, nan, nan, 0, n_failed)
    mean = float(np.mean(ok))
    rms = float(np.sqrt(np.mean(ok**2)))
    if n > 1:
        stderr = float(np.std(ok, ddof=1) / math.sqrt(n))
        rms_stderr = float(np.std(ok**2, ddof=1) / math.sqrt(n) / (2 * rms)) if rms > 0 else 0.0
    else:
        stderr = rms_stderr = float("nan")
    return MissStats(mean, stderr, rms, rms_stderr, float(np.percentile(ok, 50)), n, n_failed)


def simulate(scenario: Scenario, grid: SearchGrid, estimators: Sequence[str], n_trials: int,
             master_seed: int = 0, *, threads: int | None = 1, refine: bool = False,
             model: GridModel | None = None) -> dict[str, np.ndarray]:
    """Miss distance of every estimator on trials ``0..n_trials-1``.

    All estimators see the same measurement in a given trial. Failed
    trials (degenerate geometry, empty feasible set) are NaN. Results do
    not depend on ``threads``.
    """
    for name in estimators:
        if name not in ESTIMATORS:
            raise ValueError(f"unknown estimator {name!r}")
    model = model or GridModel(scenario, grid)
    out = {name: np.full(n_trials, np.nan) for name in estimators}

    def run(t: int) -> None:
        try:
            rss = synthesize(scenario, child_seed(master_seed, t))
        except TrajRssError as exc:
            log.debug("trial %d: synthesis failed: %s", t, exc)
            return
        for name in estimators:
            try:
                report = estimate(name, rss, scenario, grid, model=model, refine=refine)
            except (TrajRssError, ValueError) as exc:
                log.debug("trial %d, %s failed: %s", t, name, exc)
                continue
            out[name][t] = report.miss_distance(scenario.true_u1)

    workers = _workers(threads)
    if workers == 1:
        for t in range(n_trials):
            run(t)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(n_trials)))
    return out


def _workers(threads: int | None) -> int:
    if threads is None or threads <= 0:
        return os.cpu_count() or 1
    return int(threads)


@dataclass
class BatchResult:
    batch: TrialBatch
    miss_distances: np.ndarray
    stats: MissStats = field(init=False)

    def __post_init__(self):
        self.stats = miss_stats(self.miss_distances)

    @property
    def n_failed(self) -> int:
        return self.stats.n_failed

    def metadata(self) -> dict:
        b = self.batch
        return {
            "kind": "batch",
            "estimator": b.estimator,
            "n_trials": b.n_trials,
            "master_seed": b.master_seed,
            "refine": b.refine,
            "grid": b.grid.to_dict(),
            "scenario": scenario_to_dict(b.scenario),
            "scenario_sha256": scenario_hash(b.scenario),
            "code_version": _code_version(),
            "created_utc": _utc_now(),
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(BATCH_COLUMNS)
            for t, d in enumerate(self.miss_distances):
                failed = not np.isfinite(d)
                w.writerow([t, "" if failed else repr(float(d)), int(failed)])

    def to_json(self, path) -> None:
        s = self.stats
        doc = {
            "metadata": self.metadata(),
            "summary": {
                "mean_miss_m": s.mean,
                "stderr_m": s.stderr,
                "rms_miss_m": s.rms,
                "rms_stderr_m": s.rms_stderr,
                "cep_m": s.median,
                "n_ok": s.n_ok,
                "n_failed": s.n_failed,
            },
            "miss_m": [None if not np.isfinite(d) else float(d) for d in self.miss_distances],
        }
        _write_json(path, doc)


def run_batch(batch: TrialBatch, *, threads: int | None = 1) -> BatchResult:
    """Run one estimator over ``batch.n_trials`` seeded trials."""
    out = simulate(batch.scenario, batch.grid, [batch.estimator], batch.n_trials,
                   batch.master_seed, threads=threads, refine=batch.refine)
    return BatchResult(batch, out[batch.estimator])


@dataclass
class SweepRow:
    axis_value: float
    estimator: str
    stats: MissStats
    crlb: float


@dataclass
class SweepResult:
    """Per-(axis value, estimator) miss-distance statistics plus the joint CRLB."""

    axis: str
    values: list[float]
    estimators: list[str]
    rows: list[SweepRow]
    metadata: dict

    def row(self, value: float, estimator: str) -> SweepRow:
        for r in self.rows:
            if r.estimator == estimator and math.isclose(r.axis_value, value):
                return r
        raise KeyError((value, estimator))

    def crlb(self) -> list[float]:
        return [self.row(v, self.estimators[0]).crlb for v in self.values]

    def table(self) -> list[dict]:
        out = []
        for r in self.rows:
            s = r.stats
            out.append({
                "axis": self.axis,
                "axis_value": r.axis_value,
                "estimator": r.estimator,
                "mean_miss_m": s.mean,
                "stderr_m": s.stderr,
                "rms_miss_m": s.rms,
                "rms_stderr_m": s.rms_stderr,
                "crlb_m": r.crlb,
                "n_ok": s.n_ok,
                "n_failed": s.n_failed,
            })
        return out

    def to_csv(self, path) -> None:
        _write_csv(path, SWEEP_COLUMNS, self.table())

    def to_json(self, path) -> None:
        _write_json(path, {"metadata": self.metadata, "rows": self.table()})


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return "" if not math.isfinite(value) else repr(value)
    return str(value)


def _write_csv(path, columns: Iterable[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def _write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n")


def _joint_bound(scenario: Scenario, grid: SearchGrid) -> float:
    try:
        return crlb_report(scenario.true_u1, scenario, mode=grid.mode).miss_distance_bound
    except SingularFisherError:
        return float("nan")


def _sweep_metadata(kind: str, template: Scenario, grid: SearchGrid, estimators, n_trials, seed, **extra) -> dict:
    meta = {
        "kind": kind,
        "estimators": list(estimators),
        "n_trials": n_trials,
        "master_seed": seed,
        "grid": grid.to_dict(),
        "quantization_floor_m": quantization_floor(grid),
        "crlb": {"bound": "joint", "mode": grid.mode},
        "scenario": scenario_to_dict(template),
        "scenario_sha256": scenario_hash(template),
        "code_version": _code_version(),
        "created_utc": _utc_now(),
    }
    meta.update(extra)
    return meta


def _sweep(axis: str, template: Scenario, values, estimators, n_trials, seed, grid, threads, refine) -> SweepResult:
    values = [float(v) for v in values]
    estimators = list(estimators)
    rows = []
    for v in values:
        scenario = template.with_sigma(v) if axis == "sigma" else template.with_gamma(v)
        bound = _joint_bound(scenario, grid)
        miss = simulate(scenario, grid, estimators, n_trials, seed, threads=threads, refine=refine)
        for name in estimators:
            rows.append(SweepRow(v, name, miss_stats(miss[name]), bound))
        log.info("%s=%g done", axis, v)
    meta = _sweep_metadata(f"sweep-{axis}", template, grid, estimators, n_trials, seed,
                           axis=axis, values=values, refine=refine)
    return SweepResult(axis, values, estimators, rows, meta)


def sweep_sigma(template: Scenario, sigmas, estimators=tuple(ESTIMATORS), n_trials: int = 1000,
                seed: int = 0, grid: SearchGrid | None = None, *, threads: int | None = 1,
                refine: bool = False) -> SweepResult:
    """Average miss distance versus homogeneous sigma (dB) at the template's gamma."""
    if any(not s > 0 for s in sigmas):
        raise ValueError("sigma values must be positive")
    grid = grid or SearchGrid.aoi(altitude=template.true_u1[2])
    return _sweep("sigma", template, sigmas, estimators, n_trials, seed, grid, threads, refine)


def sweep_gamma(template: Scenario, gammas, estimators=tuple(ESTIMATORS), n_trials: int = 1000,
                seed: int = 0, grid: SearchGrid | None = None, *, threads: int | None = 1,
                refine: bool = False) -> SweepResult:
    """Average miss distance versus path-loss exponent at the template's sigma."""
    if any(not 2.0 <= g <= 5.0 for g in gammas):
        raise ValueError("gamma values must lie in [2, 5]")
    grid = grid or SearchGrid.aoi(altitude=template.true_u1[2])
    return _sweep("gamma", template, gammas, estimators, n_trials, seed, grid, threads, refine)


@dataclass
class CepMap:
    """Empirical CEP of the joint estimator over a (sigma, gamma) grid.

    ``radii[i, j]`` is the median miss distance at ``sigmas[i]``,
    ``gammas[j]``; ``stderr`` is half the width of the order-statistic band
    ``[d_(n/2 - sqrt(n)/2), d_(n/2 + sqrt(n)/2)]``, roughly one standard error.
    """

    sigmas: list[float]
    gammas: list[float]
    radii: np.ndarray
    stderr: np.ndarray
    n_ok: np.ndarray
    n_failed: np.ndarray
    threshold: float
    metadata: dict

    @property
    def mask(self) -> np.ndarray:
        return self.radii < self.threshold

    def table(self) -> list[dict]:
        rows = []
        mask = self.mask
        for i, s in enumerate(self.sigmas):
            for j, g in enumerate(self.gammas):
                rows.append({
                    "sigma_db": s,
                    "gamma": g,
                    "cep_m": float(self.radii[i, j]),
                    "cep_stderr_m": float(self.stderr[i, j]),
                    "threshold_m": self.threshold,
                    "below_threshold": bool(mask[i, j]),
                    "n_ok": int(self.n_ok[i, j]),
                    "n_failed": int(self.n_failed[i, j]),
                })
        return rows

    def to_csv(self, path) -> None:
        _write_csv(path, CEP_COLUMNS, self.table())

    def to_json(self, path) -> None:
        _write_json(path, {"metadata": self.metadata, "rows": self.table()})


def cep_radius(distances) -> tuple[float, float]:
    """Median of the finite miss distances (linear interpolation) and its order-statistic error."""
    d = np.sort(np.asarray(distances, dtype=float))
    d = d[np.isfinite(d)]
    if d.size == 0:
        return float("nan"), float("nan")
    n = d.size
    half = math.sqrt(n) / 2
    lo = d[max(int(math.floor(n / 2 - half)), 0)]
    hi = d[min(int(math.ceil(n / 2 + half)), n - 1)]
    return float(np.percentile(d, 50)), float((hi - lo) / 2)


def cep_map(template: Scenario, sigmas, gammas, threshold: float = 100.0, n_trials: int = 1000,
            seed: int = 0, grid: SearchGrid | None = None, *, threads: int | None = 1,
            refine: bool = False) -> CepMap:
    """Joint-estimator CEP at every (sigma, gamma) pair and the ``CEP < threshold`` mask."""
    sigmas = [float(s) for s in sigmas]
    gammas = [float(g) for g in gammas]
    if not sigmas or not gammas:
        raise ValueError("sigma and gamma ranges must be non-empty")
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    if any(s < 0 for s in sigmas):
        raise ValueError("sigma values must be non-negative")
    grid = grid or SearchGrid.aoi(altitude=template.true_u1[2])
    shape = (len(sigmas), len(gammas))
    radii, stderr = np.full(shape, np.nan), np.full(shape, np.nan)
    n_ok, n_failed = np.zeros(shape, dtype=int), np.zeros(shape, dtype=int)
    for j, g in enumerate(gammas):
        for i, s in enumerate(sigmas):
            scenario = template.with_gamma(g).with_sigma(s)
            miss = simulate(scenario, grid, ["joint"], n_trials, seed, threads=threads, refine=refine)["joint"]
            radii[i, j], stderr[i, j] = cep_radius(miss)
            n_ok[i, j] = int(np.isfinite(miss).sum())
            n_failed[i, j] = n_trials - n_ok[i, j]
    meta = _sweep_metadata("cep", template, grid, ["joint"], n_trials, seed,
                           sigmas=sigmas, gammas=gammas, threshold_m=threshold,
                           cep="median miss distance (linear interpolation)", refine=refine)
    return CepMap(sigmas, gammas, radii, stderr, n_ok, n_failed, float(threshold), meta)
