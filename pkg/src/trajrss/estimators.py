"""Grid-search maximum-likelihood estimators of the initial UAV position.

All four estimators minimize the same profiled least-squares kernel

    Q(u1) = sum_{cells} w_kn * (r_kn - a_kn(u1) - alpha_hat(u1))**2

where ``alpha_hat`` is the weighted mean of ``r - a`` over the same cells.
They differ only in which cells enter the sum and how the per-slice
minimizers are fused:

``joint``     every (k, n) cell.
``bst``       one search per base station over its K cells, then the mean.
``tbs``       one search per time step over its N cells, then the mean.
``baseline``  the first time step only (no trajectory knowledge).

With homogeneous sigma the weighted ``alpha_hat`` is the plain mean of the
residuals; with heterogeneous sigma it is the exact weighted minimizer.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np

from trajrss.errors import DegenerateGeometryError
from trajrss.model import (
    RssMatrix,
    Scenario,
    _log_distance_gain,
    as_position,
    mean_rss_matrix,
)

MODES = ("2d", "3d")


@dataclass(frozen=True, eq=False)
class SearchGrid:
    """A regular search lattice centred on ``center``.

    Along each axis the nodes are ``center + i * step`` for every integer
    ``i`` with ``|i * step| <= half_extent``. In ``"2d"`` mode the altitude is
    known and fixed to ``center[2]``.
    """

    center: np.ndarray
    half_extent: np.ndarray
    step: np.ndarray
    mode: str = "2d"

    def __post_init__(self):
        center = as_position(self.center, "grid center")
        half = np.broadcast_to(np.asarray(self.half_extent, dtype=float), (3,)).copy()
        step = np.broadcast_to(np.asarray(self.step, dtype=float), (3,)).copy()
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        axes = (0, 1) if self.mode == "2d" else (0, 1, 2)
        if np.any(~(step[list(axes)] > 0)) or np.any(~(half[list(axes)] > 0)):
            raise ValueError("grid steps and half-extents must be positive")
        if self.mode == "2d":
            half[2] = 0.0
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "half_extent", half)
        object.__setattr__(self, "step", step)

    @classmethod
    def aoi(cls, side: float = 2000.0, step: float = 10.0, altitude: float = 100.0,
            center_xy=(0.0, 0.0), mode: str = "2d") -> "SearchGrid":
        """Square area of interest of the given side length at a known altitude."""
        if mode == "3d":
            half = (side / 2, side / 2, side / 2)
        else:
            half = (side / 2, side / 2, 0.0)
        return cls((center_xy[0], center_xy[1], altitude), half, step, mode)

    def axis_values(self, axis: int) -> np.ndarray:
        if self.mode == "2d" and axis == 2:
            return self.center[2:3].copy()
        m = int(np.floor(self.half_extent[axis] / self.step[axis] + 1e-9))
        return self.center[axis] + self.step[axis] * np.arange(-m, m + 1)

    @property
    def shape(self) -> tuple[int, int, int]:
        """Node counts along (x, y, z)."""
        return tuple(len(self.axis_values(i)) for i in range(3))

    @property
    def size(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz

    def nodes(self) -> np.ndarray:
        """All nodes as a (G, 3) array in scan order: x fastest, then y, then z."""
        xs, ys, zs = (self.axis_values(i) for i in range(3))
        z, y, x = np.meshgrid(zs, ys, xs, indexing="ij")
        return np.column_stack([x.ravel(), y.ravel(), z.ravel()])

    def refined_around(self, point) -> "SearchGrid":
        """A +-1 step neighbourhood of ``point`` sampled at a tenth of the step."""
        return SearchGrid(point, self.step, self.step / 10.0, self.mode)

    def to_dict(self) -> dict:
        return {
            "center_m": self.center.tolist(),
            "half_extent_m": self.half_extent.tolist(),
            "step_m": self.step.tolist(),
            "mode": self.mode,
            "shape": list(self.shape),
        }


@dataclass(frozen=True)
class ObjectiveSlice:
    """Selects the (k, n) cells of R that enter one objective.

    ``kind`` is ``"all"``, ``"bs"`` (column ``index``) or ``"time"`` (row ``index``).
    """

    kind: str = "all"
    index: int | None = None

    def __post_init__(self):
        if self.kind not in ("all", "bs", "time"):
            raise ValueError(f"unknown slice kind {self.kind!r}")
        if (self.kind == "all") != (self.index is None):
            raise ValueError("slice index is required for 'bs'/'time' and forbidden for 'all'")

    @classmethod
    def per_bs(cls, n: int) -> "ObjectiveSlice":
        return cls("bs", n)

    @classmethod
    def per_time(cls, k: int) -> "ObjectiveSlice":
        return cls("time", k)

    def mask(self, K: int, N: int) -> np.ndarray:
        """Boolean (K, N) mask of the selected cells; rejects single-cell slices."""
        mask = np.zeros((K, N), dtype=bool)
        if self.kind == "all":
            mask[:] = True
        elif self.kind == "bs":
            if not 0 <= self.index < N:
                raise IndexError(f"BS index {self.index} out of range for N={N}")
            mask[:, self.index] = True
        else:
            if not 0 <= self.index < K:
                raise IndexError(f"time index {self.index} out of range for K={K}")
            mask[self.index, :] = True
        if mask.sum() < 2:
            # one residual minus its own mean is identically zero
            raise ValueError(f"slice {self} selects a single cell; the objective is degenerate")
        return mask


def alpha_hat(residuals, weights=None) -> float:
    """Weighted-least-squares reference power for the given residuals ``r - a``.

    Weights are inverse variances; ``None`` means equal weights.
    """
    residuals = np.asarray(residuals, dtype=float).ravel()
    if residuals.size == 0:
        raise ValueError("alpha_hat needs at least one residual")
    if weights is None:
        return float(np.mean(residuals))
    weights = np.asarray(weights, dtype=float).ravel()
    return float(np.sum(weights * residuals) / np.sum(weights))


def objective(u1, rss: RssMatrix, scenario: Scenario, slice: ObjectiveSlice | None = None) -> float:
    """Profiled objective at one candidate position (direct evaluation)."""
    slice = slice or ObjectiveSlice()
    mask = slice.mask(scenario.K, scenario.N)
    _check_rss(rss, scenario)
    a = mean_rss_matrix(u1, scenario)
    resid = (rss.values - a)[mask]
    w = scenario.noise.weights()[mask]
    alpha = alpha_hat(resid, w)
    return float(np.sum(w * (resid - alpha) ** 2))


def _check_rss(rss: RssMatrix, scenario: Scenario) -> None:
    if rss.shape != (scenario.K, scenario.N):
        raise ValueError(f"RSS shape {rss.shape} does not match (K, N) = {(scenario.K, scenario.N)}")


class GridModel:
    """Mean-RSS terms at every node of a grid, reusable across measurements.

    The tensor depends only on geometry and ``gamma``; a Monte Carlo batch
    builds it once and evaluates every trial against it.
    """

    def __init__(self, scenario: Scenario, grid: SearchGrid):
        self.scenario = scenario
        self.grid = grid
        self.nodes = grid.nodes()
        vbs = scenario.virtual_base_stations()  # (K, N, 3)
        G, K, N = len(self.nodes), scenario.K, scenario.N
        d = np.empty((G, K, N))
        for k in range(K):
            diff = self.nodes[:, None, :] - vbs[k][None, :, :]
            d[:, k, :] = np.sqrt(np.einsum("gnc,gnc->gn", diff, diff))
        bad = d < scenario.d_min
        self.degenerate = bad if bad.any() else None
        with np.errstate(divide="ignore"):
            self.a = _log_distance_gain(np.where(bad, scenario.d_min, d), scenario.path_loss)
        self.weights = scenario.noise.weights()
        self._cache: dict = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.nodes)

    def residuals(self, rss: RssMatrix) -> np.ndarray:
        """``r - a`` at every node, shape (G, K, N)."""
        _check_rss(rss, self.scenario)
        return rss.values[None, :, :] - self.a

    def _centred(self, kind: str) -> dict:
        """Per-kind precomputation: weighted slice means and spreads of ``a``.

        Layout puts the component axis first, (C, G, M), so a trial reduces
        to one batched matrix-vector product.
        """
        with self._lock:
            if kind in self._cache:
                return self._cache[kind]
            w = self.weights
            if kind == "all":
                a = self.a.reshape(len(self.nodes), -1)[None]  # (1, G, K*N)
                wt = w.reshape(1, -1)
            elif kind == "bs":
                a = np.ascontiguousarray(self.a.transpose(2, 0, 1))  # (N, G, K)
                wt = np.ascontiguousarray(w.T)  # (N, K)
            else:
                a = np.ascontiguousarray(self.a.transpose(1, 0, 2))  # (K, G, N)
                wt = w  # (K, N)
            wsum = wt.sum(axis=1)
            a_bar = np.matmul(a, wt[:, :, None])[..., 0] / wsum[:, None]  # (C, G)
            a_c = a - a_bar[..., None]
            s_aa = np.matmul(a_c * a_c, wt[:, :, None])[..., 0]
            if self.degenerate is None:
                bad = None
            else:
                axis = {"all": (1, 2), "bs": 1, "time": 2}[kind]
                bad = np.atleast_2d(self.degenerate.any(axis=axis).T)
                if kind == "all":
                    bad = bad.reshape(1, -1)
            entry = {"a_c": a_c, "a_bar": a_bar, "s_aa": s_aa, "w": wt, "wsum": wsum, "bad": bad}
            self._cache[kind] = entry
            return entry

    def component_objectives(self, rss: RssMatrix, kind: str):
        """Objective, ``alpha_hat`` and a rounding scale for every slice of one kind.

        Objective and alpha arrays have shape (G,) for ``"all"``, (G, N) for
        ``"bs"`` and (G, K) for ``"time"``; degenerate nodes get ``inf``. The
        scale (one per slice) is the weighted spread of the measurements,
        which bounds the rounding error of the expansion
        ``Q = S_rr - 2 S_ra + S_aa`` used here.
        """
        K, N = self.scenario.K, self.scenario.N
        (ObjectiveSlice() if kind == "all" else ObjectiveSlice(kind, 0)).mask(K, N)
        _check_rss(rss, self.scenario)
        pre = self._centred(kind)
        r = rss.values
        rt = r.reshape(1, -1) if kind == "all" else (r.T if kind == "bs" else r)
        w = pre["w"]
        r_bar = np.sum(w * rt, axis=1) / pre["wsum"]
        r_c = rt - r_bar[:, None]
        s_rr = np.sum(w * r_c * r_c, axis=1)
        s_ra = np.matmul(pre["a_c"], (w * r_c)[:, :, None])[..., 0]
        q = np.maximum(s_rr[:, None] - 2.0 * s_ra + pre["s_aa"], 0.0)
        alpha = r_bar[:, None] - pre["a_bar"]
        if pre["bad"] is not None:
            q = np.where(pre["bad"], np.inf, q)
        if kind == "all":
            return q[0], alpha[0], float(s_rr[0])
        return q.T, alpha.T, s_rr

    def slice_objective(self, rss: RssMatrix, slice: ObjectiveSlice):
        """Objective, ``alpha_hat`` (both shape (G,)) and rounding scale for one slice."""
        if slice.kind == "all":
            return self.component_objectives(rss, "all")
        _check_rss(rss, self.scenario)
        mask = slice.mask(self.scenario.K, self.scenario.N)
        G = len(self.nodes)
        resid = rss.values[mask][None, :] - self.a[:, mask]  # (G, M)
        w = self.weights[mask]
        alpha = resid @ w / w.sum()
        centred = resid - alpha[:, None]
        q = (centred * centred) @ w
        if self.degenerate is not None:
            q = np.where(self.degenerate[:, mask].reshape(G, -1).any(axis=1), np.inf, q)
        r = rss.values[mask]
        scale = float(np.sum(w * (r - alpha_hat(r, w)) ** 2))
        return q, alpha, scale

    def direct_objective(self, idx: int, rss: RssMatrix, slice: ObjectiveSlice) -> tuple[float, float]:
        """Objective and ``alpha_hat`` at node ``idx`` from the centred-residual form."""
        mask = slice.mask(self.scenario.K, self.scenario.N)
        resid = (rss.values - self.a[idx])[mask]
        w = self.weights[mask]
        alpha = alpha_hat(resid, w)
        return float(np.sum(w * (resid - alpha) ** 2)), alpha


@dataclass
class EstimateReport:
    """Result of one grid-search estimate.

    ``alpha_hat`` is reported for the single-search estimators (joint and
    baseline) only. For the fused estimators ``objective_at_min`` is the sum
    of the per-component minima and ``per_component_estimates`` holds the
    per-BS (bst) or per-time (tbs) minimizers.
    """

    method: str
    u1_hat: np.ndarray
    objective_at_min: float
    grid_points_evaluated: int
    multiplications_per_node: int
    alpha_hat: float | None = None
    per_component_estimates: np.ndarray | None = None
    refined: bool = False

    def miss_distance(self, true_u1) -> float:
        return float(np.linalg.norm(self.u1_hat - as_position(true_u1)))

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "u1_hat_m": self.u1_hat.tolist(),
            "objective_at_min": self.objective_at_min,
            "alpha_hat_dbm": self.alpha_hat,
            "grid_points_evaluated": self.grid_points_evaluated,
            "multiplications_per_node": self.multiplications_per_node,
            "refined": self.refined,
        }
        if self.per_component_estimates is not None:
            out["per_component_estimates_m"] = self.per_component_estimates.tolist()
        return out


def multiplications_per_node(method: str, K: int, N: int) -> int:
    """Real multiplications per objective evaluation, as budgeted for each method."""
    return {
        "joint": 4 * (K * N) ** 2,
        "bst": 4 * K**2 * N,
        "tbs": 4 * K * N**2,
        "baseline": 4 * N**2,
    }[method]


TIE_RTOL = 1e-9


def _argmin(q: np.ndarray, scale: float = 0.0) -> int:
    """First node in scan order whose objective ties the minimum.

    Values within ``TIE_RTOL * (scale + qmin)`` of the minimum count as
    ties, so mirror-symmetric nodes do not get ranked by rounding noise.
    """
    idx = int(np.argmin(q))
    qmin = q[idx]
    if not np.isfinite(qmin):
        raise DegenerateGeometryError("every grid node is degenerate for this slice")
    tol = TIE_RTOL * (abs(scale) + abs(qmin))
    if tol > 0:
        idx = int(np.argmax(q <= qmin + tol))
    return idx


def _refine(point: np.ndarray, rss: RssMatrix, scenario: Scenario, grid: SearchGrid,
            slice: ObjectiveSlice) -> tuple[np.ndarray, int]:
    local = GridModel(scenario, grid.refined_around(point))
    q, _, scale = local.slice_objective(rss, slice)
    idx = _argmin(q, scale)
    return local.nodes[idx], int(np.isfinite(q).sum())


def _single_search(method: str, slice: ObjectiveSlice, rss, scenario, grid, model, refine):
    model = model or GridModel(scenario, grid)
    q, _, scale = model.slice_objective(rss, slice)
    idx = _argmin(q, scale)
    u1 = model.nodes[idx].copy()
    evaluated = int(np.isfinite(q).sum())
    if refine:
        u1, extra = _refine(u1, rss, scenario, grid, slice)
        evaluated += extra
        qmin, amin = _direct_at(u1, rss, scenario, slice)
    else:
        qmin, amin = model.direct_objective(idx, rss, slice)
    return EstimateReport(
        method=method,
        u1_hat=u1,
        objective_at_min=qmin,
        grid_points_evaluated=evaluated,
        multiplications_per_node=multiplications_per_node(method, scenario.K, scenario.N),
        alpha_hat=amin,
        refined=refine,
    )


def _direct_at(point, rss, scenario, slice) -> tuple[float, float]:
    mask = slice.mask(scenario.K, scenario.N)
    resid = (rss.values - mean_rss_matrix(point, scenario))[mask]
    w = scenario.noise.weights()[mask]
    alpha = alpha_hat(resid, w)
    return float(np.sum(w * (resid - alpha) ** 2)), alpha


def _fused_search(method: str, kind: str, rss, scenario, grid, model, refine):
    model = model or GridModel(scenario, grid)
    q, _, scale = model.component_objectives(rss, kind)
    components, minima, evaluated = [], [], 0
    for j in range(q.shape[1]):
        slice = ObjectiveSlice(kind, j)
        idx = _argmin(q[:, j], scale[j])
        evaluated += int(np.isfinite(q[:, j]).sum())
        if refine:
            point, extra = _refine(model.nodes[idx], rss, scenario, grid, slice)
            evaluated += extra
            qmin = _direct_at(point, rss, scenario, slice)[0]
        else:
            point = model.nodes[idx].copy()
            qmin = model.direct_objective(idx, rss, slice)[0]
        components.append(point)
        minima.append(qmin)
    components = np.array(components)
    return EstimateReport(
        method=method,
        u1_hat=np.mean(components, axis=0),
        objective_at_min=float(np.sum(minima)),
        grid_points_evaluated=evaluated,
        multiplications_per_node=multiplications_per_node(method, scenario.K, scenario.N),
        per_component_estimates=components,
        refined=refine,
    )


def estimate_joint(rss: RssMatrix, scenario: Scenario, grid: SearchGrid, *,
                   model: GridModel | None = None, refine: bool = False) -> EstimateReport:
    """Joint trajectory-aided ML estimate using all K x N measurements.

    ``scenario`` supplies the known quantities only (BS positions, trajectory,
    gamma, d0, sigma). Pass a prebuilt ``model`` to reuse the grid tensor.
    """
    return _single_search("joint", ObjectiveSlice(), rss, scenario, grid, model, refine)


def estimate_lcsl_bst(rss: RssMatrix, scenario: Scenario, grid: SearchGrid, *,
                      model: GridModel | None = None, refine: bool = False) -> EstimateReport:
    """Per-BS searches along the trajectory, fused by equal-weight averaging.

    The running combination ``(n-1)/n * prev + 1/n * new`` over BSs is the
    arithmetic mean of the per-BS minimizers, which is what is returned.
    """
    return _fused_search("bst", "bs", rss, scenario, grid, model, refine)


def estimate_lcsl_tbs(rss: RssMatrix, scenario: Scenario, grid: SearchGrid, *,
                      model: GridModel | None = None, refine: bool = False) -> EstimateReport:
    """Per-time searches across BSs, fused by equal-weight averaging.

    Needs N >= 2: a single BS gives an objective that is zero everywhere.
    """
    return _fused_search("tbs", "time", rss, scenario, grid, model, refine)


def estimate_baseline(rss: RssMatrix, scenario: Scenario, grid: SearchGrid, *,
                      model: GridModel | None = None, refine: bool = False) -> EstimateReport:
    """Conventional ML without trajectory knowledge: the first time step only."""
    return _single_search("baseline", ObjectiveSlice.per_time(0), rss, scenario, grid, model, refine)


ESTIMATORS: dict[str, Callable[..., EstimateReport]] = {
    "joint": estimate_joint,
    "bst": estimate_lcsl_bst,
    "tbs": estimate_lcsl_tbs,
    "baseline": estimate_baseline,
}


def estimate(method: str, rss: RssMatrix, scenario: Scenario, grid: SearchGrid, **kwargs) -> EstimateReport:
    """Dispatch to one of :data:`ESTIMATORS` by name."""
    try:
        fn = ESTIMATORS[method]
    except KeyError:
        raise ValueError(f"unknown estimator {method!r}; choose from {sorted(ESTIMATORS)}") from None
    return fn(rss, scenario, grid, **kwargs)


def estimate_all(methods, rss: RssMatrix, scenario: Scenario, grid: SearchGrid, *,
                 model: GridModel | None = None, refine: bool = False) -> dict[str, EstimateReport]:
    """Run several estimators on one measurement against a shared grid model."""
    model = model or GridModel(scenario, grid)
    return {m: estimate(m, rss, scenario, grid, model=model, refine=refine) for m in methods}
