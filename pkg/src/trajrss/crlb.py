"""Fisher information and the Cramer-Rao bound for the joint estimator.

With ``C = sigma**2 * I`` and the reference power profiled out, the Fisher
matrix of the initial position is ``G / sigma**2`` with

    g_ij = a_i . a_j - (sum a_i)(sum a_j) / (N K) = p_ij - q_ij

where ``a_i`` is the derivative of the stacked mean-RSS vector w.r.t. the
i-th coordinate of u1. The bound on the root-mean-square miss distance is
``sigma * sqrt(trace(G^-1))``.

In ``"2d"`` mode (altitude known) the z row and column of G are removed
before inversion, so the bound covers the two horizontal coordinates only.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from trajrss.errors import DegenerateGeometryError, SingularFisherError
from trajrss.model import Scenario, as_position, distance_matrix

MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    g: np.ndarray
    p: np.ndarray
    q: np.ndarray
    beta: float


@dataclass(frozen=True, eq=False)
class CrlbReport:
    """Joint-estimator bound at one position.

    ``crlb_matrix`` is ``sigma**2 * G^-1`` over the estimated coordinates
    (2x2 or 3x3); ``h`` is the determinant of the inverted block.
    """

    crlb_matrix: np.ndarray
    miss_distance_bound: float
    h: float
    fisher: FisherMatrix
    sigma: float
    mode: str
    condition_number: float

    def to_dict(self) -> dict:
        return {
            "bound": "joint",
            "mode": self.mode,
            "sigma_db": self.sigma,
            "miss_distance_bound_m": self.miss_distance_bound,
            "crlb_matrix_m2": self.crlb_matrix.tolist(),
            "fisher_g": self.fisher.g.tolist(),
            "beta": self.fisher.beta,
            "h": self.h,
            "condition_number": self.condition_number,
        }


def _offsets(u1, scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    u1 = as_position(u1, "u1")
    diff = u1[None, None, :] - scenario.virtual_base_stations()  # (K, N, 3)
    d = distance_matrix(u1, scenario)
    if np.any(d < scenario.d_min):
        raise DegenerateGeometryError(
            f"minimum distance {d.min():.3g} m below d_min={scenario.d_min} m"
        )
    return diff, d


def gradient_vectors(u1, scenario: Scenario) -> np.ndarray:
    """Derivatives of the mean-RSS vector w.r.t. x1, y1 and z1.

    Returns a (3, K*N) array; column order is the row-major flattening of the
    (K, N) measurement matrix.
    """
    diff, d = _offsets(u1, scenario)
    grad = scenario.path_loss.beta * diff / (d * d)[:, :, None]
    return grad.reshape(-1, 3).T.copy()


def fisher_matrix(u1, scenario: Scenario) -> FisherMatrix:
    """G from the gradient vectors, filled from the upper triangle so it is exactly symmetric."""
    a = gradient_vectors(u1, scenario)
    nk = a.shape[1]
    sums = a.sum(axis=1)
    p = np.empty((3, 3))
    q = np.empty((3, 3))
    for i in range(3):
        for j in range(i, 3):
            p[i, j] = p[j, i] = a[i] @ a[j]
            q[i, j] = q[j, i] = sums[i] * sums[j] / nk
    return FisherMatrix(p - q, p, q, scenario.path_loss.beta)


def fisher_matrix_from_sums(u1, scenario: Scenario) -> FisherMatrix:
    """G from the explicit double sums over (k, n), one entry at a time.

    Slow and loop-based on purpose: it shares no vectorized code with
    :func:`fisher_matrix` and serves as its cross-check.
    """
    u1 = as_position(u1, "u1")
    beta = scenario.path_loss.beta
    K, N = scenario.K, scenario.N
    disp = scenario.trajectory.displacements
    bs = scenario.base_stations
    p = np.zeros((3, 3))
    lin = np.zeros(3)
    for k in range(K):
        for n in range(N):
            off = [u1[c] + disp[k, c] - bs[n, c] for c in range(3)]
            d2 = off[0] ** 2 + off[1] ** 2 + off[2] ** 2
            if d2 < scenario.d_min**2:
                raise DegenerateGeometryError(f"distance below d_min at k={k}, n={n}")
            for i in range(3):
                lin[i] += off[i] / d2
                for j in range(3):
                    p[i, j] += off[i] * off[j] / d2**2
    p *= beta**2
    q = beta**2 / (N * K) * np.outer(lin, lin)
    return FisherMatrix(p - q, p, q, beta)


def _exact_cofactors(g: np.ndarray):
    """Cofactor matrix and determinant of the float entries of ``g``, in exact rationals.

    Plain float cofactor expansion cancels badly once cond(G) passes ~1e5;
    rounding only the final ratios keeps the inverse correctly rounded.
    """
    m = [[Fraction(float(x)) for x in row] for row in g]
    if len(m) == 2:
        cof = [[m[1][1], -m[1][0]], [-m[0][1], m[0][0]]]
        return cof, m[0][0] * m[1][1] - m[0][1] * m[1][0]
    cof = [[None] * 3 for _ in range(3)]
    for i in range(3):
        r0, r1 = [r for r in range(3) if r != i]
        for j in range(3):
            c0, c1 = [c for c in range(3) if c != j]
            sign = 1 if (i + j) % 2 == 0 else -1
            cof[i][j] = sign * (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0])
    det = sum(m[0][j] * cof[0][j] for j in range(3))
    return cof, det


def _check_shape(g: np.ndarray) -> None:
    if g.shape not in ((2, 2), (3, 3)):
        raise ValueError(f"expected a 2x2 or 3x3 matrix, got {g.shape}")


def inverse_diagonal(g: np.ndarray) -> tuple[np.ndarray, float]:
    """Diagonal of ``g^-1`` and ``det(g)`` from cofactors, for 2x2 or 3x3 ``g``."""
    _check_shape(g)
    cof, det = _exact_cofactors(g)
    if det == 0:
        return np.full(len(cof), np.inf), 0.0
    return np.array([float(cof[i][i] / det) for i in range(len(cof))]), float(det)


def _adjugate_inverse(g: np.ndarray) -> np.ndarray:
    _check_shape(g)
    cof, det = _exact_cofactors(g)
    n = len(cof)
    if det == 0:
        return np.full((n, n), np.inf)
    # inverse is the transposed cofactor matrix over the determinant
    return np.array([[float(cof[j][i] / det) for j in range(n)] for i in range(n)])


def crlb_report(u1, scenario: Scenario, sigma: float | None = None, mode: str = "2d") -> CrlbReport:
    """Joint CRLB and miss-distance bound at ``u1`` for homogeneous ``sigma`` (dB).

    ``sigma`` defaults to the scenario's noise level, which must then be
    homogeneous. Raises SingularFisherError if cond(G) exceeds 1e12.
    """
    if sigma is None:
        if not scenario.noise.is_homogeneous:
            raise ValueError("the bound assumes homogeneous sigma; pass sigma explicitly")
        sigma = float(scenario.noise.sigma.flat[0])
    if not sigma >= 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if mode not in ("2d", "3d"):
        raise ValueError(f"mode must be '2d' or '3d', got {mode!r}")
    fim = fisher_matrix(u1, scenario)
    g = fim.g[:2, :2] if mode == "2d" else fim.g
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = float(np.linalg.cond(g))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularFisherError(
            f"Fisher matrix is singular in {mode} mode (condition number {cond:.3g})", cond
        )
    diag, h = inverse_diagonal(g)
    return CrlbReport(
        crlb_matrix=sigma**2 * _adjugate_inverse(g),
        miss_distance_bound=float(sigma * np.sqrt(np.sum(diag))),
        h=float(h),
        fisher=fim,
        sigma=float(sigma),
        mode=mode,
        condition_number=cond,
    )
