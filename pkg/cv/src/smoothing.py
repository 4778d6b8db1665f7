"""Kernels, local linear mean and variance estimators and cross-validated bandwidths."""
import logging
import math
import warnings
from typing import Iterator, Optional, Sequence

import numpy as np

from utils.config import (
    CV_GRID_BOUNDS,
    CV_GRID_SIZE,
    CV_TIE_ATOL,
    CV_TIE_RTOL,
    DETERMINANT_GUARD,
    G_REGIME_TOLERANCE,
    VARIANCE_FLOOR_ABS,
    VARIANCE_FLOOR_REL,
)
from utils.errors import (
    AllBandwidthsDegenerate,
    AsymptoticRegimeWarning,
    DataError,
    DegenerateNeighborhood,
    NumericalError,
)
from utils.models import Bandwidths, Kernel, Sample, SmootherFit, SmoothingConfig, WeightFn

logger = logging.getLogger(__name__)

# upper bound on entries of one (eval points x observations) block
_BLOCK_ENTRIES = 2_000_000


def kernel_eval(k: Kernel, u: float) -> float:
    return float(k(u))


def _row_blocks(rows: int, cols: int) -> Iterator[slice]:
    step = max(1, _BLOCK_ENTRIES // max(cols, 1))
    for start in range(0, rows, step):
        yield slice(start, min(start + step, rows))


def _local_linear_rows(d: np.ndarray, kw: np.ndarray, response: np.ndarray, h: float,
                       fallback: bool) -> np.ndarray:
    """Solve the local linear problem for each row of kernel weights kw at offsets d = x - X_i."""
    s0 = kw.sum(axis=1)
    if np.any(s0 <= 0):
        raise DegenerateNeighborhood(
            f"No kernel mass at {int(np.sum(s0 <= 0))} evaluation point(s) for bandwidth h={h:g}"
        )
    s1 = (kw * d).sum(axis=1)
    s2 = (kw * d * d).sum(axis=1)
    det = s0 * s2 - s1 ** 2
    stable = det > DETERMINANT_GUARD * s0 ** 2 * h ** 2
    if not fallback and not np.all(stable):
        raise DegenerateNeighborhood(
            f"Local linear system is singular at {int(np.sum(~stable))} point(s) for h={h:g}"
        )
    local_constant = (kw @ response) / s0
    if np.all(~stable):
        return local_constant
    lw = kw * (s2[:, None] - d * s1[:, None])
    with np.errstate(divide="ignore", invalid="ignore"):
        local_linear = (lw @ response) / lw.sum(axis=1)
    return np.where(stable, local_linear, local_constant)


def _kernel_blocks(s: Sample, eval_points: np.ndarray, h: float, k: Kernel,
                   inner_weight: Optional[WeightFn]):
    """Yield (rows, offsets, kernel weights) in blocks of evaluation points."""
    obs_weight = inner_weight(s.x) if inner_weight is not None else None
    for rows in _row_blocks(len(eval_points), s.n):
        d = eval_points[rows, None] - s.x[None, :]
        kw = k(d / h) / h
        if obs_weight is not None:
            kw = kw * obs_weight[None, :]
        yield rows, d, kw


def _check_fit_args(s: Sample, eval_points, response, h: float):
    eval_points = np.atleast_1d(np.asarray(eval_points, dtype=float))
    response = np.asarray(response, dtype=float)
    if len(response) != s.n:
        raise ValueError("The response must have one value per observation.")
    if not h > 0:
        raise ValueError("The bandwidth h must be positive.")
    return eval_points, response


def local_linear_fit(s: Sample, eval_points, response, h: float, k: Kernel,
                     inner_weight: Optional[WeightFn] = None, fallback: bool = True) -> np.ndarray:
    """
    Local linear estimate of E[response | x] at each evaluation point.

    With inner_weight the kernel weights are additionally multiplied by w(X_i),
    which gives the weighted least squares fit. Points whose 2x2 system is nearly
    singular fall back to the kernel-weighted mean unless fallback is False.
    """
    eval_points, response = _check_fit_args(s, eval_points, response, h)
    fitted = np.empty(len(eval_points))
    for rows, d, kw in _kernel_blocks(s, eval_points, h, k, inner_weight):
        fitted[rows] = _local_linear_rows(d, kw, response, h, fallback)
    return fitted


def local_constant_fit(s: Sample, eval_points, response, h: float, k: Kernel,
                       inner_weight: Optional[WeightFn] = None) -> np.ndarray:
    """Kernel-weighted mean of the response around each evaluation point."""
    eval_points, response = _check_fit_args(s, eval_points, response, h)
    fitted = np.empty(len(eval_points))
    for rows, _, kw in _kernel_blocks(s, eval_points, h, k, inner_weight):
        s0 = kw.sum(axis=1)
        if np.any(s0 <= 0):
            raise DegenerateNeighborhood(
                f"No kernel mass at {int(np.sum(s0 <= 0))} evaluation point(s) for bandwidth h={h:g}"
            )
        fitted[rows] = (kw @ response) / s0
    return fitted


def fit_mean(s: Sample, h: float, k: Kernel, inner_weight: Optional[WeightFn] = None) -> np.ndarray:
    return local_linear_fit(s, s.x, s.y, h, k, inner_weight)


def variance_floor(y) -> float:
    spread = float(np.var(np.asarray(y, dtype=float), ddof=1))
    return VARIANCE_FLOOR_REL * spread if spread > 0 else VARIANCE_FLOOR_ABS


def fit_variance(s: Sample, m_hat, h: float, k: Kernel,
                 inner_weight: Optional[WeightFn] = None, at=None) -> np.ndarray:
    """
    Local linear fit of the squared residuals at `at` (default: the design points).

    Where the local linear line dips to the variance floor, usually at the edges
    of the predictor range, the kernel-weighted mean of the squared residuals is
    used instead. The floor is applied last.
    """
    m_hat = np.asarray(m_hat, dtype=float)
    if len(m_hat) != s.n:
        raise ValueError("m_hat must have one value per observation.")
    at = s.x if at is None else np.atleast_1d(np.asarray(at, dtype=float))
    squared_residuals = (s.y - m_hat) ** 2
    floor = variance_floor(s.y)
    sigma2 = local_linear_fit(s, at, squared_residuals, h, k, inner_weight)
    low = sigma2 <= floor
    if np.any(low):
        logger.debug("Local constant variance at %d of %d point(s)", int(low.sum()), len(at))
        sigma2[low] = local_constant_fit(s, at[low], squared_residuals, h, k, inner_weight)
    return np.maximum(sigma2, floor)


def fit_smoother(s: Sample, bandwidths: Bandwidths, k: Kernel,
                 inner_weight: Optional[WeightFn] = None,
                 variance_weight: Optional[WeightFn] = None) -> SmootherFit:
    """
    Mean, variance and residuals on the design points.

    sigma2_hat is always the unweighted variance fit. With variance_weight the
    w*-weighted fit is stored as sigma2_star, computed only where w* is positive
    and equal to sigma2_hat elsewhere.
    """
    m_hat = fit_mean(s, bandwidths.h_mean, k, inner_weight)
    sigma2_hat = fit_variance(s, m_hat, bandwidths.h_var, k)
    sigma2_star = None
    if variance_weight is not None:
        inside = variance_weight(s.x) > 0
        sigma2_star = sigma2_hat.copy()
        if np.any(inside):
            sigma2_star[inside] = fit_variance(s, m_hat, bandwidths.h_var, k, variance_weight,
                                               at=s.x[inside])
    return SmootherFit(m_hat=m_hat, sigma2_hat=sigma2_hat, residuals=s.y - m_hat,
                       bandwidths=bandwidths, sigma2_star=sigma2_star)


def loo_cv_score(s: Sample, response, k: Kernel, h: float) -> float:
    """Leave-one-out squared prediction error, or inf when some point has no neighbours."""
    response = np.asarray(response, dtype=float)
    total = 0.0
    for rows in _row_blocks(s.n, s.n):
        d = s.x[rows, None] - s.x[None, :]
        kw = k(d / h) / h
        kw[np.arange(kw.shape[0]), np.arange(s.n)[rows]] = 0.0
        try:
            predicted = _local_linear_rows(d, kw, response, h, fallback=True)
        except DegenerateNeighborhood:
            return math.inf
        total += float(np.sum((response[rows] - predicted) ** 2))
    return total


def default_bandwidth_grid(x) -> np.ndarray:
    span = float(np.ptp(np.asarray(x, dtype=float)))
    if span <= 0:
        raise DataError("The predictor has zero range; no bandwidth can be chosen.")
    low, high = CV_GRID_BOUNDS
    return np.geomspace(low * span, high * span, CV_GRID_SIZE)


def cv_bandwidth(s: Sample, response, k: Kernel, grid: Optional[Sequence[float]] = None) -> float:
    """Grid bandwidth minimizing the leave-one-out error; ties go to the larger bandwidth."""
    grid = default_bandwidth_grid(s.x) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("The bandwidth grid cannot be empty.")
    if np.any(np.diff(grid) < 0) or np.any(grid <= 0):
        raise ValueError("The bandwidth grid must be positive and sorted ascending.")
    response = np.asarray(response, dtype=float)

    scores = np.array([loo_cv_score(s, response, k, h) for h in grid])
    finite = np.isfinite(scores)
    if not np.any(finite):
        raise AllBandwidthsDegenerate(
            f"None of the {grid.size} grid bandwidths gives leave-one-out fits everywhere"
        )
    best = float(np.min(scores[finite]))
    tolerance = CV_TIE_RTOL * best + CV_TIE_ATOL * float(np.sum(response ** 2))
    chosen = float(grid[finite & (scores <= best + tolerance)][-1])
    logger.debug("CV bandwidth %.4g (score %.6g over %d candidates)", chosen, best, grid.size)
    return chosen


def default_g(s: Sample) -> float:
    return s.n ** -0.5 * s.x_range


def select_bandwidths(s: Sample, smoothing: SmoothingConfig) -> Bandwidths:
    """Choose h_mean and h_var by two separate CV runs and g by the n^(-1/2) rule."""
    k = smoothing.kernel
    h_mean = smoothing.h_mean or cv_bandwidth(s, s.y, k, smoothing.grid)
    if smoothing.h_var is not None:
        h_var = smoothing.h_var
    else:
        squared_residuals = (s.y - fit_mean(s, h_mean, k)) ** 2
        h_var = cv_bandwidth(s, squared_residuals, k, smoothing.grid)
    g = smoothing.g or default_g(s)

    span = s.x_range
    if span > 0 and g / span > G_REGIME_TOLERANCE * (h_mean / span) ** 2:
        warnings.warn(
            f"g={g:.3g} is large relative to h_mean^2 (h_mean={h_mean:.3g}); "
            "the statistic may carry smoothing bias",
            AsymptoticRegimeWarning,
            stacklevel=2,
        )
    logger.debug("Bandwidths h_mean=%.4g h_var=%.4g g=%.4g", h_mean, h_var, g)
    return Bandwidths(h_mean=h_mean, h_var=h_var, g=g)


def kernel_density(x, at, k: Kernel, bandwidth: Optional[float] = None) -> np.ndarray:
    """Kernel density estimate; the default bandwidth is 1.06 sd(x) n^(-1/5)."""
    x = np.asarray(x, dtype=float)
    at = np.atleast_1d(np.asarray(at, dtype=float))
    if bandwidth is None:
        bandwidth = 1.06 * float(np.std(x, ddof=1)) * len(x) ** -0.2
    if not bandwidth > 0:
        raise NumericalError("Density bandwidth is zero; the predictor has no spread.")
    density = np.empty(len(at))
    for rows in _row_blocks(len(at), len(x)):
        density[rows] = k((at[rows, None] - x[None, :]) / bandwidth).sum(axis=1)
    return density / (len(x) * bandwidth)
