"""Smooth bootstrap calibration of T_n(c_hat)."""
import logging
import math
from typing import Optional

import numpy as np

from cv.src.smoothing import fit_smoother, select_bandwidths
from cv.src.statistic import (
    estimate_c2,
    mu0_plugin,
    resolve_weights,
    standardized_statistic,
    t_statistic,
)
from utils.errors import NumericalError, ReplicateFailure, ZeroResidualSpread
from utils.models import (
    BootstrapConfig,
    Sample,
    SmootherFit,
    SmoothingConfig,
    StatisticInput,
    TestOutcome,
)

logger = logging.getLogger(__name__)


def standardize_residuals(sample: Sample, fit: SmootherFit) -> np.ndarray:
    """eta_i = (Y_i - m_hat) / sigma_hat, centred and scaled with the 1/(n-1) variance."""
    eta = (sample.y - fit.m_hat) / fit.sigma_hat
    if np.ptp(eta) == 0:
        raise ZeroResidualSpread("All standardized residuals are equal.")
    return (eta - eta.mean()) / np.std(eta, ddof=1)


def draw_bootstrap_errors(eps_hat, v: float, rng: np.random.Generator,
                          size: Optional[int] = None) -> np.ndarray:
    eps_hat = np.asarray(eps_hat, dtype=float)
    if eps_hat.size == 0:
        raise ValueError("Cannot resample from an empty residual set.")
    if v < 0:
        raise ValueError("The smoothing parameter v cannot be negative.")
    size = len(eps_hat) if size is None else size
    resampled = rng.choice(eps_hat, size=size, replace=True)
    noise = rng.standard_normal(size)
    if v == 0:
        return resampled
    return resampled + v * noise


def make_null_sample(sample: Sample, fit: SmootherFit, c2_hat: float, errors) -> Sample:
    """Y*_i = c_hat sigma_hat(X_i) + sigma_hat(X_i) eps*_i on the original design."""
    errors = np.asarray(errors, dtype=float)
    if len(errors) != sample.n:
        raise ValueError("One bootstrap error per observation is required.")
    sigma = fit.sigma_hat
    return sample.with_response(math.sqrt(c2_hat) * sigma + sigma * errors)


def replicate_rng(seed: int, replicate: int, attempt: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, replicate, attempt])


def critical_value(t_star, order_index: int) -> float:
    """The order_index-th smallest replicate (1-based)."""
    return float(np.sort(np.asarray(t_star, dtype=float))[order_index - 1])


def p_value(t_observed: float, t_star) -> float:
    t_star = np.asarray(t_star, dtype=float)
    exceed = int(np.sum(t_star >= t_observed))
    return (exceed + 1) / (len(t_star) + 1)


def _fit_and_score(sample: Sample, smoothing: SmoothingConfig, bandwidths,
                   weighted: bool, c2_known: Optional[float]):
    w, w_star = resolve_weights(sample, smoothing, weighted)
    fit = fit_smoother(
        sample, bandwidths, smoothing.kernel,
        inner_weight=w if weighted else None,
        variance_weight=w_star if weighted else None,
    )
    inp = StatisticInput(sample=sample, fit=fit, g=bandwidths.g, kernel=smoothing.kernel,
                         w=w, w_star=w_star)
    c2_hat = estimate_c2(inp).c2_hat
    c2 = c2_known if c2_known is not None else c2_hat
    return inp, c2_hat, c2, t_statistic(inp, c2)


def bootstrap_test(sample: Sample, cfg: BootstrapConfig, smoothing: Optional[SmoothingConfig] = None,
                   weighted: bool = False, c2_known: Optional[float] = None) -> TestOutcome:
    """
    Smooth bootstrap test of a constant coefficient of variation.

    Fits m_hat and sigma2_hat with cross-validated bandwidths, computes c2_hat on
    the trimmed predictor range and T_n(c_hat), then regenerates B null samples
    Y* = c_hat sigma_hat + sigma_hat eps* and recomputes the statistic on each.
    H0 is rejected at level alpha when T_n exceeds the floor(B(1 - alpha))-th
    order statistic of the replicates. With c2_known the statistic T_n(c) uses the
    given constant and the null samples are generated with it.
    """
    smoothing = smoothing or SmoothingConfig()
    if c2_known is not None and not c2_known > 0:
        raise ValueError("A known c2 must be positive.")

    bandwidths = select_bandwidths(sample, smoothing)
    inp, c2_hat, c2_used, t_observed = _fit_and_score(sample, smoothing, bandwidths,
                                                      weighted, c2_known)
    eps_hat = standardize_residuals(sample, inp.fit)
    logger.debug("T_n=%.6g c2_hat=%.6g n=%d", t_observed, c2_hat, sample.n)

    t_star = np.empty(cfg.replicates)
    for b in range(cfg.replicates):
        t_star[b] = _replicate(sample, inp.fit, c2_used, eps_hat, cfg, b, smoothing,
                               bandwidths, weighted, c2_known)

    rejections = {
        alpha: bool(t_observed > critical_value(t_star, cfg.order_index(alpha)))
        for alpha in cfg.alphas
    }
    return TestOutcome(
        t_observed=t_observed,
        c2_hat=c2_hat,
        t_star=t_star,
        p_value=p_value(t_observed, t_star),
        rejections=rejections,
        bandwidths=bandwidths,
        c2_used=c2_used,
        z_diagnostic=_z_diagnostic(inp, t_observed, c2_used),
    )


def _replicate(sample, fit, c2_null, eps_hat, cfg, b, smoothing, bandwidths, weighted, c2_known):
    for attempt in range(cfg.max_redraws + 1):
        rng = replicate_rng(cfg.seed, b, attempt)
        errors = draw_bootstrap_errors(eps_hat, cfg.smoothing_v, rng)
        try:
            null_sample = make_null_sample(sample, fit, c2_null, errors)
            replicate_bw = select_bandwidths(null_sample, smoothing) if smoothing.recv else bandwidths
            return _fit_and_score(null_sample, smoothing, replicate_bw, weighted, c2_known)[3]
        except (NumericalError, ValueError) as exc:
            logger.debug("Replicate %d attempt %d failed: %s", b, attempt, exc)
    raise ReplicateFailure(
        f"Bootstrap replicate {b} failed after {cfg.max_redraws + 1} attempts"
    )


def _z_diagnostic(inp: StatisticInput, t_observed: float, c2: float) -> Optional[float]:
    if inp.sample.n < 10:
        return None
    try:
        return standardized_statistic(inp, t_observed, mu0_plugin(inp, c2))
    except NumericalError:
        return None
