"""Data-generating processes for the simulation models and time-series embeddings."""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from utils.config import OVERFLOW_GUARD
from utils.errors import ExplosiveSeries
from utils.models import EmbeddedSeries, ModelSpec, Sample

logger = logging.getLogger(__name__)

RealFunction = Callable[[np.ndarray], np.ndarray]
InnovationSampler = Callable[[np.random.Generator, int], np.ndarray]


def standard_normal(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.standard_normal(size)


@dataclass(frozen=True)
class TrueFunctions:
    m: RealFunction
    sigma: RealFunction
    h0_holds: bool
    c_true: Optional[float] = None


def _linear_trend(x):
    return 1.0 + 0.1 * np.asarray(x, dtype=float)


def _sine_trend(x):
    return np.sin(1.0 + 0.5 * np.asarray(x, dtype=float))


def arch_scale(eta_fourth_moment: float = 3.0) -> float:
    """c = (E[eta^4] - 1)^(-1/2); 1/sqrt(2) for normal innovations."""
    return 1.0 / math.sqrt(eta_fourth_moment - 1.0)


def true_functions(spec: ModelSpec) -> TrueFunctions:
    model = spec.model_id
    if model == 'S6':
        return TrueFunctions(lambda x: spec.c * _linear_trend(x), _linear_trend, True, spec.c)
    if model == 'S7':
        return TrueFunctions(lambda x: spec.c * _linear_trend(x),
                             lambda x: _linear_trend(x) + np.sqrt(x), False)
    if model == 'S8':
        return TrueFunctions(lambda x: spec.c * _linear_trend(x),
                             lambda x: _linear_trend(x) + 2.0 * np.sqrt(x), False)
    if model == 'STA1':
        return TrueFunctions(_linear_trend, _linear_trend, True, 1.0)
    if model == 'STA2':
        return TrueFunctions(_sine_trend, _sine_trend, True, 1.0)
    if model == 'STA3':
        return TrueFunctions(_linear_trend, lambda x: 0.5 * np.sqrt(np.abs(x)), False)
    if model == 'STA4':
        return TrueFunctions(_sine_trend, lambda x: np.cos(1.0 + 0.5 * np.asarray(x, dtype=float)),
                             False)

    # ARCH1: Z_t^2 = m(Z_{t-1}^2) + sigma(Z_{t-1}^2) eps_t with sigma = m / c
    c = arch_scale(spec.eta_fourth_moment)

    def arch_mean(x):
        return spec.theta0 + spec.theta1 * np.asarray(x, dtype=float)

    return TrueFunctions(arch_mean, lambda x: arch_mean(x) / c, True, c)


def draw_iid(spec: ModelSpec, rng: np.random.Generator,
             sampler: InnovationSampler = standard_normal) -> Tuple[Sample, np.ndarray]:
    """i.i.d. pairs with X ~ U[0, 1] and Y = m(X) + sigma(X) eps; returns the errors too."""
    if spec.is_time_series:
        raise ValueError(f"Model {spec.model_id} is a time series model.")
    truth = true_functions(spec)
    x = rng.uniform(0.0, 1.0, spec.n)
    eps = np.asarray(sampler(rng, spec.n), dtype=float)
    return Sample(x=x, y=truth.m(x) + truth.sigma(x) * eps), eps


def embed_series(raw, mode: str = 'lag', innovations=None) -> EmbeddedSeries:
    """Pair each value with its predecessor: X_t = Z_{t-1} (lag) or X_t = Z_{t-1}^2, Y_t = Z_t^2."""
    raw = np.asarray(raw, dtype=float)
    if mode == 'squared-lag':
        values = raw ** 2
    elif mode == 'lag':
        values = raw
    else:
        raise ValueError(f"Invalid embedding '{mode}'.")
    return EmbeddedSeries(raw=raw, sample=Sample(x=values[:-1], y=values[1:]), mode=mode,
                          innovations=innovations)


def _recursion_step(spec: ModelSpec) -> Callable[[float, float], float]:
    if spec.model_id == 'ARCH1':
        return lambda z, eta: math.sqrt(spec.theta0 + spec.theta1 * z * z) * eta
    truth = true_functions(spec)
    return lambda z, eta: float(truth.m(z)) + float(truth.sigma(z)) * eta


def simulate_series(spec: ModelSpec, rng: np.random.Generator,
                    sampler: InnovationSampler = standard_normal) -> EmbeddedSeries:
    """Run the recursion from Z_0 = 0, drop the burn-in and embed the remaining n + 1 values."""
    if not spec.is_time_series:
        raise ValueError(f"Model {spec.model_id} is not a time series model.")
    steps = spec.burn_in + spec.n + 1
    eta = np.asarray(sampler(rng, steps), dtype=float)
    step = _recursion_step(spec)

    z = np.empty(steps)
    previous = 0.0
    for t in range(steps):
        previous = step(previous, eta[t])
        if not abs(previous) <= OVERFLOW_GUARD:
            raise ExplosiveSeries(
                f"{spec.label()} left the overflow guard at step {t} (|Z_t| = {abs(previous):.3g})"
            )
        z[t] = previous

    kept = slice(spec.burn_in, None)
    mode = 'squared-lag' if spec.model_id == 'ARCH1' else 'lag'
    # innovations aligned with the responses Y_1..Y_n
    return embed_series(z[kept], mode, innovations=eta[kept][1:])


def generate(spec: ModelSpec, rng: np.random.Generator,
             sampler: InnovationSampler = standard_normal) -> Union[Sample, EmbeddedSeries]:
    if spec.is_time_series:
        return simulate_series(spec, rng, sampler)
    return draw_iid(spec, rng, sampler)[0]


def regression_sample(data: Union[Sample, EmbeddedSeries]) -> Sample:
    return data.sample if isinstance(data, EmbeddedSeries) else data
