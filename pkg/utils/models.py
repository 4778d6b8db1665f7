import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, TypeVar

import numpy as np
from scipy.stats import norm

from utils.config import (
    DEFAULT_ALPHAS,
    DEFAULT_BURN_IN,
    DEFAULT_REPLICATES,
    DEFAULT_SEED,
    DEFAULT_SMOOTHING_V,
    MAX_REDRAWS,
    MIN_OBSERVATIONS,
    SEED_MAX,
    WEIGHT_RAMP_FRACTION,
)

T = TypeVar('T')
KERNEL_FAMILIES = ['epanechnikov', 'gaussian-truncated']
DEFAULT_SUPPORT_RADIUS = {'epanechnikov': 1.0, 'gaussian-truncated': 3.0}
MODEL_IDS = ['S6', 'S7', 'S8', 'STA1', 'STA2', 'STA3', 'STA4', 'ARCH1']
IID_MODELS = ['S6', 'S7', 'S8']
EMBED_MODES = ['lag', 'squared-lag']
REPORT_SCHEMA = 1


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a one-dimensional vector.")
    arr.flags.writeable = False
    return arr


def is_strictly_increasing(values: List[T]) -> bool:
    return all(a < b for a, b in zip(values, values[1:]))


@dataclass(frozen=True)
class Kernel:
    """Symmetric second-order kernel with compact support [-radius, radius]."""
    family: str = 'epanechnikov'
    support_radius: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "family", self.family.strip().lower())
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"Invalid kernel '{self.family}'. Must be one of: {KERNEL_FAMILIES}")
        if self.support_radius is None:
            object.__setattr__(self, "support_radius", DEFAULT_SUPPORT_RADIUS[self.family])
        radius = float(self.support_radius)
        if not math.isfinite(radius) or radius <= 0:
            raise ValueError("The kernel support radius must be positive.")
        object.__setattr__(self, "support_radius", radius)

    @property
    def _gaussian_mass(self) -> float:
        r = self.support_radius
        return float(norm.cdf(r) - norm.cdf(-r))

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        r = self.support_radius
        inside = np.abs(u) <= r
        if self.family == 'epanechnikov':
            values = 0.75 / r * (1.0 - (u / r) ** 2)
        else:
            values = norm.pdf(u) / self._gaussian_mass
        return np.where(inside, values, 0.0)

    def second_moment(self) -> float:
        """kappa_2 = integral of u^2 K(u)."""
        r = self.support_radius
        if self.family == 'epanechnikov':
            return r ** 2 / 5.0
        mass = self._gaussian_mass
        return (mass - 2.0 * r * float(norm.pdf(r))) / mass

    def roughness(self) -> float:
        """Integral of K^2."""
        r = self.support_radius
        if self.family == 'epanechnikov':
            return 3.0 / (5.0 * r)
        mass = self._gaussian_mass
        inner = float(norm.cdf(r * math.sqrt(2.0)) - norm.cdf(-r * math.sqrt(2.0)))
        return inner / (2.0 * math.sqrt(math.pi) * mass ** 2)

    def __str__(self):
        return f"{self.family}(r={self.support_radius:g})"


@dataclass(frozen=True, eq=False)
class Sample:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = _frozen_array(self.x, "x")
        y = _frozen_array(self.y, "y")
        if len(x) != len(y):
            raise ValueError("x and y must have the same length.")
        if len(x) < MIN_OBSERVATIONS:
            raise ValueError(f"need at least {MIN_OBSERVATIONS} observations, got {len(x)}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("Sample values must be finite.")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def x_range(self) -> float:
        return float(np.ptp(self.x))

    def with_response(self, y) -> "Sample":
        return Sample(x=self.x, y=y)


@dataclass(frozen=True)
class Bandwidths:
    h_mean: float
    h_var: float
    g: float

    def __post_init__(self):
        for name in ("h_mean", "h_var", "g"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"Bandwidth {name} must be positive, got {value}")
            object.__setattr__(self, name, value)

    def to_dict(self) -> Dict[str, float]:
        return {"h_mean": self.h_mean, "h_var": self.h_var, "g": self.g}


def _smoothstep(t: np.ndarray) -> np.ndarray:
    # quintic ramp, C2 at both ends
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t ** 2)


@dataclass(frozen=True)
class WeightFn:
    """Trimming weight: 1 on [lower+ramp, upper-ramp], 0 outside [lower, upper]."""
    lower: float
    upper: float
    ramp: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("The weight function needs lower < upper.")
        if self.ramp <= 0:
            raise ValueError("The weight ramp must be positive.")
        if self.lower + self.ramp > self.upper - self.ramp:
            raise ValueError("The weight ramp is wider than half the support.")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = np.minimum(x - self.lower, self.upper - x) / self.ramp
        t = np.clip(t, 0.0, 1.0)
        return np.where(t >= 1.0, 1.0, _smoothstep(t))

    def covers(self, other: "WeightFn") -> bool:
        return self.lower <= other.lower and other.upper <= self.upper

    @classmethod
    def covering(cls, x, ramp: Optional[float] = None) -> "WeightFn":
        """Weight equal to 1 on every value of x."""
        x = np.asarray(x, dtype=float)
        span = float(np.ptp(x))
        if ramp is None:
            ramp = WEIGHT_RAMP_FRACTION * span if span > 0 else 1.0
        return cls(lower=float(x.min()) - ramp, upper=float(x.max()) + ramp, ramp=ramp)

    def to_dict(self) -> Dict[str, float]:
        return {"lower": self.lower, "upper": self.upper, "ramp": self.ramp}


@dataclass(frozen=True, eq=False)
class SmootherFit:
    """
    Fitted mean, variance and residuals. sigma2_hat drives residual
    standardization and null regeneration; sigma2_star, when present, is the
    w*-weighted variance used by the weighted scale estimate.
    """
    m_hat: np.ndarray
    sigma2_hat: np.ndarray
    residuals: np.ndarray
    bandwidths: Bandwidths
    sigma2_star: Optional[np.ndarray] = None

    def __post_init__(self):
        m_hat = _frozen_array(self.m_hat, "m_hat")
        sigma2_hat = _frozen_array(self.sigma2_hat, "sigma2_hat")
        residuals = _frozen_array(self.residuals, "residuals")
        if not len(m_hat) == len(sigma2_hat) == len(residuals):
            raise ValueError("Fitted vectors must all have length n.")
        if np.any(sigma2_hat <= 0):
            raise ValueError("Variance estimates must be positive.")
        object.__setattr__(self, "m_hat", m_hat)
        object.__setattr__(self, "sigma2_hat", sigma2_hat)
        object.__setattr__(self, "residuals", residuals)
        if self.sigma2_star is not None:
            sigma2_star = _frozen_array(self.sigma2_star, "sigma2_star")
            if len(sigma2_star) != len(m_hat):
                raise ValueError("Fitted vectors must all have length n.")
            if np.any(sigma2_star <= 0):
                raise ValueError("Variance estimates must be positive.")
            object.__setattr__(self, "sigma2_star", sigma2_star)

    @property
    def n(self) -> int:
        return len(self.m_hat)

    @property
    def sigma_hat(self) -> np.ndarray:
        return np.sqrt(self.sigma2_hat)

    @property
    def scale_variance(self) -> np.ndarray:
        """Variance used in the denominator of c2_hat."""
        return self.sigma2_star if self.sigma2_star is not None else self.sigma2_hat


@dataclass(frozen=True, eq=False)
class StatisticInput:
    """Ingredients of T_n(c). With w_star set, fit.sigma2_star feeds the weighted c2_hat."""
    sample: Sample
    fit: SmootherFit
    g: float
    kernel: Kernel
    w: WeightFn
    w_star: Optional[WeightFn] = None

    def __post_init__(self):
        if self.fit.n != self.sample.n:
            raise ValueError("The fit and the sample must have the same length.")
        if not self.g > 0:
            raise ValueError("The bandwidth g must be positive.")
        if self.w_star is not None and not self.w.covers(self.w_star):
            raise ValueError("The support of w_star must lie inside the support of w.")

    @property
    def weighted(self) -> bool:
        return self.w_star is not None

    def statistic_weights(self) -> np.ndarray:
        weight = self.w_star if self.weighted else self.w
        return weight(self.sample.x)


@dataclass(frozen=True)
class Decomposition:
    t1: float
    t2: float
    t3: float
    t4: float
    t5: float
    t6: float

    def recombine(self, c2: float) -> float:
        a = c2 + 1.0
        return (a ** 2 * self.t1 - 2.0 * a * (2.0 * c2 * self.t2 - self.t3)
                + self.t4 - 4.0 * c2 * (self.t5 - c2 * self.t6))


@dataclass(frozen=True)
class ScaleEstimate:
    c2_hat: float
    numerator: float
    denominator: float

    def __post_init__(self):
        if not self.denominator > 0:
            raise ValueError("The denominator of c2_hat must be positive.")
        if self.c2_hat != self.numerator / self.denominator:
            raise ValueError("c2_hat must equal numerator / denominator.")

    @classmethod
    def from_sums(cls, numerator: float, denominator: float) -> "ScaleEstimate":
        return cls(c2_hat=numerator / denominator, numerator=numerator, denominator=denominator)


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = DEFAULT_REPLICATES
    smoothing_v: float = DEFAULT_SMOOTHING_V
    alphas: Tuple[float, ...] = DEFAULT_ALPHAS
    seed: int = DEFAULT_SEED
    max_redraws: int = MAX_REDRAWS

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if self.replicates < 1:
            raise ValueError("The number of bootstrap replicates must be at least 1.")
        if self.smoothing_v < 0:
            raise ValueError("The smoothing parameter v cannot be negative.")
        if not self.alphas:
            raise ValueError("At least one level alpha is required.")
        if any(not 0 < a < 1 for a in self.alphas):
            raise ValueError("Every alpha must lie in (0, 1).")
        if not is_strictly_increasing(list(self.alphas)):
            raise ValueError("Alphas must be strictly increasing.")
        if not 0 <= self.seed <= SEED_MAX:
            raise ValueError("The seed must be an unsigned 64-bit integer.")
        if self.max_redraws < 0:
            raise ValueError("max_redraws cannot be negative.")

    def order_index(self, alpha: float) -> int:
        """1-based index floor(B(1 - alpha)) of the critical order statistic, clamped to [1, B]."""
        index = math.floor(self.replicates * (1.0 - alpha) + 1e-9)
        return min(max(index, 1), self.replicates)

    def to_dict(self) -> Dict[str, object]:
        return {
            "replicates": self.replicates,
            "smoothing_v": self.smoothing_v,
            "alphas": list(self.alphas),
            "seed": self.seed,
            "max_redraws": self.max_redraws,
        }


@dataclass(frozen=True, eq=False)
class TestOutcome:
    t_observed: float
    c2_hat: float
    t_star: np.ndarray
    p_value: float
    rejections: Dict[float, bool]
    bandwidths: Bandwidths
    c2_used: float
    z_diagnostic: Optional[float] = None

    __test__ = False  # not a pytest class

    def __post_init__(self):
        object.__setattr__(self, "t_star", _frozen_array(self.t_star, "t_star"))
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("The p-value must lie in [0, 1].")

    @property
    def replicates(self) -> int:
        return len(self.t_star)

    def to_dict(self) -> Dict[str, object]:
        return {
            "t_n": self.t_observed,
            "c2_hat": self.c2_hat,
            "c2_used": self.c2_used,
            "p_value": self.p_value,
            "rejections": {repr(alpha): bool(flag) for alpha, flag in self.rejections.items()},
            "bandwidths": self.bandwidths.to_dict(),
            "replicates": self.replicates,
            "t_star": [float(t) for t in self.t_star],
            "z_diagnostic": self.z_diagnostic,
        }


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    n: int
    c: Optional[float] = None
    theta0: Optional[float] = None
    theta1: Optional[float] = None
    burn_in: int = DEFAULT_BURN_IN
    eta_fourth_moment: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "model_id", self.model_id.strip().upper())
        if self.model_id not in MODEL_IDS:
            raise ValueError(f"Invalid model '{self.model_id}'. Must be one of: {MODEL_IDS}")
        if self.n < MIN_OBSERVATIONS:
            raise ValueError(f"need at least {MIN_OBSERVATIONS} observations, got {self.n}")
        if self.burn_in < 0:
            raise ValueError("The burn-in cannot be negative.")
        if self.model_id in IID_MODELS and (self.c is None or not self.c > 0):
            raise ValueError(f"Model {self.model_id} needs a positive c.")
        if self.model_id == 'ARCH1':
            if self.theta0 is None or self.theta1 is None:
                raise ValueError("ARCH1 needs theta0 and theta1.")
            if self.theta0 < 0 or self.theta1 < 0:
                raise ValueError("ARCH1 parameters cannot be negative.")
            if self.theta1 >= 1:
                raise ValueError("ARCH1 needs theta1 < 1 for stationarity.")
            if not self.eta_fourth_moment > 1:
                raise ValueError("The innovation fourth moment must exceed 1.")

    @property
    def is_time_series(self) -> bool:
        return self.model_id not in IID_MODELS

    def label(self) -> str:
        if self.model_id in IID_MODELS:
            return f"{self.model_id} c={self.c:g}"
        if self.model_id == 'ARCH1':
            return f"ARCH1 theta0={self.theta0:g} theta1={self.theta1:g}"
        return self.model_id

    def to_dict(self) -> Dict[str, object]:
        return {
            "model_id": self.model_id,
            "n": self.n,
            "c": self.c,
            "theta0": self.theta0,
            "theta1": self.theta1,
            "burn_in": self.burn_in,
            "eta_fourth_moment": self.eta_fourth_moment,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "ModelSpec":
        return cls(**data)


@dataclass(frozen=True, eq=False)
class EmbeddedSeries:
    raw: np.ndarray
    sample: Sample
    mode: str
    innovations: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "raw", _frozen_array(self.raw, "raw"))
        if self.mode not in EMBED_MODES:
            raise ValueError(f"Invalid embedding '{self.mode}'. Must be one of: {EMBED_MODES}")
        if self.sample.n != len(self.raw) - 1:
            raise ValueError("An embedded sample has one observation fewer than its series.")
        if self.innovations is not None:
            object.__setattr__(self, "innovations", _frozen_array(self.innovations, "innovations"))


@dataclass(frozen=True)
class SmoothingConfig:
    kernel: Kernel = field(default_factory=Kernel)
    grid: Optional[Tuple[float, ...]] = None
    h_mean: Optional[float] = None
    h_var: Optional[float] = None
    g: Optional[float] = None
    w: Optional[WeightFn] = None
    w_star: Optional[WeightFn] = None
    recv: bool = False

    def __post_init__(self):
        if self.grid is not None:
            grid = tuple(float(h) for h in self.grid)
            if not grid:
                raise ValueError("The bandwidth grid cannot be empty.")
            if any(h <= 0 for h in grid):
                raise ValueError("Grid bandwidths must be positive.")
            if sorted(grid) != list(grid):
                raise ValueError("The bandwidth grid must be sorted ascending.")
            object.__setattr__(self, "grid", grid)
        for name in ("h_mean", "h_var", "g"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"Bandwidth override {name} must be positive.")

    def to_dict(self) -> Dict[str, object]:
        return {
            "kernel": self.kernel.family,
            "support_radius": self.kernel.support_radius,
            "grid": list(self.grid) if self.grid is not None else None,
            "h_mean": self.h_mean,
            "h_var": self.h_var,
            "g": self.g,
            "w": self.w.to_dict() if self.w is not None else None,
            "w_star": self.w_star.to_dict() if self.w_star is not None else None,
            "recv": self.recv,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "SmoothingConfig":
        def weight(entry):
            return WeightFn(**entry) if entry is not None else None

        return cls(
            kernel=Kernel(data["kernel"], data["support_radius"]),
            grid=tuple(data["grid"]) if data["grid"] is not None else None,
            h_mean=data["h_mean"],
            h_var=data["h_var"],
            g=data["g"],
            w=weight(data["w"]),
            w_star=weight(data["w_star"]),
            recv=data["recv"],
        )


@dataclass(frozen=True)
class McCell:
    spec: ModelSpec
    alphas: Tuple[float, ...] = DEFAULT_ALPHAS

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if not self.alphas or not is_strictly_increasing(list(self.alphas)):
            raise ValueError("Cell alphas must be nonempty and strictly increasing.")


@dataclass(frozen=True)
class McPlan:
    cells: Tuple[McCell, ...]
    runs: int
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    master_seed: int = DEFAULT_SEED
    parallelism: int = 1
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    weighted: bool = False

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        if self.runs < 1:
            raise ValueError("A plan needs at least one run per cell.")
        if self.parallelism < 1:
            raise ValueError("Parallelism must be at least 1.")
        if not 0 <= self.master_seed <= SEED_MAX:
            raise ValueError("The master seed must be an unsigned 64-bit integer.")


@dataclass(frozen=True)
class CellReport:
    cell_index: int
    spec: ModelSpec
    alphas: Tuple[float, ...]
    runs: int
    rejection_counts: Tuple[int, ...]
    failures: int
    mean_c2: Optional[float]

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "rejection_counts", tuple(int(k) for k in self.rejection_counts))
        if len(self.alphas) != len(self.rejection_counts):
            raise ValueError("One rejection count per alpha is required.")
        if not 0 <= self.failures <= self.runs:
            raise ValueError("Failures must lie between 0 and the number of runs.")

    @property
    def completed(self) -> int:
        return self.runs - self.failures

    @property
    def frequencies(self) -> Tuple[float, ...]:
        if self.completed == 0:
            return tuple(0.0 for _ in self.rejection_counts)
        return tuple(k / self.completed for k in self.rejection_counts)

    @property
    def std_errors(self) -> Tuple[float, ...]:
        if self.completed == 0:
            return tuple(0.0 for _ in self.rejection_counts)
        return tuple(math.sqrt(p * (1.0 - p) / self.completed) for p in self.frequencies)

    def to_dict(self) -> Dict[str, object]:
        return {
            "cell_index": self.cell_index,
            "spec": self.spec.to_dict(),
            "alphas": list(self.alphas),
            "runs": self.runs,
            "failures": self.failures,
            "rejection_counts": list(self.rejection_counts),
            "frequencies": list(self.frequencies),
            "std_errors": list(self.std_errors),
            "mean_c2": self.mean_c2,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "CellReport":
        return cls(
            cell_index=data["cell_index"],
            spec=ModelSpec.from_dict(data["spec"]),
            alphas=tuple(data["alphas"]),
            runs=data["runs"],
            rejection_counts=tuple(data["rejection_counts"]),
            failures=data["failures"],
            mean_c2=data["mean_c2"],
        )


@dataclass(frozen=True)
class McReport:
    cells: Tuple[CellReport, ...]
    master_seed: int
    bootstrap: BootstrapConfig
    runs: int
    weighted: bool = False
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))

    def to_dict(self) -> Dict[str, object]:
        bootstrap = self.bootstrap.to_dict()
        bootstrap.pop("seed")
        cells = []
        for cell in self.cells:
            entry = cell.to_dict()
            # run r of this cell draws from the stream keyed [master_seed, cell_index, r]
            entry["seed_entropy"] = [self.master_seed, cell.cell_index]
            cells.append(entry)
        return {
            "schema": REPORT_SCHEMA,
            "master_seed": self.master_seed,
            "runs": self.runs,
            "weighted": self.weighted,
            "smoothing": self.smoothing.to_dict(),
            "bootstrap": bootstrap,
            "cells": cells,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "McReport":
        if data.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"Unsupported report schema {data.get('schema')}")
        bootstrap = dict(data["bootstrap"])
        return cls(
            cells=tuple(CellReport.from_dict(cell) for cell in data["cells"]),
            master_seed=data["master_seed"],
            bootstrap=BootstrapConfig(seed=data["master_seed"], **bootstrap),
            runs=data["runs"],
            weighted=data["weighted"],
            smoothing=SmoothingConfig.from_dict(data["smoothing"]),
        )
