import logging
import os
from typing import Optional

from utils.errors import DataError

DEFAULT_REPLICATES = 100
DEFAULT_SMOOTHING_V = 0.1
DEFAULT_ALPHAS = (0.025, 0.05, 0.1, 0.2)
DEFAULT_SEED = 0
MAX_REDRAWS = 3

DEFAULT_RUNS = 500
DEFAULT_N_LIST = (50, 100, 200)
TABLE1_C_VALUES = (0.5, 1.0, 1.5)
CELL_FAILURE_BUDGET = 0.01

MIN_OBSERVATIONS = 5
DEFAULT_BURN_IN = 200
OVERFLOW_GUARD = 1e8

CV_GRID_SIZE = 20
CV_GRID_BOUNDS = (0.05, 0.5)
# scores within this band of the minimum count as ties
CV_TIE_RTOL = 1e-9
CV_TIE_ATOL = 1e-20

DETERMINANT_GUARD = 1e-12
VARIANCE_FLOOR_REL = 1e-8
VARIANCE_FLOOR_ABS = 1e-12

G_REGIME_TOLERANCE = 10.0
TRIM_QUANTILES = (0.05, 0.95)
WEIGHT_RAMP_FRACTION = 0.05

SEED_ENV_VAR = "CVTEST_SEED"
SEED_MAX = 2**64 - 1


def resolve_seed(seed: Optional[int] = None) -> int:
    """Return the explicit seed, else the CVTEST_SEED environment value, else the default."""
    if seed is None:
        raw = os.environ.get(SEED_ENV_VAR)
        if raw is None or raw.strip() == "":
            return DEFAULT_SEED
        try:
            seed = int(raw.strip())
        except ValueError as exc:
            raise DataError(f"{SEED_ENV_VAR} must be an integer, got '{raw}'") from exc
    if not 0 <= seed <= SEED_MAX:
        raise DataError(f"Seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.captureWarnings(True)
