import argparse
from typing import Tuple

from utils.config import DEFAULT_ALPHAS, DEFAULT_REPLICATES, DEFAULT_SMOOTHING_V
from utils.models import KERNEL_FAMILIES


def float_list(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from exc


def int_list(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from exc


def add_bootstrap_options(parser: argparse.ArgumentParser, with_levels: bool = True) -> None:
    parser.add_argument("--B", dest="replicates", type=int, default=DEFAULT_REPLICATES,
                        help="bootstrap replicates (default %(default)s)")
    parser.add_argument("--seed", type=int, default=None,
                        help="random seed (falls back to $CVTEST_SEED, then 0)")
    if with_levels:
        parser.add_argument("--v", dest="smoothing_v", type=float, default=DEFAULT_SMOOTHING_V,
                            help="bootstrap smoothing parameter v (default %(default)s)")
        parser.add_argument("--alphas", type=float_list, default=DEFAULT_ALPHAS,
                            help="comma-separated test levels")


def add_smoothing_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--kernel", choices=KERNEL_FAMILIES, default="epanechnikov")
    parser.add_argument("--weighted", action="store_true",
                        help="use the additionally weighted estimators and statistic")


def add_output_options(parser: argparse.ArgumentParser, formats=("text", "json")) -> None:
    parser.add_argument("--format", choices=formats, default="text", dest="output_format")
    parser.add_argument("--json", action="store_const", const="json", dest="output_format",
                        help="shorthand for --format json")
