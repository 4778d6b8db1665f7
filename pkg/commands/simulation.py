import sys

from commands.options import (
    add_bootstrap_options,
    add_output_options,
    add_smoothing_options,
    int_list,
)
from commands.testing import EXIT_BAD_INPUT, EXIT_FAILED, EXIT_OK
from cv.src.harness import emit_report, run_plan, simulate_plan, table1_plan, table2_plan
from utils.config import DEFAULT_BURN_IN, DEFAULT_N_LIST, DEFAULT_RUNS, resolve_seed
from utils.errors import CellFailure, DataError
from utils.models import MODEL_IDS, BootstrapConfig, Kernel, McPlan, SmoothingConfig

REPORT_FORMAT = {"text": "text-table", "json": "json", "csv": "csv"}


def _add_plan_options(parser, with_levels: bool) -> None:
    parser.add_argument("--runs", type=int, default=DEFAULT_RUNS,
                        help="Monte Carlo runs per cell (default %(default)s)")
    parser.add_argument("--n-list", type=int_list, default=DEFAULT_N_LIST,
                        help="comma-separated sample sizes")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes")
    add_bootstrap_options(parser, with_levels=with_levels)
    add_output_options(parser, formats=tuple(REPORT_FORMAT))


def add_parsers(subparsers) -> None:
    simulate = subparsers.add_parser("simulate", help="Monte Carlo for one model")
    simulate.add_argument("--model", required=True, type=str.upper, choices=MODEL_IDS)
    simulate.add_argument("--c", type=float, default=None, help="scale c for S6-S8")
    simulate.add_argument("--theta0", type=float, default=None, help="ARCH1 intercept")
    simulate.add_argument("--theta1", type=float, default=None, help="ARCH1 slope")
    simulate.add_argument("--n", type=int, default=None, help="single sample size")
    simulate.add_argument("--burn-in", type=int, default=DEFAULT_BURN_IN)
    _add_plan_options(simulate, with_levels=True)
    add_smoothing_options(simulate)
    simulate.set_defaults(handler=cmd_simulate)

    for name, helptext, handler in (
        ("table1", "rejection probabilities of the regression models", cmd_table1),
        ("table2", "rejection probabilities of the autoregressive models", cmd_table2),
    ):
        parser = subparsers.add_parser(name, help=helptext)
        _add_plan_options(parser, with_levels=False)
        parser.set_defaults(handler=handler)


def _execute(plan: McPlan, output_format: str) -> int:
    try:
        report = run_plan(plan)
    except CellFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    sys.stdout.write(emit_report(report, REPORT_FORMAT[output_format]))
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        bootstrap = BootstrapConfig(replicates=args.replicates, smoothing_v=args.smoothing_v,
                                    alphas=args.alphas)
        plan = simulate_plan(
            args.model, args.runs, bootstrap,
            n_list=(args.n,) if args.n is not None else args.n_list,
            master_seed=resolve_seed(args.seed), parallelism=args.jobs,
            smoothing=SmoothingConfig(kernel=Kernel(args.kernel)), weighted=args.weighted,
            c=args.c, theta0=args.theta0, theta1=args.theta1, burn_in=args.burn_in,
        )
    except (DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    return _execute(plan, args.output_format)


def _table_command(args, builder) -> int:
    try:
        plan = builder(runs=args.runs, bootstrap=BootstrapConfig(replicates=args.replicates),
                       n_list=args.n_list, master_seed=resolve_seed(args.seed),
                       parallelism=args.jobs)
    except (DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    return _execute(plan, args.output_format)


def cmd_table1(args) -> int:
    return _table_command(args, table1_plan)


def cmd_table2(args) -> int:
    return _table_command(args, table2_plan)
