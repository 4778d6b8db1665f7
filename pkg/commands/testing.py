import json
import logging
import sys

from commands.options import add_bootstrap_options, add_output_options, add_smoothing_options
from cv.src.bootstrap import bootstrap_test
from cv.src.generators import embed_series
from utils.config import resolve_seed
from utils.data_io import load_sample, load_series
from utils.errors import CvTestError, DataError, ReplicateFailure
from utils.models import EMBED_MODES, BootstrapConfig, Kernel, SmoothingConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_FAILED = 3


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("test", help="run the bootstrap test on a CSV file")
    parser.add_argument("input", help="CSV file with predictor and response columns")
    parser.add_argument("--x-col", default=None, help="predictor column name or index (default first)")
    parser.add_argument("--y-col", default=None, help="response column name or index (default second)")
    parser.add_argument("--embed", choices=EMBED_MODES, default=None,
                        help="treat a single column as a time series and embed it")
    parser.add_argument("--g", type=float, default=None, help="statistic bandwidth g")
    parser.add_argument("--h-mean", type=float, default=None, help="mean bandwidth (skips CV)")
    parser.add_argument("--h-var", type=float, default=None, help="variance bandwidth (skips CV)")
    parser.add_argument("--recv", action="store_true", help="re-run CV in every replicate")
    parser.add_argument("--known-c2", type=float, default=None,
                        help="test with a known c^2 instead of the estimate")
    add_bootstrap_options(parser)
    add_smoothing_options(parser)
    add_output_options(parser)
    parser.set_defaults(handler=cmd_test)


def _config_echo(args, cfg: BootstrapConfig, smoothing: SmoothingConfig) -> dict:
    return {
        "input": args.input,
        "x_col": args.x_col,
        "y_col": args.y_col,
        "embed": args.embed,
        "weighted": args.weighted,
        "known_c2": args.known_c2,
        "bootstrap": cfg.to_dict(),
        "smoothing": smoothing.to_dict(),
    }


def _render_text(outcome, n: int) -> str:
    bw = outcome.bandwidths
    lines = [
        f"n = {n}",
        f"T_n(c_hat) = {outcome.t_observed:.6g}",
        f"c2_hat     = {outcome.c2_hat:.6g}",
        f"p-value    = {outcome.p_value:.4f} (B = {outcome.replicates})",
        f"bandwidths: h_mean = {bw.h_mean:.4g}, h_var = {bw.h_var:.4g}, g = {bw.g:.4g}",
    ]
    if outcome.c2_used != outcome.c2_hat:
        lines.append(f"known c2   = {outcome.c2_used:.6g}")
    for alpha, rejected in outcome.rejections.items():
        lines.append(f"alpha = {alpha:g}: {'reject H0' if rejected else 'do not reject H0'}")
    return "\n".join(lines) + "\n"


def cmd_test(args) -> int:
    try:
        cfg = BootstrapConfig(replicates=args.replicates, smoothing_v=args.smoothing_v,
                              alphas=args.alphas, seed=resolve_seed(args.seed))
        smoothing = SmoothingConfig(kernel=Kernel(args.kernel), h_mean=args.h_mean,
                                    h_var=args.h_var, g=args.g, recv=args.recv)
        if args.embed:
            sample = embed_series(load_series(args.input, args.x_col), args.embed).sample
        else:
            sample = load_sample(args.input, args.x_col, args.y_col)
    except (DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT

    config = _config_echo(args, cfg, smoothing)
    logger.debug("Resolved configuration: %s", json.dumps(config, sort_keys=True))
    try:
        outcome = bootstrap_test(sample, cfg, smoothing, weighted=args.weighted,
                                 c2_known=args.known_c2)
    except ReplicateFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (CvTestError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT

    if args.output_format == "json":
        payload = outcome.to_dict()
        payload["n"] = sample.n
        payload["config"] = config
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(_render_text(outcome, sample.n))
    return EXIT_OK
