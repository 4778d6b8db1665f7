import argparse
import sys
from typing import List, Optional

from commands import simulation, testing
from utils.config import configure_logging


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvtest",
        description="Bootstrap test for a constant coefficient of variation, m(x) = c * sigma(x).",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    testing.add_parser(subparsers)
    simulation.add_parsers(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    return args.handler(args)


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
