"""Command line entry point: cq-lab <mode> --config <path> [--seed S] [--out DIR]."""

import argparse
import sys
from dataclasses import replace

from .config import MODES, load_config
from .errors import CqLabError
from .runner import run, self_test


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cq-lab",
        description=(
            "Classical-quantum channel coding experiments: capacity quantities, "
            "sequential von Neumann decoding, compound channels, and bisection cascades."
        ),
    )
    parser.add_argument(
        "mode",
        choices=MODES + ("self-test",),
        help="experiment mode, or self-test for the fast invariant battery",
    )
    parser.add_argument("--config", help="path to the JSON experiment configuration")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.mode == "self-test":
        report = self_test()
        for check in report.checks:
            status = "PASS" if check.passed else "FAIL"
            print(f"{status}  {check.name}: {check.detail}")
        print(f"{sum(c.passed for c in report.checks)}/{len(report.checks)} checks passed")
        return 0 if report.passed else 1
    if not args.config:
        print("error: --config is required for experiment modes", file=sys.stderr)
        return 2
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        paths = run(config, out_dir=args.out, mode=args.mode)
    except CqLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for kind in sorted(paths):
        print(f"{kind}: {paths[kind]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
