"""Command line entry point ``traction-gap``.

Exit codes: 0 success, 2 a demo check failed, 3 configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import DEMOS, ConfigError, check_loads, default_scenario, load_scenario, run_scenario
from .report import FORMATS, emit_report, to_jsonable

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 3), keeping 2 for failed checks."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _formats(text: str) -> tuple[str, ...]:
    items = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in items if s not in FORMATS]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"formats must be a comma list from {','.join(FORMATS)}")
    return items


def _seed(text: str) -> int:
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("seed must be an integer") from None
    if not 0 <= val < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return val


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--formats", type=_formats, default=FORMATS, help="comma list of json,csv,svg")
    common.add_argument("--seed", type=_seed, default=None, help="override the scenario seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="traction-gap",
                                     description="Pure-traction elasticity experiments with the gap functional.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run the scenario described by a config file")
    p.add_argument("config")
    p = sub.add_parser("demo", parents=[common], help="run a built-in demo with its default scenario")
    p.add_argument("name", choices=DEMOS)
    p = sub.add_parser("check-loads", parents=[common], help="classify the load of a config file")
    p.add_argument("config")
    return parser


def _summary(report) -> str:
    lines = [f"scenario {report.scenario.get('name')} (demo {report.demo})"]
    for c in report.checks:
        tol = "" if c.tolerance is None else f" tol={c.tolerance:g}"
        lines.append(f"  [{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.value!r}{tol}")
    for k, v in report.verdicts.items():
        lines.append(f"  verdict {k}: {v}")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        sc = default_scenario(args.name) if args.command == "demo" else load_scenario(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        sc = sc.with_seed(args.seed)

    if args.command == "check-loads":
        try:
            result = check_loads(sc)
        except ValueError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(json.dumps(to_jsonable(result), indent=2, sort_keys=True))
        return EXIT_OK

    report = run_scenario(sc)
    try:
        paths = emit_report(report, args.out, args.formats)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(_summary(report))
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
