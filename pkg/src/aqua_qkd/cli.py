"""Command-line front end.

Usage: aqua-qkd <scenario> --config <path> [--seed N] [--out <path>]
                [--format csv|json]

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import SCENARIOS, ConfigError, load_config, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aqua-qkd",
        description="BB84 QKD simulation over scattering underwater optical channels",
    )
    sub = parser.add_subparsers(dest="scenario", required=True)
    for scenario in SCENARIOS:
        sp = sub.add_parser(scenario, help=f"run the {scenario} scenario")
        sp.add_argument("--config", required=True, help="path to the JSON scenario config")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="output file path")
        sp.add_argument(
            "--format", choices=("csv", "json"), default=None, help="output format"
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config,
            overrides={
                "scenario": args.scenario,
                "seed": args.seed,
                "output_format": args.format,
                "output_path": args.out,
            },
        )
    except ConfigError as exc:
        print(f"aqua-qkd: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        text = run_scenario(cfg)
    except ConfigError as exc:
        print(f"aqua-qkd: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"aqua-qkd: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if cfg.output_path is None:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
