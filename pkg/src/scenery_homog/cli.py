"""Command line entry point: ``scenery-homog <kind> --config FILE``."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import BudgetError, ConfigError, SceneryError
from .experiments import KINDS, run
from .parallel import ENV_WORKERS, resolve_workers

EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_RESOURCE = 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scenery-homog",
                                description="Homogenization experiments for parabolic equations "
                                            "with random space-time potentials.")
    p.add_argument("kind", choices=[k.replace("_", "-") for k in KINDS])
    p.add_argument("--config", help="JSON config file (flags override its fields)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--workers", type=int, help=f"worker processes (default ${ENV_WORKERS} or 1)")
    p.add_argument("--check", action="store_true", help="exit non-zero if an acceptance check fails")
    p.add_argument("--out", help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    kind = args.kind.replace("-", "_")
    config = {}
    if args.config:
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: {args.config}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if not isinstance(config, dict):
            print(f"error: {args.config}: /: config must be a JSON object", file=sys.stderr)
            return EXIT_CONFIG
        if config.get("kind", kind) != kind:
            print(f"error: /kind: config is for {config['kind']!r}, command is {kind!r}", file=sys.stderr)
            return EXIT_CONFIG
    config["kind"] = kind
    try:
        manifest = run(config, out_dir=args.out, workers=resolve_workers(args.workers), seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except SceneryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    for c in manifest.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['check']}: {c['reason']}")
    print(f"wrote {len(manifest.files)} files to {manifest.config['output']} "
          f"(config {manifest.config_hash[:12]}, {manifest.wall_clock:.1f} s)")
    if args.check and not manifest.passed:
        return EXIT_CHECK_FAILED
    return 0


if __name__ == "__main__":
    sys.exit(main())
