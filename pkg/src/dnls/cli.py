"""Command line entry point: ``dnls <experiment> --config cfg.json``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import EXPERIMENT_TAGS, ConfigError, ExperimentConfig, run, write_outputs
from .io import write_trajectory

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dnls", description="Lattice NLS continuum-limit experiments.")
    p.add_argument("experiment", choices=EXPERIMENT_TAGS)
    p.add_argument("--config", required=True, help="JSON file mirroring ExperimentConfig")
    p.add_argument("--out", default=None, help="output directory (default: config 'output' or ./out)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_PASS
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read configuration {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        tag = raw.setdefault("experiment", args.experiment)
        if tag != args.experiment:
            raise ConfigError(f"config is for {tag!r}, command asked for {args.experiment!r}")
        if args.seed is not None:
            raw["seed"] = args.seed
        cfg = ExperimentConfig.from_dict(raw)
        out = Path(args.out or cfg.output or "out")
        report = run(cfg, threads=args.threads)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_outputs(report, out)
    if "trajectory" in report.artifacts:
        write_trajectory(out / "trajectory", report.artifacts["trajectory"], sigma=cfg.sigma)
    for name, verdict in report.verdicts.items():
        print(f"{verdict:4s} {cfg.experiment}: {name}")
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
