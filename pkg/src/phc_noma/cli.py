"""Command-line entry point.

    phc-noma simulate --config cfg.txt --out results/
    phc-noma simulate --preset fig8 --out results/ --seed 7 --workers 4
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .harness import (
    PRESETS,
    exit_chart_experiment,
    load_config,
    preset_config,
    run_experiment,
)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phc-noma")
    sub = p.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", help="run a Monte-Carlo experiment and write CSV")
    sim.add_argument("--config", type=Path, help="flat key=value config file")
    sim.add_argument("--preset", choices=sorted(PRESETS), help="figure preset")
    sim.add_argument("--out", type=Path, required=True, help="output directory")
    sim.add_argument("--seed", type=int, help="override master seed")
    sim.add_argument("--workers", type=int, help="trial-level worker processes")
    sim.add_argument("--scheme", help="comma-separated scheme subset override")
    sim.add_argument("--trials", type=int, help="override trial count")
    sim.add_argument("--frames", type=int, help="override frames per trial")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command != "simulate":  # pragma: no cover
        return 2
    if not args.config and not args.preset:
        print("error: need --config or --preset", file=sys.stderr)
        return 2
    config_text = None
    if args.config:
        try:
            config_text = args.config.read_text()
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 1
        try:
            cfg = load_config(args.config)
        except ValueError as exc:
            print(f"error: bad config: {exc}", file=sys.stderr)
            return 2
        if args.preset:
            cfg = replace(preset_config(args.preset), **{
                k: getattr(cfg, k) for k in ("seed", "trials", "workers") if getattr(cfg, k)
            })
    else:
        cfg = preset_config(args.preset)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.frames is not None:
        overrides["frames"] = args.frames
    if args.scheme:
        overrides["schemes"] = tuple(s.strip() for s in args.scheme.split(",") if s.strip())
    if overrides:
        cfg = replace(cfg, **overrides)
    try:
        if args.preset == "exit":
            path = exit_chart_experiment(cfg, args.out)
        else:
            path = run_experiment(cfg, args.out, config_text=config_text)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
