"""Command-line front end: ``qdyne run <preset|config.json> [options]``.

Exit status is 0 on success, 2 for usage or configuration errors and 1 for
failures inside a pipeline.  Errors are printed to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import PRESETS, ExperimentConfig, preset
from .errors import ConfigError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdyne", description="Qdyne frequency-spectroscopy simulations")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a preset or a JSON config")
    run.add_argument("target", help=f"preset name ({', '.join(PRESETS)}) or path to a config JSON file")
    run.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
    run.add_argument("--out", help="output directory (created if missing)")
    run.add_argument("--mode", choices=["numeric", "analytic"], help="chain population model")
    run.add_argument("--realizations", type=int, help="ensemble size for averaged studies")
    show = sub.add_parser("config", help="print a preset as a JSON config")
    show.add_argument("name", choices=PRESETS)
    return p


def _error(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def load_target(target: str) -> ExperimentConfig:
    if target in PRESETS:
        return preset(target)
    path = Path(target)
    if not path.is_file():
        raise ConfigError(f"{target!r} is neither a preset ({', '.join(PRESETS)}) nor a config file")
    return ExperimentConfig.load(path)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "config":
        sys.stdout.write(preset(args.name).to_json())
        return 0

    from .experiments import run_experiment

    try:
        cfg = load_target(args.target)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        if args.mode is not None:
            cfg.chain.mode = args.mode
        if args.realizations is not None:
            cfg.analysis.realizations = args.realizations
        cfg.validate()
    except ConfigError as exc:
        return _error("ConfigError", str(exc), 2)

    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        return _error("OutputError", f"cannot write to {out}: {exc}", 2)

    try:
        outcome = run_experiment(cfg, out)
    except Exception as exc:  # report any pipeline failure in structured form
        return _error(type(exc).__name__, str(exc), 1)
    print(outcome.summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
