"""Command line entry point.

Usage::

    coupledhj list-presets
    coupledhj run --preset example-4.1 --out results/
    coupledhj cell --config my.yaml --out results/ --set solver.N=256

Exit status: 0 all verdicts pass, 1 a verdict failed, 2 configuration error
(nothing written), 3 numerical nonconvergence (partial artifacts kept).
"""
from __future__ import annotations

import argparse
import sys
from typing import Any, Sequence

import yaml

from coupledhj.config import KINDS, ConfigError, list_presets, preset_data, validate
from coupledhj.runner import EXIT_CONFIG, execute


def _apply_override(data: dict[str, Any], assignment: str) -> None:
    """Set a scalar ``dotted.key=value``; the value is parsed as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like key=value")
    key, raw = assignment.split("=", 1)
    value = yaml.safe_load(raw)
    if isinstance(value, (dict, list)):
        raise ConfigError(f"override {key!r}: only scalar values may be set from the command line")
    parts = key.split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r}: {p!r} is not a mapping")
    node[parts[-1]] = value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coupledhj", description="Coupled Hamilton-Jacobi homogenization experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list-presets", help="print the preset catalog")
    for name in ("run", *KINDS):
        p = sub.add_parser(name, help="run any config" if name == "run" else f"run a '{name}' experiment")
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="YAML experiment file")
        src.add_argument("--preset", help="name of a shipped preset")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--jobs", type=int, help="worker threads")
        p.add_argument("--seed", type=int, help="master random seed")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a scalar config key, e.g. solver.N=256")
    return parser


def _load(args: argparse.Namespace):
    if args.preset:
        data = preset_data(args.preset)
    else:
        data = yaml.safe_load(load_config_text(args.config))
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
    for item in args.set:
        _apply_override(data, item)
    if args.jobs is not None:
        data["jobs"] = args.jobs
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = validate(data)
    if args.command != "run" and cfg.kind != args.command:
        raise ConfigError(f"subcommand {args.command!r} does not match config kind {cfg.kind!r}")
    return cfg


def load_config_text(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-presets":
        for name, desc in list_presets().items():
            print(f"{name:28s} {desc}")
        return 0
    try:
        cfg = _load(args)
    except (ConfigError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = execute(cfg, args.out)
    print(f"{cfg.name}: exit status {status} (artifacts in {args.out})")
    return status


if __name__ == "__main__":
    sys.exit(main())
