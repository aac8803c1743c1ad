"""Command line entry point: train, eval, serve, replay, inspect-rewards, bench.

Config override precedence, highest first: CLI `--set section.key=value`
flags, then STRIDERL_<SECTION> environment variables (YAML/JSON mappings),
then the `--config` file, then built-in defaults. Every key that ends up
overridden is printed at startup with its source, so runs can be audited.

Exit codes: 0 success, 2 usage error, 3 configuration error, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import metadata

import yaml

from .configs import ConfigError, load_bundle, merge_section

__all__ = ["dispatch", "main"]

SECTIONS = ("model", "env", "rewards", "train")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3


def _version() -> str:
    try:
        return metadata.version("striderl")
    except metadata.PackageNotFoundError:  # pragma: no cover
        return "0.0.0"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="striderl",
        description="Velocity-commanded bipedal locomotion: simulation, PPO training, teleop.",
    )
    parser.add_argument("--version", action="store_true", help="print the version and exit")
    parser.add_argument("--json", action="store_true", help="machine-readable --version output")
    sub = parser.add_subparsers(dest="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="bundle or single-section YAML config file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--seed", type=int, help="shorthand for --set train.seed=...")
    common.add_argument("--dry-run", action="store_true",
                        help="validate configuration and exit without side effects")
    common.add_argument("--verbose", "-v", action="count", default=0)

    p_train = sub.add_parser("train", parents=[common], help="run PPO training")
    p_train.add_argument("--out", default="runs/train", help="output directory")
    p_train.add_argument("--resume", help="checkpoint to resume from")
    p_train.add_argument("--total-steps", type=int, help="shorthand for --set train.total_steps")
    p_train.add_argument("--num-envs", type=int, help="shorthand for --set train.num_envs")
    p_train.add_argument("--progress", action="store_true", help="print progress lines")

    p_eval = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a command grid")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--grid", default="0,0,0;0.5,0,0;1.0,0,0",
                        help="semicolon-separated vx,vy,wz cells")
    p_eval.add_argument("--episodes", type=int, default=4, help="episodes per cell")
    p_eval.add_argument("--out", default="runs/eval", help="output directory")
    p_eval.add_argument("--traj", action="store_true", help="write trajectory logs per cell")

    p_serve = sub.add_parser("serve", parents=[common], help="run the teleop service")
    p_serve.add_argument("--checkpoint", help="trained policy; omit for the zero-action smoke policy")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.add_argument("--rate-hz", type=float, default=50.0)
    p_serve.add_argument("--decimation", type=int, default=1,
                         help="control steps per broadcast frame")

    p_replay = sub.add_parser("replay", parents=[common],
                              help="recompute rewards from a trajectory log and verify")
    p_replay.add_argument("--log", required=True)
    p_replay.add_argument("--atol", type=float, default=1e-9)

    p_inspect = sub.add_parser("inspect-rewards", parents=[common],
                               help="dump the per-term reward table from a trajectory log")
    p_inspect.add_argument("--log", required=True)
    p_inspect.add_argument("--out", help="CSV path (stdout when omitted)")

    p_bench = sub.add_parser("bench", parents=[common], help="measure env stepping throughput")
    p_bench.add_argument("--envs", type=int, default=1024)
    p_bench.add_argument("--steps", type=int, default=200)
    p_bench.add_argument("--workers", type=int, default=1)
    p_bench.add_argument("--out", help="write the report as JSON here too")
    return parser


def resolve_sections(args) -> dict:
    """Defaults <- config file <- STRIDERL_<SECTION> env vars <- --set flags."""
    sections = load_bundle(args.config)
    sources = {}
    for name in SECTIONS:
        env_key = f"STRIDERL_{name.upper()}"
        if env_key in os.environ:
            try:
                override = yaml.safe_load(os.environ[env_key])
            except yaml.YAMLError as exc:
                raise ConfigError(f"{env_key}: {exc}") from None
            if not isinstance(override, dict):
                raise ConfigError(f"{env_key} must be a YAML/JSON mapping")
            base = sections[name]
            base.pop("schema", None)
            base.update(_checked_keys(name, override, sections[name], env_key))
            sections[name] = merge_section(name, base)
            for k in override:
                sources[f"{name}.{k}"] = env_key
    if args.config:
        sources.setdefault("(file)", args.config)
    for item in args.set or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        path, raw = item.split("=", 1)
        section, key = path.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        value = yaml.safe_load(raw)
        target = sections[section]
        parts = key.split(".")
        node = target
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config key {section}.{key}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {section}.{key}")
        node[parts[-1]] = value
        sources[f"{section}.{key}"] = "--set"
    if getattr(args, "seed", None) is not None:
        sections["train"]["seed"] = args.seed
        sources["train.seed"] = "--seed"
    if getattr(args, "total_steps", None) is not None:
        sections["train"]["total_steps"] = args.total_steps
        sources["train.total_steps"] = "--total-steps"
    if getattr(args, "num_envs", None) is not None:
        sections["train"]["num_envs"] = args.num_envs
        sources["train.num_envs"] = "--num-envs"
    if sources:
        for key, src in sorted(sources.items()):
            print(f"config: {key} <- {src}")
    return sections


def _checked_keys(name: str, override: dict, base: dict, where: str) -> dict:
    for k in override:
        if k not in base:
            raise ConfigError(f"{where}: unknown key {name}.{k}")
    return override


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    if args.version:
        if args.json:
            print(json.dumps({"name": "striderl", "version": _version()}))
        else:
            print(f"striderl {_version()}")
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE

    try:
        return _run_command(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # one-line diagnostic, nonzero exit
        if getattr(args, "verbose", 0):
            raise
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _run_command(args) -> int:
    if args.command == "train":
        sections = resolve_sections(args)
        if args.dry_run:
            print("config ok")
            return EXIT_OK
        from .ppo import train

        summary = train(sections, out_dir=args.out, resume=args.resume,
                        progress=args.progress or args.verbose > 0)
        print(json.dumps({k: v for k, v in summary.items() if k != "checkpoints"}))
        print(f"checkpoint: {summary['checkpoints'][-1]}")
        return EXIT_OK

    if args.command == "eval":
        resolve_sections(args)
        from .ppo import read_checkpoint_header

        read_checkpoint_header(args.checkpoint)  # validate before any work
        if args.dry_run:
            print("config ok")
            return EXIT_OK
        from .runtime import evaluate

        grid = []
        if args.grid.strip():
            for cell in args.grid.split(";"):
                parts = [float(x) for x in cell.split(",")]
                if len(parts) != 3:
                    raise ConfigError(f"grid cell needs vx,vy,wz: {cell!r}")
                grid.append(tuple(parts))
        os.makedirs(args.out, exist_ok=True)
        traj_dir = args.out if args.traj else None
        report = evaluate(args.checkpoint, grid, episodes_per_cell=args.episodes,
                          seed=args.seed or 0, traj_dir=traj_dir)
        out_csv = os.path.join(args.out, "eval_report.csv")
        report.write_csv(out_csv)
        print(f"wrote {out_csv} ({len(report.rows)} cells)")
        return EXIT_OK

    if args.command == "serve":
        resolve_sections(args)
        if args.dry_run:
            print("config ok")
            return EXIT_OK
        from .teleop import run_server

        print(f"serving on {args.host}:{args.port} at {args.rate_hz} Hz")
        run_server(args.checkpoint, args.host, args.port, args.rate_hz,
                   decimation=args.decimation, seed=args.seed or 0)
        return EXIT_OK

    if args.command == "replay":
        if args.dry_run:
            from .trajlog import read_trajectory

            read_trajectory(args.log)
            print("log ok")
            return EXIT_OK
        from .runtime import replay

        deviations = replay(args.log, atol=args.atol)
        worst = max(deviations.values())
        print(f"replay ok: worst per-term deviation {worst:.3e} (atol {args.atol:.0e})")
        return EXIT_OK

    if args.command == "inspect-rewards":
        from .rewards import REWARD_NAMES
        from .trajlog import read_trajectory

        cols = read_trajectory(args.log)
        if args.dry_run:
            print("log ok")
            return EXIT_OK
        import csv as _csv

        names = ["time", *REWARD_NAMES, "total"]
        rows = zip(cols["t"], *(cols[k] for k in REWARD_NAMES), cols["total"])
        out = open(args.out, "w", newline="") if args.out else sys.stdout
        try:
            writer = _csv.writer(out)
            writer.writerow(names)
            for row in rows:
                writer.writerow([repr(float(x)) for x in row])
        finally:
            if args.out:
                out.close()
                print(f"wrote {args.out}")
        return EXIT_OK

    if args.command == "bench":
        resolve_sections(args)
        if args.dry_run:
            print("config ok")
            return EXIT_OK
        from .bench import run_bench

        report = run_bench(num_envs=args.envs, steps=args.steps,
                           workers=args.workers, seed=args.seed or 0)
        print(
            f"bench: {report['env_steps']} env-steps in {report['elapsed_s']:.2f}s "
            f"-> {report['env_steps_per_s']:,.0f} env-steps/s "
            f"({report['ms_per_control_step']:.2f} ms per batched control step, "
            f"{args.envs} envs, {args.workers} worker(s))"
        )
        if args.out:
            with open(args.out, "w") as fh:
                json.dump(report, fh, indent=2)
            print(f"wrote {args.out}")
        return EXIT_OK

    raise AssertionError(f"unhandled command {args.command}")


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
