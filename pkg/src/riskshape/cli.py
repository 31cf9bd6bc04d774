"""Command-line front end: gen-track, train, eval, compare.

Exit codes: 0 success, 2 usage or config error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from riskshape.agents import LEARNERS
from riskshape.config import ExperimentConfig, WorldConfig, dump_resolved, load_config
from riskshape.harness import TrainingAborted, compare, evaluate, train
from riskshape.reward import PRESETS
from riskshape.world import TrackGenerationError

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("riskshape")


class UsageError(Exception):
    """Bad flags or an invalid config; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        return load_config(path)
    except FileNotFoundError as exc:
        raise UsageError(f"config not found: {path}") from exc
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid config {path}: {exc}") from exc


def _stamp() -> str:
    return time.strftime("%Y%m%d-%H%M%S")


def cmd_gen_track(args) -> int:
    world = WorldConfig() if args.config is None else _load(args.config).world
    track = world.build_track(args.seed)
    out = Path(args.out)
    try:
        out.write_text(track.to_json())
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc}") from exc
    print(f"track seed={args.seed}: {len(track.tiles)} tiles, {len(track.obstacles)} obstacles -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load(args.config)
    if args.reward is not None:
        cfg = cfg.with_reward(args.reward)
    elif cfg.reward is None:
        raise UsageError("no reward given: pass --reward or set [reward] in the config")
    base = Path(args.out or cfg.output)
    preset_name = cfg.reward_preset or "custom"
    run_dir = base / f"{args.agent}_{preset_name}_{args.seed}_{_stamp()}"
    run_dir.mkdir(parents=True, exist_ok=False)
    cfg = replace(cfg, harness=replace(cfg.harness, seeds=(args.seed,)), output=str(base))
    dump_resolved(cfg, run_dir / "config.toml", agent=args.agent)
    h = cfg.harness
    res = train(args.agent, cfg.reward, cfg.world, h.episodes, args.seed, cfg.agent_hyper(args.agent),
                h.observation, h.raster_size, run_dir, h.checkpoint_every, h.trace)
    last = res.curve.episodes[-1]
    print(f"trained {args.agent}/{preset_name} seed={args.seed}: {len(res.curve.episodes)} episodes, "
          f"last r_cum={last.r_cum:.2f} t_srv={last.t_srv} -> {run_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ck = Path(args.checkpoint)
    if not ck.is_file():
        raise UsageError(f"checkpoint not found: {ck}")
    out = Path(args.out) if args.out else ck.parent
    try:
        summary = evaluate(ck, args.episodes, args.seed, out_dir=out)
    except (KeyError, ValueError) as exc:  # includes JSONDecodeError and obs_dim mismatch
        raise UsageError(f"incompatible checkpoint {ck}: {exc}") from exc
    print(f"eval {summary.agent}/{summary.preset} over {args.episodes} episodes: "
          f"T_srv={summary.mean_t_srv:.2f} R_cum={summary.mean_r_cum:.2f} std={summary.std_r_cum:.2f} -> {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args.config)
    agents = [a.strip() for a in args.agents.split(",") if a.strip()]
    if not agents:
        raise UsageError("--agents needs at least one agent")
    bad = [a for a in agents if a not in LEARNERS]
    if bad:
        raise UsageError(f"unknown agents: {bad}")
    seeds = tuple(range(args.seeds)) if args.seeds is not None else cfg.harness.seeds
    if not seeds:
        raise UsageError("--seeds must be >= 1")
    cfg = replace(cfg, harness=replace(cfg.harness, seeds=seeds))
    presets = [cfg.reward_preset] if cfg.reward is not None and cfg.reward_preset in PRESETS else list(PRESETS)
    out = Path(args.out or cfg.output) / f"compare_{_stamp()}"
    out.mkdir(parents=True, exist_ok=False)
    dump_resolved(cfg, out / "config.toml")
    report = compare(agents, presets, seeds, cfg, out)
    print(report.to_markdown())
    print(f"report -> {out / 'report.md'}")
    return EXIT_RUNTIME if report.failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="riskshape", description="Risk-aware reward shaping experiments on a procedural racing track.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-track", help="generate a track and write it as JSON")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--config", help="read track and obstacle settings from a config's [world] section")
    g.set_defaults(func=cmd_gen_track)

    t = sub.add_parser("train", help="train one agent under one reward preset")
    t.add_argument("--config")
    t.add_argument("--agent", required=True, choices=sorted(LEARNERS))
    t.add_argument("--reward", choices=sorted(PRESETS))
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", help="parent directory for the run (default: [output] directory)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="greedy test-mode evaluation of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--seed", type=int, default=0, help="episode i starts from seed + i")
    e.add_argument("--out", help="output directory (default: the checkpoint's directory)")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", help="agents x {default, reshaped} x seeds, with a summary report")
    c.add_argument("--config")
    c.add_argument("--agents", default="dqn,ddpg,ppo")
    c.add_argument("--seeds", type=int, help="use seeds 0..k-1 (default: [harness] seeds)")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "episodes", 1) < 1:
        print("usage error: --episodes must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrackGenerationError, TrainingAborted) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
