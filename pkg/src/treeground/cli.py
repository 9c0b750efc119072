"""Command-line workflow: gen-data, train, eval, trace.

Exit codes: 0 success, 2 user/config error, 3 numeric failure during
training. Set TREEGROUND_LOG=debug|info|warning to control verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .agent import TRAIN_STREAM, fresh_store, seed_stream
from .checkpoint import Checkpoint, check_dims_match, load_checkpoint, save_checkpoint
from .config import dump_config, load_run_config
from .episodes import generate_dataset, read_episodes, write_episodes
from .errors import ConfigError, ContractViolation, FormatError, NumericError
from .evaluation import build_report, infer_batch, proportions_csv
from .interval import BRANCH_NAMES, Branch, PrimitiveAction
from .training import train_loop

log = logging.getLogger("treeground")

EXIT_OK = 0
EXIT_USER_ERROR = 2
EXIT_NUMERIC = 3


def _setup_logging():
    level = os.environ.get("TREEGROUND_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _write_config_echo(artifact_path: str, cfg):
    echo_path = artifact_path + ".config.json"
    with open(echo_path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))
    return echo_path


def cmd_gen_data(args) -> int:
    cfg = load_run_config(args.config)
    out = args.out or cfg.paths.data
    count = args.count
    if count < 0:
        raise ConfigError("--count must be >= 0")
    episodes = generate_dataset(cfg.gen, count)
    write_episodes(out, episodes)
    _write_config_echo(out, cfg)
    log.info("wrote %d episodes to %s", count, out)
    print(f"wrote {count} episodes to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    data_path = args.data or cfg.paths.data
    if not os.path.exists(data_path):
        raise ConfigError(f"data file not found: {data_path}")
    episodes = read_episodes(data_path)

    if args.checkpoint:
        ckpt = load_checkpoint(args.checkpoint)
        check_dims_match(ckpt, cfg.encoder)
        store = ckpt.store
        start = ckpt.iteration
        rng = np.random.default_rng()
        if ckpt.rng_state is None:
            raise ConfigError("checkpoint has no sampler state; cannot resume")
        rng.bit_generator.state = ckpt.rng_state
        metrics_mode = "a"
    else:
        store = fresh_store(cfg.encoder, cfg.train.seed)
        start = 0
        rng = seed_stream(cfg.train.seed, TRAIN_STREAM)
        metrics_mode = "w"

    _write_config_echo(cfg.paths.metrics, cfg)
    with open(cfg.paths.metrics, metrics_mode, encoding="utf-8") as metrics_fh:

        def on_metrics(record):
            metrics_fh.write(json.dumps(record, sort_keys=True) + "\n")

        def on_checkpoint(iteration):
            save_checkpoint(
                cfg.paths.checkpoint,
                Checkpoint(
                    store=store,
                    env_cfg=cfg.env,
                    enc_cfg=cfg.encoder,
                    reward_cfg=cfg.reward,
                    train_cfg=cfg.train,
                    iteration=iteration,
                    rng_state=rng.bit_generator.state,
                ),
            )

        train_loop(
            episodes,
            store,
            cfg.env,
            cfg.encoder,
            cfg.reward,
            cfg.train,
            rng,
            start_iteration=start,
            on_metrics=on_metrics,
            on_checkpoint=on_checkpoint,
        )
    print(f"trained to iteration {cfg.train.total_iterations}; "
          f"checkpoint at {cfg.paths.checkpoint}, metrics at {cfg.paths.metrics}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config)
    ckpt_path = args.checkpoint or cfg.paths.checkpoint
    data_path = args.data or cfg.paths.data
    report_path = args.report or cfg.paths.report
    ckpt = load_checkpoint(ckpt_path)
    check_dims_match(ckpt, cfg.encoder)
    episodes = read_episodes(data_path)
    if not episodes:
        raise ConfigError(f"no episodes in {data_path}")
    results = infer_batch(
        episodes, ckpt.store, cfg.env, cfg.encoder, cfg.reward, cfg.train.t_max
    )
    report = build_report(results, cfg.eval_thresholds, cfg.train.t_max,
                          config_echo=cfg.to_dict())
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for key, label in (("branch_proportions_by_step", "step"),
                       ("branch_proportions_by_iou", "iou_bucket")):
        with open(f"{report_path}.{label}.csv", "w", encoding="utf-8") as fh:
            fh.write(proportions_csv(np.asarray(report[key]), label))
    agg = report["aggregates"]
    print(f"evaluated {agg['count']} episodes: MIoU={agg['miou']:.2f}% "
          + " ".join(f"IoU@{k}={v:.2f}%" for k, v in sorted(agg["iou_at"].items())))
    return EXIT_OK


def cmd_trace(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    episodes = read_episodes(args.data)
    matches = [ep for ep in episodes if ep.episode_id == args.episode]
    if not matches:
        raise ConfigError(f"episode {args.episode!r} not found in {args.data}")
    episode = matches[0]
    results = infer_batch(
        [episode], ckpt.store, ckpt.env_cfg, ckpt.enc_cfg, ckpt.reward_cfg,
        ckpt.train_cfg.t_max,
    )[0]
    traj = results.trajectory
    t_star = results.stop_step
    lines = [
        f"episode {episode.episode_id}  N={episode.n_clips}  "
        f"L0=[{traj.initial[0]:.3f},{traj.initial[1]:.3f}]  U0={traj.u0:.4f}",
        f"{'t':>3} {'branch':<22} {'primitive':<12} {'boundary':<24} "
        f"{'U':>8} {'sigma(C)':>9} stop",
    ]
    mark = "<- stop" if t_star == 1 else ""
    lines.append(
        f"{0:>3} {'-':<22} {'-':<12} "
        f"{f'[{traj.initial[0]:.3f}, {traj.initial[1]:.3f}]':<24} {traj.u0:>8.4f} {'-':>9} {mark}"
    )
    for t, step in enumerate(traj.steps, start=1):
        action = PrimitiveAction(Branch(step.branch), step.primitive)
        sigma = 1.0 / (1.0 + np.exp(-step.align_logit))
        mark = "<- stop" if t == t_star - 1 else ""
        lines.append(
            f"{t:>3} {BRANCH_NAMES[Branch(step.branch)]:<22} {action.name:<12} "
            f"{f'[{step.boundary[0]:.3f}, {step.boundary[1]:.3f}]':<24} "
            f"{step.u:>8.4f} {sigma:>9.4f} {mark}"
        )
    b = results.boundary
    lines.append(
        f"stop step t*={t_star}: boundary after step {t_star - 1} = "
        f"[{b.start:.3f}, {b.end:.3f}], IoU {results.terminal_iou:.4f}"
    )
    print("\n".join(lines))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treeground",
        description="Train and evaluate a tree-structured interval grounding agent.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic episode file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="episode file (default: paths.data)")
    p.add_argument("--count", type=int, required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train an agent")
    p.add_argument("--config", required=True)
    p.add_argument("--data", default=None, help="episode file (default: paths.data)")
    p.add_argument("--checkpoint", default=None, help="resume from this checkpoint")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on an episode file")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("trace", help="print the step-by-step refinement of one episode")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--episode", required=True)
    p.set_defaults(fn=cmd_trace)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except NumericError as exc:
        dump_path = "numeric-failure.json"
        with open(dump_path, "w", encoding="utf-8") as fh:
            json.dump(exc.diagnostics, fh, indent=2)
        print(f"error: {exc} (diagnostics dumped to {dump_path})", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ContractViolation, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER_ERROR


if __name__ == "__main__":
    sys.exit(main())
