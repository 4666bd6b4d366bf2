"""Command-line experiment front door: train / evaluate / trace / repair-bench.

Every number written by these commands comes straight from library calls;
the CLI only handles config ingestion, seed fan-out and CSV/JSONL emission.
All randomness derives from the manifest seed list, so a rerun with the same
manifest reproduces identical artifacts (timestamps live only in the
manifest).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import mappo
from .config import RunBundle, bundle_to_dict, config_hash, load_config
from .env import TrackingEnv, trace_header, trace_record, write_trace_line
from .errors import ConfigInvalid, SwarmTrackError
from .mappo import EpisodeMetrics, Trainer
from .repair import repair as sa_repair
from .repair import RepairFailed, sa_objective, synthetic_violating_context

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

METRIC_COLUMNS = ["episode", "mean_reward", "TE", "violations_c7", "violations_c8", "repairs_invoked"]


def moving_average(series: Sequence[float], window: int) -> List[float]:
    """Trailing mean over up to ``window`` samples; constants map to themselves."""
    out = []
    acc = 0.0
    vals = list(series)
    for i, v in enumerate(vals):
        acc += v
        if i >= window:
            acc -= vals[i - window]
        out.append(acc / min(i + 1, window))
    return out


def parse_seeds(args) -> List[int]:
    if args.seed_list:
        try:
            seeds = [int(s) for s in args.seed_list.split(",") if s.strip() != ""]
        except ValueError as exc:
            raise ConfigInvalid(f"bad --seed-list: {exc}") from exc
    else:
        seeds = list(range(args.seeds))
    if not seeds:
        raise ConfigInvalid("need at least one seed (--seeds N or --seed-list)")
    return seeds


def write_metrics_csv(path: Path, rows: List[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in METRIC_COLUMNS})


def write_manifest(out_dir: Path, bundle: RunBundle, seeds: List[int], command: str) -> dict:
    manifest = {
        "command": command,
        "config": bundle_to_dict(bundle),
        "config_hash": config_hash(bundle),
        "seeds": seeds,
        "out_dir": str(out_dir),
        "created_unix": time.time(),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def _load_bundle(args) -> RunBundle:
    if args.config:
        return load_config(args.config)
    return RunBundle()


def _build_trainer(bundle: RunBundle, seed: int, repair_enabled: bool) -> Trainer:
    return Trainer(
        scenario=bundle.scenario,
        train_cfg=replace(bundle.train, seed=seed),
        factors=bundle.factors,
        sa_cfg=bundle.sa,
        tracker_cfg=bundle.tracker,
        repair_enabled=repair_enabled,
    )


def cmd_train(args) -> int:
    bundle = _load_bundle(args)
    seeds = parse_seeds(args)
    out_dir = Path(args.out)
    write_manifest(out_dir, bundle, seeds, "train")
    chash = config_hash(bundle)

    all_rows: List[List[dict]] = []
    for seed in seeds:
        trainer = _build_trainer(bundle, seed, repair_enabled=not args.no_repair)
        metrics = trainer.train()
        rows = [m.csv_row() for m in metrics]
        write_metrics_csv(out_dir / f"metrics_seed{seed}.csv", rows)
        mappo.save_checkpoint(trainer, out_dir / f"checkpoint_seed{seed}.pt", chash)
        all_rows.append(rows)
        print(f"seed {seed}: {len(rows)} episodes, "
              f"final mean_reward {rows[-1]['mean_reward']:.4f}, TE {rows[-1]['TE']:.2f}")

    n_episodes = min(len(r) for r in all_rows)
    window = bundle.experiment.smooth_window
    agg_path = out_dir / "aggregate.csv"
    mean_reward = [float(np.mean([r[e]["mean_reward"] for r in all_rows])) for e in range(n_episodes)]
    mean_te = [float(np.mean([r[e]["TE"] for r in all_rows])) for e in range(n_episodes)]
    smooth_reward = moving_average(mean_reward, window)
    smooth_te = moving_average(mean_te, window)
    with open(agg_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "mean_reward", "TE", "mean_reward_smooth", "TE_smooth"])
        for e in range(n_episodes):
            writer.writerow([e, mean_reward[e], mean_te[e], smooth_reward[e], smooth_te[e]])
    print(f"wrote {agg_path}")
    return EXIT_OK


def _policy_fn_for_eval(args, bundle: RunBundle, env: TrackingEnv):
    if args.random_policy:
        return mappo.random_action_fn(env)
    if not args.checkpoint:
        raise ConfigInvalid("evaluate needs --checkpoint or --random-policy")
    policy, _, tc = mappo.load_policy_value(args.checkpoint, expected_hash=config_hash(bundle))
    return mappo.policy_action_fn(policy, env, tc, stochastic=False)


def cmd_evaluate(args) -> int:
    bundle = _load_bundle(args)
    seeds = parse_seeds(args)
    out_dir = Path(args.out)
    write_manifest(out_dir, bundle, seeds, "evaluate")
    episodes = args.episodes if args.episodes is not None else bundle.experiment.eval_episodes

    summary_rows: List[EpisodeMetrics] = []
    for seed in seeds:
        env = TrackingEnv(
            bundle.scenario,
            factors=bundle.factors,
            tracker_cfg=bundle.tracker,
            sa_cfg=bundle.sa,
            repair_enabled=not args.no_repair,
        )
        fn = _policy_fn_for_eval(args, bundle, env)
        rng = np.random.default_rng(seed)
        rows = []
        for ep in range(episodes):
            m = mappo.run_episode(env, rng, fn, episode_index=ep)
            rows.append(m.csv_row())
            summary_rows.append(m)
        write_metrics_csv(out_dir / f"eval_seed{seed}.csv", rows)

    if not summary_rows:
        print("no episodes evaluated")
        return EXIT_OK
    summary = {
        "episodes": len(summary_rows),
        "mean_reward": float(np.mean([m.mean_reward for m in summary_rows])),
        "mean_TE": float(np.mean([m.te for m in summary_rows])),
        "violations_c7": int(sum(m.violations_c7 for m in summary_rows)),
        "violations_c8": int(sum(m.violations_c8 for m in summary_rows)),
        "predicted_c8": int(sum(m.predicted_c8 for m in summary_rows)),
        "repairs_invoked": int(sum(m.repairs_invoked for m in summary_rows)),
        "fallbacks": int(sum(m.fallbacks for m in summary_rows)),
    }
    with open(out_dir / "eval_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    for k, v in summary.items():
        print(f"{k}: {v}")
    return EXIT_OK


def cmd_trace(args) -> int:
    bundle = _load_bundle(args)
    seeds = parse_seeds(args)
    seed = seeds[0] if seeds else 0
    out_dir = Path(args.out)
    write_manifest(out_dir, bundle, [seed], "trace")

    env = TrackingEnv(
        bundle.scenario,
        factors=bundle.factors,
        tracker_cfg=bundle.tracker,
        sa_cfg=bundle.sa,
        repair_enabled=not args.no_repair,
    )
    fn = _policy_fn_for_eval(args, bundle, env)
    rng = np.random.default_rng(seed)
    obs = env.reset(rng)
    path = out_dir / "trace.jsonl"
    with open(path, "w") as fh:
        write_trace_line(fh, trace_header(bundle.scenario, config_hash(bundle)))
        done = False
        while not done:
            actions = fn(obs, rng)
            obs, breakdowns, done, info = env.step(actions)
            write_trace_line(fh, trace_record(env.world, info.lb, breakdowns))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_repair_bench(args) -> int:
    bundle = _load_bundle(args)
    seeds = parse_seeds(args)
    seed = seeds[0] if seeds else 0
    out_dir = Path(args.out)
    write_manifest(out_dir, bundle, [seed], "repair-bench")
    rng = np.random.default_rng(seed)

    n_repaired = 0
    improvements = []
    times = []
    for _ in range(args.trials):
        candidate, ctx = synthetic_violating_context(
            rng, d0=bundle.scenario.d0, d2=bundle.scenario.d2,
            factors=bundle.factors, lb_ceiling=bundle.scenario.lb_ceiling,
        )
        before = sa_objective(candidate, ctx, bundle.sa)
        t0 = time.perf_counter()
        try:
            fixed = sa_repair(candidate, ctx, bundle.sa, rng)
            n_repaired += 1
            improvements.append(before - sa_objective(fixed, ctx, bundle.sa))
        except RepairFailed:
            pass
        times.append(time.perf_counter() - t0)

    stats = {
        "trials": args.trials,
        "repaired_fraction": (n_repaired / args.trials) if args.trials else 0.0,
        "mean_objective_improvement": float(np.mean(improvements)) if improvements else 0.0,
        "mean_wall_time_s": float(np.mean(times)) if times else 0.0,
    }
    with open(out_dir / "repair_bench.json", "w") as fh:
        json.dump(stats, fh, indent=2)
    for k, v in stats.items():
        print(f"{k}: {v}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmtrack",
        description="multi-UAV radar tracking experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="INI config path (defaults used if omitted)")
        p.add_argument("--out", default="runs/out", help="output directory")
        p.add_argument("--seeds", type=int, default=1, help="use seeds 0..N-1")
        p.add_argument("--seed-list", default=None, help="explicit comma-separated seeds")
        p.add_argument("--no-repair", action="store_true", help="disable the annealing repair")

    p_train = sub.add_parser("train", help="train MAPPO, one run per seed")
    common(p_train)
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("evaluate", help="frozen-policy evaluation")
    common(p_eval)
    p_eval.add_argument("--checkpoint", default=None)
    p_eval.add_argument("--episodes", type=int, default=None)
    p_eval.add_argument("--random-policy", action="store_true")
    p_eval.set_defaults(fn=cmd_evaluate)

    p_trace = sub.add_parser("trace", help="dump one episode as line-delimited records")
    common(p_trace)
    p_trace.add_argument("--checkpoint", default=None)
    p_trace.add_argument("--random-policy", action="store_true")
    p_trace.set_defaults(fn=cmd_trace)

    p_bench = sub.add_parser("repair-bench", help="standalone repair statistics")
    common(p_bench)
    p_bench.add_argument("--trials", type=int, default=100)
    p_bench.set_defaults(fn=cmd_repair_bench)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SwarmTrackError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
