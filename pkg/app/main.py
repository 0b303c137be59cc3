"""Command-line entry point: ``python -m app.main <command> [options]``."""

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv

from app.config import POLICY_KINDS, RunConfig, load_config, parse_overrides
from app.envgen.demonstration import reverse_demonstration
from app.envgen.generator import generate_world
from app.envgen.sampler import sample_demonstration
from app.errors import CheckpointError, ConfigurationError, RPFError
from app.eval.harness import derive_seed, evaluate, trial_plan, trial_rows
from app.eval.metrics import METRICS
from app.eval.sweep import AXES, CSV_FIELDS, compare_policies, sweep
from app.eval.topview import render_topview
from app.graph.workflow import get_workflow
from app.grad.checkpoint import read_checkpoint
from app.policy.policies import Policy, make_policy
from app.tools.storage import ArtifactStore, init_store
from app.train.check import check_gradients
from app.train.trainer import train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INPUT = 2

TRIAL_FIELDS = [
    "trial_index",
    "initial_dist",
    "final_dist",
    "executed_steps",
    "shortest",
    "collisions",
    "success",
    "spl_term",
    "error",
]


def configure_logging() -> None:
    load_dotenv()
    level = os.getenv("RPF_LOG", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--seed", type=int, help="world seed (gen, demo, render) or run seed (train, eval, sweep)")
    common.add_argument("--workers", type=int, help="worker processes for trials and rollouts")
    common.add_argument("--out", help="output directory")

    policies = argparse.ArgumentParser(add_help=False)
    policies.add_argument("--policy", action="append", choices=POLICY_KINDS, help="policy kind; repeat to compare")
    policies.add_argument(
        "--checkpoint",
        action="append",
        default=[],
        metavar="[KIND=]DIR",
        help="trained parameters; prefix with the kind when several learned policies are given",
    )

    parser = argparse.ArgumentParser(prog="rpf", description="Robust path following: simulate, train, evaluate")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="generate a world")
    gen.add_argument("--file", help="world file name inside the output directory (default world.json)")

    demo = sub.add_parser("demo", parents=[common], help="record a demonstration")
    demo.add_argument("--demo-seed", type=int, default=0)
    demo.add_argument("--reverse", action="store_true", help="also write the reversed (homing) demonstration")

    sub.add_parser("train", parents=[common], help="train the configured policy")

    ev = sub.add_parser("eval", parents=[common, policies], help="evaluate policies on the test split")
    ev.add_argument("--trials", type=int)
    ev.add_argument("--compare", action="store_true", help="evaluate both tasks and write compare.csv")

    sw = sub.add_parser("sweep", parents=[common, policies], help="generalization sweep along one axis")
    sw.add_argument("--axis", required=True, choices=sorted(AXES))
    sw.add_argument("--values", type=float, nargs="+")
    sw.add_argument("--trials", type=int)

    render = sub.add_parser("render", parents=[common, policies], help="top-view SVG of one test episode")
    render.add_argument("--trial", type=int, default=0, help="test trial index to draw")

    gc = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every parameter")
    gc.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    gc.add_argument("--tolerance", type=float)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = parse_overrides(args.set)
    if args.workers is not None:
        overrides["workers"] = str(args.workers)
    if args.out is not None:
        overrides["out"] = args.out
    if args.seed is not None and args.command == "train":
        overrides["trainer.seed"] = str(args.seed)
    if args.seed is not None and args.command in ("eval", "sweep"):
        overrides["eval.seed"] = str(args.seed)
    return load_config(args.config, overrides)


def _checkpoint_map(entries: Sequence[str]) -> Tuple[Dict[str, str], List[str]]:
    keyed, plain = {}, []
    for entry in entries:
        kind, sep, path = entry.partition("=")
        if sep and kind in POLICY_KINDS:
            keyed[kind] = path
        else:
            plain.append(entry)
    return keyed, plain


def resolve_policies(config: RunConfig, kinds: Optional[List[str]], checkpoints: Sequence[str]) -> List[Policy]:
    """Policies with parameters loaded; learned kinds need a checkpoint, open loop does not."""
    keyed, plain = _checkpoint_map(checkpoints)
    if not kinds:
        if plain:
            _, metadata = read_checkpoint(plain[0])
            kinds = [metadata.get("kind", config.policy.kind)]
        else:
            kinds = list(keyed) or [config.policy.kind]
    out = []
    for kind in kinds:
        policy = make_policy(config, kind)
        if policy.learned:
            path = keyed.get(kind)
            if path is None and len(plain) == 1:
                path = plain[0]
            if path is None:
                raise ConfigurationError(f"policy {kind!r} needs a checkpoint: pass --checkpoint {kind}=DIR")
            if not os.path.isdir(path):
                raise ConfigurationError(f"checkpoint directory not found: {path}")
            policy.load(path)
        out.append(policy)
    return out


# commands


def cmd_gen(args, config: RunConfig, store: ArtifactStore) -> int:
    seed = args.seed or 0
    world = generate_world(seed, config.world)
    path = store.save_world(world, args.file or "world.json")
    store.write_manifest(config, "gen", seed)
    print(path)
    return EXIT_OK


def cmd_demo(args, config: RunConfig, store: ArtifactStore) -> int:
    seed = args.seed or 0
    world = generate_world(seed, config.world)
    demo = sample_demonstration(
        world,
        seed=args.demo_seed,
        length=config.demo.length,
        min_clearance=config.demo.clearance,
        retries=config.demo.retries,
        world_seed=seed,
        radius=config.sim.agent_radius,
    )
    store.save_world(world)
    print(store.save_demonstration(demo))
    if args.reverse:
        print(store.save_demonstration(reverse_demonstration(demo, world), "demo_reversed.jsonl"))
    store.write_manifest(config, "demo", seed, {"demo_seed": args.demo_seed})
    return EXIT_OK


def cmd_train(args, config: RunConfig, store: ArtifactStore) -> int:
    store.write_manifest(config, "train", config.trainer.seed)
    path = train(config, store)
    print(path)
    return EXIT_OK


def cmd_eval(args, config: RunConfig, store: ArtifactStore) -> int:
    policies = resolve_policies(config, args.policy, args.checkpoint)
    store.write_manifest(config, "eval", config.eval.seed, {"policies": [p.kind for p in policies]})
    if args.compare:
        rows = compare_policies(config, policies, n_trials=args.trials, store=store)
        errors = sum(int(r["errors"]) for r in rows if r["metric"] == METRICS[0])
        return EXIT_RUNTIME if errors else EXIT_OK

    errors = 0
    for policy in policies:
        report, trials = evaluate(config, policy, n_trials=args.trials)
        store.write_csv(f"eval_{policy.kind}.csv", CSV_FIELDS, report.rows(config.sim.noise))
        store.write_csv(f"trials_{policy.kind}.csv", TRIAL_FIELDS, trial_rows(trials))
        print(
            f"{policy.kind}: success_rate={report.success_rate:.3f} spl={report.spl:.3f} "
            f"median_norm_dist={report.median_norm_dist:.3f} n={report.n_trials} errors={report.n_errors}"
        )
        errors += report.n_errors
    return EXIT_RUNTIME if errors else EXIT_OK


def cmd_sweep(args, config: RunConfig, store: ArtifactStore) -> int:
    policies = resolve_policies(config, args.policy, args.checkpoint)
    store.write_manifest(config, "sweep", config.eval.seed, {"axis": args.axis, "policies": [p.kind for p in policies]})
    results = sweep(config, policies, args.axis, args.values, n_trials=args.trials, store=store)
    errors = sum(report.n_errors for points in results.values() for _, report in points)
    return EXIT_RUNTIME if errors else EXIT_OK


def cmd_render(args, config: RunConfig, store: ArtifactStore) -> int:
    policies = resolve_policies(config, args.policy, args.checkpoint)
    index, world_seed, episode_seed = trial_plan(config, "test", args.trial + 1, config.eval.seed)[args.trial]
    if args.seed is not None:
        world_seed, episode_seed = args.seed, derive_seed(config.eval.seed, args.seed)
    world = demo = None
    rollouts = []
    errors = 0
    for policy in policies:
        final = get_workflow().run_episode(config, policy, world_seed, episode_seed, mode="eval", trial_index=index)
        if final.get("rollout") is None:
            logger.error(f"{policy.kind}: {final.get('error_message')}")
            errors += 1
            continue
        world, demo = final["exec_world"], final["reference"]
        rollouts.append((policy.kind, final["rollout"]))
    if world is None:
        return EXIT_RUNTIME
    path = store.write_text("topview.svg", render_topview(world, demo, rollouts, title=f"world {world_seed}"))
    store.write_manifest(config, "render", world_seed, {"episode_seed": episode_seed})
    print(path)
    return EXIT_RUNTIME if errors else EXIT_OK


def cmd_gradcheck(args, config: RunConfig, store: ArtifactStore) -> int:
    dtype = np.float32 if args.dtype == "float32" else np.float64
    tolerance = args.tolerance or (1e-3 if dtype == np.float32 else 1e-7)
    seed = args.seed or 0
    report = check_gradients(config, dtype=dtype, world_seed=config.seeds.train.seed(seed), episode_seed=seed)
    for line in report.lines():
        print(line)
    print(f"worst max_rel_error={report.worst:.3e} tolerance={tolerance:.0e}")
    store.write_manifest(config, "gradcheck", seed, {"worst": report.worst, "dtype": args.dtype})
    return EXIT_OK if report.passed(tolerance) else EXIT_RUNTIME


COMMANDS = {
    "gen": cmd_gen,
    "demo": cmd_demo,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "render": cmd_render,
    "gradcheck": cmd_gradcheck,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    if args.command == "gen" and args.out and args.out.endswith(".json") and not args.file:
        args.out, args.file = os.path.dirname(args.out) or ".", os.path.basename(args.out)
    try:
        config = resolve_config(args)
        store = init_store(config.out)
        return COMMANDS[args.command](args, config, store)
    except (ConfigurationError, CheckpointError) as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_INPUT
    except RPFError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
