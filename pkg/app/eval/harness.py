"""Batches of evaluation trials over a seed split, serial or across worker processes."""

import logging
import multiprocessing
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.config import RunConfig, SeedRange
from app.errors import ConfigurationError
from app.eval.metrics import MetricsReport, TrialResult
from app.graph.workflow import get_workflow
from app.policy.policies import Policy

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")

# set in each worker by _init_worker
_worker_config: Optional[RunConfig] = None
_worker_policy: Optional[Policy] = None


def derive_seed(root: int, index: int) -> int:
    """Per-trial seed: first word of ``SeedSequence([root, index])``.

    Depends only on ``(root, index)`` so serial and parallel runs agree.
    """
    return int(np.random.SeedSequence([int(root), int(index)]).generate_state(1)[0])


def split_range(config: RunConfig, split: str) -> SeedRange:
    if split not in SPLITS:
        raise ConfigurationError(f"unknown seed split {split!r}; expected one of {SPLITS}")
    return getattr(config.seeds, split)


def trial_plan(config: RunConfig, split: str, n_trials: int, root: int) -> List[Tuple[int, int, int]]:
    """``(trial_index, world_seed, episode_seed)`` for each trial; worlds cycle through the split."""
    seeds = split_range(config, split)
    return [(i, seeds.seed(i), derive_seed(root, i)) for i in range(n_trials)]


def _failed(index: int, message: str) -> TrialResult:
    return TrialResult(
        initial_dist=float("nan"),
        final_dist=float("nan"),
        executed_steps=0,
        shortest=float("nan"),
        trial_index=index,
        error=message,
    )


def _run_one(config: RunConfig, policy: Policy, job: Tuple[int, int, int], horizon: Optional[int], task: Optional[str]) -> TrialResult:
    index, world_seed, episode_seed = job
    final = get_workflow().run_episode(
        config, policy, world_seed, episode_seed, mode="eval", trial_index=index, horizon=horizon, task=task
    )
    if final.get("trial") is not None:
        return final["trial"]
    return _failed(index, final.get("error_message") or "episode produced no trial")


def _init_worker(config: RunConfig, policy: Policy) -> None:
    global _worker_config, _worker_policy
    _worker_config = config
    _worker_policy = policy


def _worker_trial(args) -> TrialResult:
    job, horizon, task = args
    return _run_one(_worker_config, _worker_policy, job, horizon, task)


def run_trials(
    config: RunConfig,
    policy: Policy,
    split: str = "test",
    n_trials: Optional[int] = None,
    root_seed: Optional[int] = None,
    horizon: Optional[int] = None,
    task: Optional[str] = None,
    workers: Optional[int] = None,
) -> List[TrialResult]:
    """Run greedy evaluation trials; results come back in trial order whatever the worker count."""
    n_trials = config.eval.trials if n_trials is None else n_trials
    root = config.eval.seed if root_seed is None else root_seed
    workers = config.workers if workers is None else workers
    plan = trial_plan(config, split, n_trials, root)
    logger.info(f"Running {n_trials} {task or config.task} trials of {policy.kind} on the {split} split ({workers} workers)")

    if workers <= 1 or n_trials <= 1:
        trials = [_run_one(config, policy, job, horizon, task) for job in plan]
    else:
        with multiprocessing.Pool(workers, initializer=_init_worker, initargs=(config, policy)) as pool:
            trials = pool.map(_worker_trial, [(job, horizon, task) for job in plan])

    errors = [t for t in trials if not t.ok]
    if errors:
        logger.warning(f"{len(errors)} of {n_trials} trials errored; first: {errors[0].error}")
    return trials


def evaluate(
    config: RunConfig,
    policy: Policy,
    split: str = "test",
    n_trials: Optional[int] = None,
    horizon: Optional[int] = None,
    task: Optional[str] = None,
) -> Tuple[MetricsReport, List[TrialResult]]:
    trials = run_trials(config, policy, split=split, n_trials=n_trials, horizon=horizon, task=task)
    report = MetricsReport.from_trials(
        trials, resamples=config.eval.bootstrap, level=config.eval.level, seed=config.eval.seed
    )
    logger.info(
        f"{policy.kind}: success={report.success_rate:.3f} spl={report.spl:.3f} "
        f"median_norm_dist={report.median_norm_dist:.3f} (n={report.n_trials}, errors={report.n_errors})"
    )
    return report, trials


def trial_rows(trials: Sequence[TrialResult]) -> List[dict]:
    return [t.to_row() for t in trials]
