"""On-policy imitation training loop with periodic checkpoints and validation."""

import logging
import math
import multiprocessing
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.config import RunConfig
from app.errors import ConfigurationError, TrainingDivergedError
from app.eval.harness import derive_seed, evaluate
from app.graph.workflow import get_workflow
from app.grad.optim import Adam
from app.policy.policies import Policy, make_policy
from app.tools.storage import ArtifactStore, ArtifactTransaction, get_store
from app.train.labels import imitation_loss

logger = logging.getLogger(__name__)

METRICS_FIELDS = ["iteration", "loss", "val_success", "episodes", "discarded"]
FINAL_CHECKPOINT = "checkpoint"
LAST_GOOD_CHECKPOINT = "checkpoint_last_good"

# per-process policy used by pool workers
_worker_policy: Optional[Policy] = None
_worker_config: Optional[RunConfig] = None


@dataclass
class EpisodeGradients:
    loss: float
    grads: List[np.ndarray]
    steps: int


def episode_gradients(config: RunConfig, policy: Policy, world_seed: int, episode_seed: int) -> Optional[EpisodeGradients]:
    """Roll one on-policy episode, label it, and backpropagate its imitation loss.

    Returns None when the episode has to be discarded (no demonstration could
    be sampled, or a visited state has no label).
    """
    final = get_workflow().run_episode(config, policy, world_seed, episode_seed, mode="train")
    if final.get("error_message"):
        logger.warning(f"Discarded episode {episode_seed}: {final['error_message']}")
        return None

    rollout = final["rollout"]
    params = [p for _, p in policy.named_parameters()]
    for p in params:
        p.zero_grad()
    loss = imitation_loss([o.action_logits for o in rollout.outputs], final["labels"])
    loss.backward()
    grads = [np.array(p.grad, copy=True) if p.grad is not None else np.zeros_like(p.data) for p in params]
    return EpisodeGradients(loss=loss.item(), grads=grads, steps=len(rollout.outputs))


def _init_worker(config: RunConfig) -> None:
    global _worker_policy, _worker_config
    _worker_config = config
    _worker_policy = make_policy(config)


def _worker_episode(args) -> Optional[EpisodeGradients]:
    values, world_seed, episode_seed = args
    for (_, p), v in zip(_worker_policy.named_parameters(), values):
        p.data = v
    return episode_gradients(_worker_config, _worker_policy, world_seed, episode_seed)


def batch_seeds(config: RunConfig, iteration: int) -> List[Tuple[int, int]]:
    """``(world_seed, episode_seed)`` pairs for one iteration's batch."""
    batch = config.trainer.batch
    out = []
    for b in range(batch):
        episode_seed = derive_seed(config.trainer.seed, iteration * batch + b)
        out.append((config.seeds.train.seed(episode_seed), episode_seed))
    return out


def reduce_gradients(results: Sequence[Optional[EpisodeGradients]]) -> Tuple[Optional[List[np.ndarray]], float]:
    """Mean gradient and mean loss over the kept episodes."""
    kept = [r for r in results if r is not None]
    if not kept:
        return None, math.nan
    grads = [np.mean([r.grads[k] for r in kept], axis=0) for k in range(len(kept[0].grads))]
    return grads, float(np.mean([r.loss for r in kept]))


class Trainer:
    """Imitation trainer for one learned policy kind and one task."""

    def __init__(self, config: RunConfig, store: Optional[ArtifactStore] = None, policy: Optional[Policy] = None):
        self.config = config
        self.store = store or get_store()
        self.policy = policy or make_policy(config)
        if not self.policy.learned:
            raise ConfigurationError(f"policy kind {self.policy.kind!r} has no parameters to train")
        self.params = [p for _, p in self.policy.named_parameters()]
        t = config.trainer
        self.optimizer = Adam(self.params, lr=t.lr, beta1=t.beta1, beta2=t.beta2, eps=t.eps)
        self.iteration = 0
        self._pool = None

    # batches

    def _episodes(self, seeds: List[Tuple[int, int]]) -> List[Optional[EpisodeGradients]]:
        if self._pool is None:
            return [episode_gradients(self.config, self.policy, w, e) for w, e in seeds]
        values = [p.data for p in self.params]
        return self._pool.map(_worker_episode, [(values, w, e) for w, e in seeds])

    def train_step(self) -> Tuple[float, int]:
        """One batch and one Adam update; returns (mean loss, kept episode count)."""
        results = self._episodes(batch_seeds(self.config, self.iteration))
        grads, loss = reduce_gradients(results)
        kept = sum(r is not None for r in results)
        self.iteration += 1
        if grads is None:
            logger.warning(f"Iteration {self.iteration}: every episode was discarded, skipping update")
            return loss, 0
        if not math.isfinite(loss) or not all(np.isfinite(g).all() for g in grads):
            raise FloatingPointError(f"non-finite loss or gradient at iteration {self.iteration}")
        self.optimizer.step(grads)
        return loss, kept

    # artifacts

    def save(self, name: str, loss: float) -> str:
        with ArtifactTransaction(self.store, name) as staging:
            self.policy.save(
                staging,
                metadata={
                    "iteration": self.iteration,
                    "loss": loss,
                    "task": self.config.task,
                    "config_hash": self.config.config_hash(),
                },
            )
        return self.store.path(name)

    def validate(self) -> float:
        if self.config.trainer.val_trials == 0:
            return math.nan
        report, _ = evaluate(self.config, self.policy, split="val", n_trials=self.config.trainer.val_trials)
        return report.success_rate

    def run(self) -> str:
        """Train for the configured iterations; returns the final checkpoint directory."""
        t = self.config.trainer
        if os.path.exists(self.store.path("metrics.csv")):
            os.remove(self.store.path("metrics.csv"))
        logger.info(
            f"Training {self.policy.kind} on {self.config.task} for {t.iterations} iterations "
            f"(batch {t.batch}, {self.config.workers} workers)"
        )
        window: List[float] = []
        episodes = discarded = 0
        last_loss = math.nan
        if self.config.workers > 1:
            self._pool = multiprocessing.Pool(self.config.workers, initializer=_init_worker, initargs=(self.config,))
        try:
            while self.iteration < t.iterations:
                snapshot = [p.data.copy() for p in self.params]
                try:
                    loss, kept = self.train_step()
                except FloatingPointError as e:
                    for p, data in zip(self.params, snapshot):
                        p.data = data
                    path = self.save(LAST_GOOD_CHECKPOINT, last_loss)
                    logger.error(f"Training diverged at iteration {self.iteration}: {e}")
                    raise TrainingDivergedError(
                        f"training diverged at iteration {self.iteration}: {str(e)}; last good checkpoint at {path}"
                    ) from e
                episodes += kept
                discarded += t.batch - kept
                if kept:
                    window.append(loss)
                    last_loss = loss
                logger.debug(f"Iteration {self.iteration}: loss {loss:.4f} ({kept}/{t.batch} episodes)")

                if self.iteration % t.checkpoint_every == 0 or self.iteration == t.iterations:
                    mean_loss = float(np.mean(window)) if window else math.nan
                    self.save(os.path.join("checkpoints", f"iter_{self.iteration:06d}"), mean_loss)
                    val_success = self.validate()
                    self.store.append_csv(
                        "metrics.csv",
                        METRICS_FIELDS,
                        {
                            "iteration": self.iteration,
                            "loss": mean_loss,
                            "val_success": val_success,
                            "episodes": episodes,
                            "discarded": discarded,
                        },
                    )
                    logger.info(
                        f"Iteration {self.iteration}/{t.iterations}: loss {mean_loss:.4f}, "
                        f"val success {val_success:.3f}, {discarded} episodes discarded so far"
                    )
                    window = []
        finally:
            if self._pool is not None:
                self._pool.close()
                self._pool.join()
                self._pool = None
        return self.save(FINAL_CHECKPOINT, last_loss)


def train(config: RunConfig, store: Optional[ArtifactStore] = None) -> str:
    """Train ``config.policy.kind`` on ``config.task``; returns the checkpoint directory."""
    return Trainer(config, store).run()
