"""Finite-difference check of the full controller loss on real episodes."""

import logging
from typing import Callable, FrozenSet, List, Sequence

import numpy as np

from app.config import RunConfig
from app.errors import ContractError
from app.graph.workflow import get_workflow
from app.grad.gradcheck import GradCheckReport, grad_check
from app.grad.tensor import Tensor
from app.policy.memory import PathMemory
from app.policy.policies import Policy, make_policy
from app.sim.render import render
from app.sim.types import Action, Observation
from app.train.labels import imitation_loss

logger = logging.getLogger(__name__)

CHECK_STEPS = 4


def replay_loss(
    policy: Policy,
    memory: PathMemory,
    observations: Sequence[Observation],
    labels: Sequence[FrozenSet[Action]],
) -> Tensor:
    """Imitation loss of ``policy`` fed a fixed observation sequence."""
    state = policy.begin(memory)
    logits = []
    for obs in observations:
        output, state = policy.act(memory, obs, state)
        logits.append(output.action_logits)
    return imitation_loss(logits, labels)


def episode_loss_fn(config: RunConfig, policy: Policy, world_seed: int, episode_seed: int, steps: int = CHECK_STEPS) -> Callable[[], Tensor]:
    """Loss over one following and one homing episode, with memory rebuilt on every call.

    Observations and labels are fixed from a noiseless greedy rollout so the
    returned closure depends on the parameters only.
    """
    config = config.with_overrides({"sim.noise": 0.0})
    parts = []
    for task in ("following", "homing"):
        final = get_workflow().run_episode(
            config, policy, world_seed, episode_seed, mode="train", greedy=True, horizon=steps, task=task
        )
        if final.get("error_message"):
            raise ContractError(f"gradient check episode failed: {final['error_message']}")
        world = final["exec_world"]
        observations = [render(world, pose) for pose in final["rollout"].poses[:-1]]
        parts.append((task, final["demo"], final["reference"], observations, final["labels"]))
    source = config.homing.memory

    def loss_fn() -> Tensor:
        total = None
        for task, demo, reference, observations, labels in parts:
            if task == "following":
                memory = policy.following_memory(demo)
            else:
                memory = policy.homing_memory(demo, reference, source)
            loss = replay_loss(policy, memory, observations, labels)
            total = loss if total is None else total + loss
        return total

    return loss_fn


def check_gradients(
    config: RunConfig,
    dtype=np.float64,
    world_seed: int = 0,
    episode_seed: int = 0,
    max_entries: int = 16,
) -> GradCheckReport:
    """Compare backprop and central differences for every parameter tensor of ``config.policy.kind``."""
    policy = make_policy(config)
    params: List = list(policy.named_parameters())
    if not params:
        raise ContractError(f"policy kind {policy.kind!r} has no parameters to check")
    loss_fn = episode_loss_fn(config, policy, world_seed, episode_seed)
    report = grad_check(loss_fn, params, analytic_dtype=dtype, max_entries=max_entries, seed=episode_seed)
    logger.info(f"Gradient check of {len(params)} tensors: worst relative error {report.worst:.3e}")
    return report
