"""Single-trial execution and scoring against the execution world's distance field."""

import logging
import math
from typing import Optional

import numpy as np

from app.envgen.demonstration import Demonstration
from app.envgen.lattice import DistanceField, LatticeGraph, distance_field
from app.eval.metrics import TrialResult
from app.policy.memory import PathMemory
from app.policy.policies import Policy
from app.policy.rollout import Rollout, run_policy
from app.sim.types import NoiseSpec
from app.sim.world import World

logger = logging.getLogger(__name__)


def goal_field(world: World, reference: Demonstration, graph: Optional[LatticeGraph] = None) -> DistanceField:
    """Distance-to-goal over ``world`` for the reference's final cell."""
    goal = reference.goal
    return distance_field(world, world.cell_of(goal.x, goal.y), graph=graph)


def score_rollout(field: DistanceField, rollout: Rollout, trial_index: int = -1) -> TrialResult:
    """Distances in macro-action steps; the shortest path is the start's geodesic distance."""
    initial = field.at_pose(rollout.poses[0])
    if not math.isfinite(initial) or initial <= 0:
        return TrialResult(
            initial_dist=initial,
            final_dist=math.inf,
            executed_steps=rollout.moves,
            shortest=initial,
            collisions=rollout.collisions,
            trial_index=trial_index,
            error=f"start is {initial} steps from the goal",
        )
    return TrialResult(
        initial_dist=initial,
        final_dist=field.at_pose(rollout.final_pose),
        executed_steps=rollout.moves,
        shortest=initial,
        collisions=rollout.collisions,
        trial_index=trial_index,
    )


def run_trial(
    world_exec: World,
    demo: Demonstration,
    policy: Policy,
    noise: NoiseSpec,
    horizon: int = 40,
    seed: int = 0,
    memory: Optional[PathMemory] = None,
    field: Optional[DistanceField] = None,
    trial_index: int = -1,
) -> TrialResult:
    """Roll ``policy`` from the start of ``demo`` for ``horizon`` steps and score it.

    ``demo`` is the path being retraced: the forward demonstration for
    following, the reversed one for homing. Collisions are counted, not fatal.
    """
    if memory is None:
        memory = policy.following_memory(demo)
    if field is None:
        field = goal_field(world_exec, demo)
    rollout = run_policy(world_exec, demo.start, policy, memory, noise, horizon, np.random.default_rng(seed))
    return score_rollout(field, rollout, trial_index)
