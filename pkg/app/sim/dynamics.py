"""Stochastic transition function for the macro-action set."""

import logging
import math

import numpy as np

from app.errors import ContractError
from app.sim.noise import sample_truncated_normal
from app.sim.types import FORWARD_M, NOISELESS, ROTATE_DEG, Action, NoiseSpec, Pose, StepResult
from app.sim.world import AGENT_RADIUS, World

logger = logging.getLogger(__name__)

SWEEP_SPACING_M = 0.02
BISECT_ROUNDS = 8


def transition(
    world: World,
    pose: Pose,
    action: Action,
    noise: NoiseSpec = NOISELESS,
    rng: np.random.Generator = None,
    radius: float = AGENT_RADIUS,
) -> StepResult:
    """Apply ``action`` once; Forward stops at the last collision-free point of its sweep."""
    action = Action(action)
    if world.pose_collides(pose.x, pose.y, radius):
        raise ContractError(f"step called from a colliding pose {pose}")
    if noise.level > 0 and rng is None:
        raise ContractError("a random generator is required when noise is enabled")

    if action is Action.STAY:
        return StepResult(pose)

    if action in (Action.ROTATE_LEFT, Action.ROTATE_RIGHT):
        turn = sample_truncated_normal(ROTATE_DEG, noise.rot_sigma, noise.rot_delta, rng)
        sign = 1.0 if action is Action.ROTATE_LEFT else -1.0
        return StepResult(pose.rotated(sign * turn))

    heading = pose.theta + sample_truncated_normal(0.0, noise.rot_sigma, noise.rot_delta, rng)
    distance = sample_truncated_normal(FORWARD_M, noise.trans_sigma, noise.trans_delta, rng)
    rad = math.radians(heading)
    ux, uy = math.cos(rad), math.sin(rad)

    samples = max(2, int(math.ceil(distance / SWEEP_SPACING_M)) + 1)
    t = np.linspace(0.0, distance, samples)
    hits = world.disk_collides(np.stack([pose.x + t * ux, pose.y + t * uy], axis=1), radius)
    if not hits.any():
        return StepResult(Pose(pose.x + distance * ux, pose.y + distance * uy, heading))

    first = int(np.argmax(hits))
    lo, hi = t[first - 1], t[first]
    for _ in range(BISECT_ROUNDS):
        mid = 0.5 * (lo + hi)
        if world.pose_collides(pose.x + mid * ux, pose.y + mid * uy, radius):
            hi = mid
        else:
            lo = mid
    return StepResult(Pose(pose.x + lo * ux, pose.y + lo * uy, heading), blocked=True)


def step(
    world: World,
    pose: Pose,
    action: Action,
    noise: NoiseSpec = NOISELESS,
    rng: np.random.Generator = None,
    radius: float = AGENT_RADIUS,
) -> Pose:
    return transition(world, pose, action, noise, rng, radius).pose


def replay(world: World, start: Pose, actions, noise: NoiseSpec = NOISELESS, rng=None, radius: float = AGENT_RADIUS):
    """Execute an action sequence open loop; returns every visited pose including ``start``."""
    poses = [start]
    for action in actions:
        poses.append(step(world, poses[-1], action, noise, rng, radius))
    return poses
