"""Closed-loop execution of a policy in the simulator."""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from app.policy.memory import PathMemory
from app.policy.policies import Policy, PolicyOutput, act
from app.sim.dynamics import transition
from app.sim.render import render
from app.sim.types import Action, NoiseSpec, Pose
from app.sim.world import AGENT_RADIUS, World

logger = logging.getLogger(__name__)


@dataclass
class Rollout:
    """Ground-truth trace of one episode; only the loop below ever sees ``poses``."""

    poses: List[Pose] = field(default_factory=list)
    actions: List[Action] = field(default_factory=list)
    outputs: List[PolicyOutput] = field(default_factory=list)
    blocked: List[bool] = field(default_factory=list)
    pointers: List[float] = field(default_factory=list)

    @property
    def final_pose(self) -> Pose:
        return self.poses[-1]

    @property
    def collisions(self) -> int:
        return int(sum(self.blocked))

    @property
    def moves(self) -> int:
        return sum(1 for a in self.actions if a is not Action.STAY)


def run_policy(
    world: World,
    start: Pose,
    policy: Policy,
    memory: PathMemory,
    noise: NoiseSpec,
    horizon: int,
    rng: np.random.Generator,
    greedy: bool = True,
    radius: float = AGENT_RADIUS,
) -> Rollout:
    """Execute ``horizon`` steps from ``start``; the policy gets observations, never poses."""
    trace = Rollout(poses=[start], pointers=[1.0])
    state = policy.begin(memory)
    pose = start
    for _ in range(horizon):
        obs = render(world, pose)
        action, state, output = act(policy, memory, obs, state, greedy=greedy, rng=rng)
        result = transition(world, pose, action, noise, rng, radius=radius)
        pose = result.pose
        trace.poses.append(pose)
        trace.actions.append(action)
        trace.outputs.append(output)
        trace.blocked.append(result.blocked)
        trace.pointers.append(state.pointer)
    return trace
