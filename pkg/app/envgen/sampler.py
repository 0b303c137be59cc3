"""Reference trajectory sampling with length and clearance control."""

import logging
import math
from typing import Optional

import numpy as np

from app.envgen.demonstration import Demonstration
from app.envgen.lattice import LatticeGraph, LatticeState, distance_field, state_pose
from app.envgen.planner import plan_poses
from app.errors import DemonstrationSamplingError
from app.sim.render import render
from app.sim.types import Action
from app.sim.world import AGENT_RADIUS, World

logger = logging.getLogger(__name__)

LENGTH_TOLERANCE = 0.1


def length_band(length: int):
    """Accepted geodesic lengths for a target of ``length`` macro-actions."""
    return (
        int(math.ceil((1.0 - LENGTH_TOLERANCE) * length - 1e-9)),
        int(math.floor((1.0 + LENGTH_TOLERANCE) * length + 1e-9)),
    )


def sample_demonstration(
    world: World,
    seed: int,
    length: int = 30,
    min_clearance: float = 0.6,
    retries: int = 200,
    exec_world: Optional[World] = None,
    world_seed: Optional[int] = None,
    change_r: float = 0.0,
    radius: float = AGENT_RADIUS,
) -> Demonstration:
    """Sample start and goal about ``length`` steps apart and record a noiseless planned path.

    ``exec_world``, when given, is the world the demonstration will be
    executed in; start and goal must be usable there as well.
    """
    rng = np.random.default_rng(seed)
    low, high = length_band(length)
    restricted = LatticeGraph(world, min_clearance)
    unrestricted = LatticeGraph(world)
    exec_graph = LatticeGraph(exec_world) if exec_world is not None else None
    goal_cells = np.argwhere(restricted.traversable)
    if len(goal_cells) == 0:
        raise DemonstrationSamplingError(f"no cell has clearance {min_clearance} m in this world")

    for attempt in range(retries):
        gi, gj = (int(v) for v in goal_cells[rng.integers(len(goal_cells))])
        field = distance_field(world, (gi, gj), graph=restricted)
        candidates = field.reachable_states(low, high)
        if len(candidates) == 0:
            continue
        start_state = LatticeState(*(int(v) for v in candidates[rng.integers(len(candidates))]))
        start = state_pose(world, start_state)
        if world.pose_collides(start.x, start.y, radius):
            continue

        geodesic = distance_field(world, (gi, gj), graph=unrestricted).at(start_state)
        if not low <= geodesic <= high:
            continue

        if exec_world is not None:
            if exec_world.pose_collides(start.x, start.y, radius) or not exec_graph.traversable[gi, gj]:
                continue
            if not math.isfinite(distance_field(exec_world, (gi, gj), graph=exec_graph).at(start_state)):
                continue

        plan = plan_poses(world, start, field, min_clearance, radius)
        if plan is None or not low <= len(plan) - 1 <= high:
            logger.debug(f"Demo attempt {attempt}: plan rejected")
            continue
        end = plan[-1][0]
        if exec_world is not None and exec_world.pose_collides(end.x, end.y, radius):
            continue

        poses = tuple(pose for pose, _ in plan)
        actions = tuple(action for _, action in plan[:-1]) + (Action.STAY,)
        observations = tuple(render(world, pose) for pose in poses)
        logger.info(
            f"Sampled demonstration seed={seed}: {len(poses)} poses, geodesic {geodesic:.0f} "
            f"(attempt {attempt + 1})"
        )
        return Demonstration(
            poses=poses,
            actions=actions,
            observations=observations,
            world_seed=world_seed,
            change_r=change_r,
            metadata={"demo_seed": seed, "geodesic": geodesic, "min_clearance": min_clearance},
        )

    raise DemonstrationSamplingError(
        f"no start/goal pair of length {length} with clearance {min_clearance} m after {retries} attempts"
    )
