"""Environment generation, distance oracle, planning and demonstrations."""

from app.envgen.demonstration import Demonstration, reverse_demonstration
from app.envgen.generator import generate_world
from app.envgen.lattice import (
    DistanceField,
    LatticeGraph,
    LatticeState,
    distance_field,
    lattice_state,
    state_pose,
)
from app.envgen.planner import AStarPlanner, plan_poses
from app.envgen.sampler import length_band, sample_demonstration

__all__ = [
    "AStarPlanner",
    "Demonstration",
    "DistanceField",
    "LatticeGraph",
    "LatticeState",
    "distance_field",
    "generate_world",
    "lattice_state",
    "length_band",
    "plan_poses",
    "reverse_demonstration",
    "sample_demonstration",
    "state_pose",
]
