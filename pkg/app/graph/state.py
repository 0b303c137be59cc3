from typing import TypedDict, List, FrozenSet, Optional

from app.config import RunConfig
from app.envgen.demonstration import Demonstration
from app.envgen.lattice import DistanceField
from app.eval.metrics import TrialResult
from app.policy.memory import PathMemory
from app.policy.policies import Policy
from app.policy.rollout import Rollout
from app.sim.types import Action
from app.sim.world import World


class EpisodeState(TypedDict):
    """State schema for one demonstrate-then-execute episode."""

    # Inputs
    config: RunConfig
    policy: Policy
    mode: str
    task: str
    world_seed: int
    episode_seed: int
    trial_index: int
    greedy: bool
    horizon: int

    # World variants: base layout, demo-time and execution-time
    base_world: Optional[World]
    demo_world: Optional[World]
    exec_world: Optional[World]

    # Reference path and the memory built from it
    demo: Optional[Demonstration]
    reference: Optional[Demonstration]
    memory: Optional[PathMemory]

    # Execution
    exec_field: Optional[DistanceField]
    rollout: Optional[Rollout]

    # Outcomes: oracle labels in train mode, a scored trial in eval mode
    labels: List[FrozenSet[Action]]
    trial: Optional[TrialResult]

    # Metadata and tracking
    nodes_visited: List[str]
    error_message: Optional[str]


# Episode modes
MODES = [
    "train",
    "eval",
]

# Tasks the workflow can route to
TASKS = [
    "following",
    "homing",
]
