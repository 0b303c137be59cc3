"""Path-following controller, its memory, and the baseline policies."""

from app.policy.memory import (
    PathMemory,
    attend,
    attention_weights,
    build_memory,
    relative_pose,
    synthesize_features,
)
from app.policy.network import RPFNetwork
from app.policy.policies import (
    ControllerState,
    Policy,
    PolicyOutput,
    act,
    controller_step,
    initial_state,
    make_policy,
)
from app.policy.rollout import Rollout, run_policy

__all__ = [
    "ControllerState",
    "PathMemory",
    "Policy",
    "PolicyOutput",
    "RPFNetwork",
    "Rollout",
    "act",
    "attend",
    "attention_weights",
    "build_memory",
    "controller_step",
    "initial_state",
    "make_policy",
    "relative_pose",
    "run_policy",
    "synthesize_features",
]
