"""2D navigation simulator: worlds, actuation noise, transitions and scans."""

from app.sim.dynamics import replay, step, transition
from app.sim.noise import sample_truncated_normal
from app.sim.render import render, rotated_render
from app.sim.types import NOISELESS, Action, NoiseSpec, Observation, Pose, StepResult
from app.sim.world import World, WorldObject, apply_change, open_world

__all__ = [
    "Action",
    "NOISELESS",
    "NoiseSpec",
    "Observation",
    "Pose",
    "StepResult",
    "World",
    "WorldObject",
    "apply_change",
    "open_world",
    "render",
    "replay",
    "rotated_render",
    "sample_truncated_normal",
    "step",
    "transition",
]
