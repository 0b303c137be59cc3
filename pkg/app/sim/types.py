"""Core simulator value types: poses, macro-actions, noise settings, observations."""

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import List

import numpy as np

from app.errors import ContractError

FORWARD_M = 0.4
ROTATE_DEG = 30.0
N_RAYS = 32
FOV_DEG = 120.0
MAX_RANGE_M = 8.0
CLASS_NAMES = ("wall", "objectA", "objectB", "nothing")
RAY_WIDTH = 1 + len(CLASS_NAMES)


class Action(IntEnum):
    """Macro-actions; the integer value is the logit index."""

    STAY = 0
    ROTATE_LEFT = 1
    ROTATE_RIGHT = 2
    FORWARD = 3

    def reversed(self) -> "Action":
        """Action that undoes this one when driving the path backwards."""
        if self is Action.ROTATE_LEFT:
            return Action.ROTATE_RIGHT
        if self is Action.ROTATE_RIGHT:
            return Action.ROTATE_LEFT
        return self


def normalize_degrees(theta: float) -> float:
    wrapped = float(theta) % 360.0
    # -1e-17 % 360 rounds up to 360.0
    return 0.0 if wrapped >= 360.0 else wrapped


@dataclass(frozen=True)
class Pose:
    """Agent state: position in meters, heading in degrees counter-clockwise from +x."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ContractError(f"pose has non-finite components: {self}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_degrees(self.theta))

    def rotated(self, offset_deg: float) -> "Pose":
        return Pose(self.x, self.y, self.theta + offset_deg)

    def flipped(self) -> "Pose":
        return self.rotated(180.0)

    def as_list(self) -> List[float]:
        return [self.x, self.y, self.theta]


@dataclass(frozen=True)
class NoiseSpec:
    """Actuation noise; ``level`` scales every truncation half-width."""

    level: float = 0.2
    rot_sigma: float = 57.3
    trans_sigma: float = 0.05

    def __post_init__(self):
        if self.level < 0:
            raise ContractError(f"noise level must be non-negative, got {self.level}")

    @property
    def rot_delta(self) -> float:
        return self.level * ROTATE_DEG

    @property
    def trans_delta(self) -> float:
        return self.level * FORWARD_M


NOISELESS = NoiseSpec(level=0.0)


@dataclass(frozen=True, eq=False)
class Observation:
    """Range-and-label scan: ``rays[k] = [depth, wall, objectA, objectB, nothing]``."""

    rays: np.ndarray

    def __post_init__(self):
        rays = np.asarray(self.rays, dtype=np.float32)
        if rays.shape != (N_RAYS, RAY_WIDTH):
            raise ContractError(f"observation must have shape {(N_RAYS, RAY_WIDTH)}, got {rays.shape}")
        rays.setflags(write=False)
        object.__setattr__(self, "rays", rays)

    @property
    def depth(self) -> np.ndarray:
        return self.rays[:, 0]

    @property
    def classes(self) -> np.ndarray:
        return self.rays[:, 1:].argmax(axis=1)

    def flat(self) -> List[float]:
        return [float(v) for v in self.rays.reshape(-1)]

    @classmethod
    def from_flat(cls, values) -> "Observation":
        return cls(np.asarray(values, dtype=np.float32).reshape(N_RAYS, RAY_WIDTH))

    def equals(self, other: "Observation") -> bool:
        return np.array_equal(self.rays, other.rays)


@dataclass(frozen=True)
class StepResult:
    pose: Pose
    blocked: bool = False
