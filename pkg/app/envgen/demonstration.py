"""Recorded reference trajectories and their reversal for homing."""

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

from app.errors import ContractError
from app.sim.render import rotated_render
from app.sim.types import Action, Observation, Pose
from app.sim.world import World

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Demonstration:
    """Poses, the action taken at each pose, and the observation seen there.

    ``actions[j]`` moves ``poses[j]`` to ``poses[j + 1]``; the final action is
    Stay and the final pose is the goal.
    """

    poses: Tuple[Pose, ...]
    actions: Tuple[Action, ...]
    observations: Tuple[Observation, ...]
    world_seed: Optional[int] = None
    change_r: float = 0.0
    reversed: bool = False
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.poses:
            raise ContractError("demonstration must contain at least one pose")
        if not (len(self.poses) == len(self.actions) == len(self.observations)):
            raise ContractError(
                f"demonstration lengths disagree: {len(self.poses)} poses, "
                f"{len(self.actions)} actions, {len(self.observations)} observations"
            )
        object.__setattr__(self, "poses", tuple(self.poses))
        object.__setattr__(self, "actions", tuple(Action(a) for a in self.actions))
        object.__setattr__(self, "observations", tuple(self.observations))

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def start(self) -> Pose:
        return self.poses[0]

    @property
    def goal(self) -> Pose:
        return self.poses[-1]

    @property
    def moves(self) -> List[Action]:
        """Actions that actually move the agent (the trailing Stay dropped)."""
        return list(self.actions[:-1])

    def header(self) -> Dict[str, Any]:
        return {
            "kind": "header",
            "length": len(self),
            "world_seed": self.world_seed,
            "change_r": self.change_r,
            "reversed": self.reversed,
            **self.metadata,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header(), sort_keys=True)]
        for t, (pose, action, obs) in enumerate(zip(self.poses, self.actions, self.observations)):
            row = {"t": t, "pose": pose.as_list(), "action": int(action), "rays": obs.flat()}
            lines.append(json.dumps(row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Demonstration":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows or rows[0].get("kind") != "header":
            raise ContractError("demonstration file is missing its header line")
        header, steps = rows[0], rows[1:]
        if len(steps) != header.get("length"):
            raise ContractError(f"header declares {header.get('length')} steps, found {len(steps)}")
        known = {"kind", "length", "world_seed", "change_r", "reversed"}
        return cls(
            poses=tuple(Pose(*row["pose"]) for row in steps),
            actions=tuple(Action(row["action"]) for row in steps),
            observations=tuple(Observation.from_flat(row["rays"]) for row in steps),
            world_seed=header.get("world_seed"),
            change_r=float(header.get("change_r", 0.0)),
            reversed=bool(header.get("reversed", False)),
            metadata={k: v for k, v in header.items() if k not in known},
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_jsonl())

    @classmethod
    def load(cls, path: str) -> "Demonstration":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_jsonl(f.read())


def reverse_demonstration(demo: Demonstration, world: World) -> Demonstration:
    """Homing reference: walk the path backwards facing the other way.

    ``world`` is the world the demonstration was recorded in; the reversed
    observations come from a rear-facing camera at the original poses.
    """
    poses = tuple(p.flipped() for p in reversed(demo.poses))
    actions = tuple(a.reversed() for a in reversed(demo.moves)) + (Action.STAY,)
    observations = tuple(rotated_render(world, p, 180.0) for p in reversed(demo.poses))
    logger.debug(f"Reversed demonstration of length {len(demo)}")
    return replace(demo, poses=poses, actions=actions, observations=observations, reversed=not demo.reversed)
