"""Oracle action labels and the imitation loss."""

import logging
from typing import Dict, FrozenSet, List, Sequence

import numpy as np

from app.envgen.lattice import DistanceField
from app.errors import ContractError, LabelingError
from app.grad import tensor as T
from app.grad.tensor import Tensor
from app.sim.dynamics import transition
from app.sim.types import Action, Pose
from app.sim.world import AGENT_RADIUS, World

logger = logging.getLogger(__name__)

# logits outside the good set are pushed this far down before the log-sum-exp
EXCLUDED = -1.0e4


def distance_reductions(world: World, pose: Pose, field: DistanceField, radius: float = AGENT_RADIUS) -> Dict[Action, float]:
    """``d(pose) - d(noiseless step(pose, a))`` for every action."""
    here = field.at_pose(pose)
    if not np.isfinite(here):
        raise LabelingError(f"pose {pose} cannot reach goal cell {field.goal}")
    return {a: here - field.at_pose(transition(world, pose, a, radius=radius).pose) for a in Action}


def good_actions(world: World, pose: Pose, field: DistanceField, radius: float = AGENT_RADIUS) -> FrozenSet[Action]:
    """Actions that cut the distance to goal by more than Forward does.

    Every action is a candidate, Stay included: facing away from the goal,
    standing still beats driving further off. When nothing beats Forward the
    label is Forward alone.
    """
    reductions = distance_reductions(world, pose, field, radius)
    forward = reductions[Action.FORWARD]
    good = frozenset(a for a, r in reductions.items() if r > forward)
    # nothing beats Forward, so Forward is the maximizer
    return good or frozenset({Action.FORWARD})


def label_rollout(world: World, poses: Sequence[Pose], field: DistanceField, radius: float = AGENT_RADIUS) -> List[FrozenSet[Action]]:
    return [good_actions(world, pose, field, radius) for pose in poses]


def step_losses(logits: Sequence[Tensor], good_sets: Sequence[FrozenSet[Action]]) -> Tensor:
    """``-log sum_{a in G_t} softmax(logits_t)_a`` for each step, as a ``[T]`` tensor."""
    if len(logits) != len(good_sets):
        raise ContractError(f"{len(logits)} logit vectors but {len(good_sets)} label sets")
    if not logits:
        raise ContractError("cannot compute a loss over zero steps")
    mask = np.full((len(good_sets), len(Action)), EXCLUDED)
    for t, good in enumerate(good_sets):
        if not good:
            raise ContractError(f"empty good-action set at step {t}")
        mask[t, [int(a) for a in good]] = 0.0
    stacked = T.stack(list(logits))
    return T.logsumexp(stacked) - T.logsumexp(stacked + Tensor(mask))


def imitation_loss(logits: Sequence[Tensor], good_sets: Sequence[FrozenSet[Action]]) -> Tensor:
    """Mean over steps of the negative log probability mass on good actions."""
    return T.mean(step_losses(logits, good_sets))


def batch_loss(episode_losses: Sequence[Tensor]) -> Tensor:
    if not episode_losses:
        raise ContractError("batch has no episodes")
    return T.scale(T.sum(T.stack(list(episode_losses))), 1.0 / len(episode_losses))
