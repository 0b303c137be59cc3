"""Path description memory, soft attention read, and feature synthesis for unvisited poses."""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app.envgen.demonstration import Demonstration
from app.errors import ContractError
from app.grad import tensor as T
from app.grad.tensor import Tensor
from app.policy.network import DELTA_WIDTH, N_ACTIONS, RPFNetwork
from app.sim.types import Action, Pose


def relative_pose(origin: Pose, target: Pose) -> np.ndarray:
    """``(dx, dy, sin dtheta, cos dtheta)`` of ``target`` in the frame of ``origin``."""
    rad = math.radians(origin.theta)
    c, s = math.cos(rad), math.sin(rad)
    wx, wy = target.x - origin.x, target.y - origin.y
    dtheta = math.radians(target.theta - origin.theta)
    return np.array([c * wx + s * wy, -s * wx + c * wy, math.sin(dtheta), math.cos(dtheta)])


def step_deltas(poses: Sequence[Pose]) -> np.ndarray:
    """Delta from pose j to pose j+1 for each j; the last entry is the identity delta."""
    deltas = np.zeros((len(poses), DELTA_WIDTH))
    for j in range(len(poses) - 1):
        deltas[j] = relative_pose(poses[j], poses[j + 1])
    deltas[-1] = (0.0, 0.0, 0.0, 1.0)
    return deltas


def action_one_hot(actions: Sequence[Action]) -> np.ndarray:
    out = np.zeros((len(actions), N_ACTIONS))
    out[np.arange(len(actions)), [int(a) for a in actions]] = 1.0
    return out


@dataclass(frozen=True)
class PathMemory:
    """Per-step entries ``[action one-hot, step delta, feature]``; features are None for feature-free policies."""

    actions: np.ndarray
    deltas: np.ndarray
    features: Optional[Tensor] = None

    def __post_init__(self):
        if len(self.actions) < 1:
            raise ContractError("path memory needs at least one entry")
        if self.actions.shape != (len(self), N_ACTIONS) or self.deltas.shape != (len(self), DELTA_WIDTH):
            raise ContractError(f"memory arrays disagree: actions {self.actions.shape}, deltas {self.deltas.shape}")
        if self.features is not None and self.features.shape[0] != len(self):
            raise ContractError(f"memory has {len(self)} entries but {self.features.shape[0]} features")
        self.actions.setflags(write=False)
        self.deltas.setflags(write=False)

    def __len__(self) -> int:
        return self.actions.shape[0]

    def action_at(self, j: int) -> Action:
        return Action(int(np.argmax(self.actions[j])))

    def entries(self) -> Tensor:
        """``[J, 4 + 4 + width]`` entry matrix."""
        if self.features is None:
            raise ContractError("memory was built without features")
        return T.concat([Tensor(self.actions), Tensor(self.deltas), self.features], axis=-1)


def build_memory(demo: Demonstration, net: RPFNetwork, zero_features: bool = False) -> PathMemory:
    """Memory for following ``demo`` with features ``phi(I_j)``."""
    if zero_features:
        features = Tensor(np.zeros((len(demo), net.width)))
    else:
        features = net.phi(list(demo.observations))
    return memory_from_features(demo, features)


def memory_from_features(demo: Demonstration, features: Optional[Tensor]) -> PathMemory:
    return PathMemory(action_one_hot(demo.actions), step_deltas(demo.poses), features)


def attention_weights(eta: Tensor, length: int, span: int = 0) -> Tensor:
    """``exp(-|eta - j|)`` for ``j = 1..length``; entries further than ``span`` from eta are zeroed when span > 0."""
    positions = np.arange(1, length + 1, dtype=np.float64)
    weights = T.exp(T.neg(T.abs(eta - Tensor(positions))))
    if span > 0:
        mask = (np.abs(float(eta.data) - positions) <= span).astype(np.float64)
        weights = weights * Tensor(mask)
    return weights


def attend(memory: PathMemory, eta: Tensor, net: RPFNetwork, encoded: Optional[Tensor] = None, span: int = 0) -> Tensor:
    """Unnormalized soft read ``sum_j psi(entry_j) exp(-|eta - j|)``.

    ``encoded`` is ``psi`` over all entries; pass it to reuse one encoding
    across the steps of an episode.
    """
    if encoded is None:
        encoded = net.psi(memory.entries())
    return T.weighted_sum(attention_weights(eta, len(memory), span), encoded)


def synthesize_features(demo: Demonstration, targets: Sequence[Pose], net: RPFNetwork) -> Tensor:
    """Predict ``phi`` at ``targets`` from the images and poses of ``demo``.

    Each source image contributes ``Omega(phi(I_i), delta(p_i, target))``;
    contributions are combined with softmax weights from Omega's extra logit.
    """
    if len(demo) == 0 or len(targets) == 0:
        raise ContractError("feature synthesis needs at least one source and one target")
    n_src, n_tgt = len(demo), len(targets)
    source_feats = net.phi(list(demo.observations))
    deltas = np.stack([relative_pose(src, tgt) for tgt in targets for src in demo.poses])
    tiled = T.getitem(source_feats, np.tile(np.arange(n_src), n_tgt))
    out = net.omega(T.concat([tiled, Tensor(deltas)], axis=-1))
    out = T.reshape(out, (n_tgt, n_src, net.width + 1))
    contributions = T.getitem(out, (slice(None), slice(None), slice(0, net.width)))
    logits = T.getitem(out, (slice(None), slice(None), net.width))
    return T.weighted_sum(T.softmax(logits), contributions)
