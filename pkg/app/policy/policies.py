"""Controller step and every policy variant behind one act() interface."""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from app.config import POLICY_KINDS, RunConfig
from app.envgen.demonstration import Demonstration
from app.errors import ConfigurationError, ContractError
from app.grad import tensor as T
from app.grad.checkpoint import load_into, save_checkpoint
from app.grad.tensor import Tensor
from app.policy.memory import PathMemory, attend, build_memory, memory_from_features, synthesize_features
from app.policy.network import N_ACTIONS, RPFNetwork
from app.sim.types import Action, Observation

logger = logging.getLogger(__name__)

NN_TEMPERATURE = 10.0
NN_PROB_FLOOR = 1e-6
# keeps 1 + tanh(b) strictly inside (0, 2) once float32 tanh saturates
INCREMENT_EPS = 1e-4


@dataclass(frozen=True)
class ControllerState:
    """Per-episode recurrent state; ``eta`` starts at 1 and ``h`` at zero."""

    h: Optional[Tensor]
    eta: Tensor
    t: int = 0
    encoded: Optional[Tensor] = None
    scores: Optional[np.ndarray] = None

    @property
    def pointer(self) -> float:
        return float(self.eta.data)


@dataclass(frozen=True)
class PolicyOutput:
    action_logits: Tensor
    increment_raw: Optional[Tensor] = None

    @property
    def increment(self) -> Optional[float]:
        if self.increment_raw is None:
            return None
        return float(np.clip(1.0 + np.tanh(self.increment_raw.data), INCREMENT_EPS, 2.0 - INCREMENT_EPS))


def initial_state(hidden: int) -> ControllerState:
    return ControllerState(h=Tensor(np.zeros(hidden)), eta=Tensor(1.0))


def controller_step(
    state: ControllerState,
    mu: Tensor,
    obs_feat: Tensor,
    net: RPFNetwork,
    constant_increment: bool = False,
    recurrent: bool = True,
) -> Tuple[ControllerState, PolicyOutput]:
    """One pi step: GRU update, action logits, and pointer advance ``eta += 1 + tanh(b)``."""
    h_in = state.h if recurrent else Tensor(np.zeros(net.hidden))
    h = net.pi.gru(h_in, T.concat([mu, obs_feat]))
    logits = net.pi.action_head(h)
    b = T.reshape(net.pi.increment_head(h), ())
    if constant_increment:
        eta = state.eta + 1.0
    else:
        eta = state.eta + T.clip(1.0 + T.tanh(b), INCREMENT_EPS, 2.0 - INCREMENT_EPS)
    return replace(state, h=h, eta=eta, t=state.t + 1), PolicyOutput(logits, b)


class Policy:
    """A policy kind plus (for learned kinds) its parameters.

    ``act`` sees only the path memory, the current observation and its own
    state; simulator pose never reaches it.
    """

    learned = True

    def __init__(self, kind: str, net: Optional[RPFNetwork] = None, span: int = 0, constant_increment: bool = False):
        if kind not in POLICY_KINDS:
            raise ConfigurationError(f"unknown policy kind {kind!r}; expected one of {POLICY_KINDS}")
        self.kind = kind
        self.net = net
        self.span = span
        self.constant_increment = constant_increment

    # memory construction

    @property
    def uses_features(self) -> bool:
        return True

    def following_memory(self, demo: Demonstration) -> PathMemory:
        return build_memory(demo, self.net, zero_features=not self.uses_features)

    def homing_memory(self, forward: Demonstration, reversed_demo: Demonstration, source: str = "synthesized") -> PathMemory:
        if not self.uses_features:
            return build_memory(reversed_demo, self.net, zero_features=True)
        if source == "rotated":
            return build_memory(reversed_demo, self.net)
        if source != "synthesized":
            raise ConfigurationError(f"unknown homing memory source {source!r}")
        return memory_from_features(reversed_demo, synthesize_features(forward, reversed_demo.poses, self.net))

    # acting

    def begin(self, memory: PathMemory) -> ControllerState:
        state = initial_state(self.net.hidden)
        return replace(state, encoded=self.net.psi(memory.entries()))

    def act(self, memory: PathMemory, obs: Observation, state: ControllerState) -> Tuple[PolicyOutput, ControllerState]:
        mu = attend(memory, state.eta, self.net, encoded=state.encoded, span=self.span)
        new_state, output = controller_step(
            state, mu, self.net.phi.one(obs), self.net, constant_increment=self.constant_increment
        )
        return output, new_state

    def greedy_action(self, output: PolicyOutput, memory: PathMemory, state: ControllerState) -> Action:
        return Action(int(np.argmax(output.action_logits.data)))

    # parameters

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        return list(self.net.named_parameters()) if self.net is not None else []

    def save(self, directory: str, metadata: Optional[dict] = None) -> str:
        return save_checkpoint(directory, self.named_parameters(), {"kind": self.kind, **(metadata or {})})

    def load(self, directory: str) -> dict:
        metadata = load_into(directory, self.named_parameters())
        if metadata.get("kind") not in (None, self.kind):
            logger.warning(f"Checkpoint was trained as {metadata.get('kind')!r}, loading into {self.kind!r}")
        return metadata


class NoVisualMemoryPolicy(Policy):
    """RPF with the feature slot of every memory entry zeroed."""

    @property
    def uses_features(self) -> bool:
        return False


class NoRecurrencePolicy(Policy):
    """RPF whose recurrent state is reset before every step."""

    def act(self, memory, obs, state):
        mu = attend(memory, state.eta, self.net, encoded=state.encoded, span=self.span)
        new_state, output = controller_step(
            state, mu, self.net.phi.one(obs), self.net,
            constant_increment=self.constant_increment, recurrent=False,
        )
        return output, new_state


class MemorylessGRUPolicy(Policy):
    """Plain recurrent policy: the memory read is replaced by zeros."""

    @property
    def uses_features(self) -> bool:
        return False

    def begin(self, memory):
        return initial_state(self.net.hidden)

    def act(self, memory, obs, state):
        mu = Tensor(np.zeros(self.net.width))
        new_state, output = controller_step(state, mu, self.net.phi.one(obs), self.net, constant_increment=True)
        return output, new_state


class NearestNeighborPolicy(Policy):
    """Cosine match of phi(O) against memory features; matched entries vote their actions."""

    def begin(self, memory):
        state = initial_state(1)
        return replace(state, h=None, encoded=T.l2_normalize(memory.features))

    def _similarities(self, obs: Observation, state: ControllerState) -> Tensor:
        query = T.l2_normalize(self.net.phi.one(obs))
        return T.reshape(T.matmul(state.encoded, T.reshape(query, (self.net.width, 1))), (state.encoded.shape[0],))

    def act(self, memory, obs, state):
        sims = self._similarities(obs, state)
        votes = T.softmax(T.scale(sims, NN_TEMPERATURE))
        probs = T.weighted_sum(votes, Tensor(memory.actions))
        logits = T.log(probs + NN_PROB_FLOOR)
        return PolicyOutput(logits), replace(state, t=state.t + 1, scores=sims.data.copy())

    def greedy_action(self, output, memory, state):
        return memory.action_at(int(np.argmax(state.scores)))


class OpenLoopPolicy(Policy):
    """Replays the reference actions by step count; Stay once they run out."""

    learned = False

    @property
    def uses_features(self) -> bool:
        return False

    def following_memory(self, demo):
        return memory_from_features(demo, None)

    def homing_memory(self, forward, reversed_demo, source="synthesized"):
        return memory_from_features(reversed_demo, None)

    def begin(self, memory):
        return ControllerState(h=None, eta=Tensor(1.0))

    def act(self, memory, obs, state):
        action = memory.action_at(state.t) if state.t < len(memory) else Action.STAY
        logits = np.full(N_ACTIONS, -20.0)
        logits[int(action)] = 0.0
        return PolicyOutput(Tensor(logits)), replace(state, t=state.t + 1, eta=Tensor(state.t + 2.0))

    def named_parameters(self):
        return []


_KINDS = {
    "rpf": Policy,
    "rpf_no_visual_memory": NoVisualMemoryPolicy,
    "rpf_constant_increment": Policy,
    "rpf_no_recurrence": NoRecurrencePolicy,
    "gru_no_memory": MemorylessGRUPolicy,
    "nearest_neighbor": NearestNeighborPolicy,
    "open_loop": OpenLoopPolicy,
}


def make_policy(config: RunConfig, kind: Optional[str] = None, seed: Optional[int] = None) -> Policy:
    """Fresh policy of ``kind`` (default ``config.policy.kind``) with newly initialised parameters."""
    kind = kind or config.policy.kind
    if kind not in _KINDS:
        raise ConfigurationError(f"unknown policy kind {kind!r}; expected one of {POLICY_KINDS}")
    cls = _KINDS[kind]
    if cls is OpenLoopPolicy:
        return OpenLoopPolicy(kind)
    net = RPFNetwork(
        width=config.encoder.width,
        hidden=config.gru.hidden,
        seed=config.trainer.seed if seed is None else seed,
    )
    constant = kind == "rpf_constant_increment" or config.policy.increment == "constant"
    return cls(kind, net, span=config.attention.span, constant_increment=constant)


def act(
    policy: Policy,
    memory: PathMemory,
    obs: Observation,
    state: ControllerState,
    greedy: bool = True,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Action, ControllerState, PolicyOutput]:
    """Choose an action: greedy argmax, or a sample from softmax(logits) when ``greedy`` is False."""
    output, new_state = policy.act(memory, obs, state)
    if greedy:
        return policy.greedy_action(output, memory, new_state), new_state, output
    if rng is None:
        raise ContractError("sampling actions requires a random generator")
    logits = output.action_logits.data.astype(np.float64)
    probs = np.exp(logits - logits.max())
    probs /= probs.sum()
    return Action(int(rng.choice(N_ACTIONS, p=probs))), new_state, output
