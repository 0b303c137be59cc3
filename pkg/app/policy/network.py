"""Parameter sets of the path-following controller: encoder, memory head, recurrent core, synthesis head."""

from typing import List

import numpy as np

from app.grad import tensor as T
from app.grad.layers import Conv1d, Dense, GRUCell, Module
from app.grad.tensor import Tensor
from app.sim.types import N_RAYS, RAY_WIDTH, Observation

N_ACTIONS = 4
DELTA_WIDTH = 4


class Encoder(Module):
    """phi: two strided 1-D convolutions over the scan, then a dense projection."""

    def __init__(self, width: int, rng: np.random.Generator):
        super().__init__("phi")
        self.width = width
        self.conv1 = self.add_module(Conv1d("conv1", RAY_WIDTH, 16, 5, 2, rng))
        self.conv2 = self.add_module(Conv1d("conv2", 16, 32, 5, 2, rng))
        flat = 32 * self.conv2.output_length(self.conv1.output_length(N_RAYS))
        self.flat = flat
        self.proj = self.add_module(Dense("proj", flat, width, rng))

    def __call__(self, observations: List[Observation]) -> Tensor:
        """Features ``[N, width]`` for ``N`` observations."""
        x = Tensor(np.stack([o.rays.T for o in observations]))
        x = T.relu(self.conv1(x))
        x = T.relu(self.conv2(x))
        x = T.reshape(x, (len(observations), self.flat))
        return self.proj(x)

    def one(self, observation: Observation) -> Tensor:
        return T.reshape(self([observation]), (self.width,))


class TwoLayer(Module):
    """dense -> relu -> dense, used for psi and Omega."""

    def __init__(self, name: str, n_in: int, n_hidden: int, n_out: int, rng: np.random.Generator):
        super().__init__(name)
        self.fc1 = self.add_module(Dense("fc1", n_in, n_hidden, rng))
        self.fc2 = self.add_module(Dense("fc2", n_hidden, n_out, rng))

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.relu(self.fc1(x)))


class Controller(Module):
    """pi: GRU over [mu, phi(O)] with an action head and a pointer-increment head."""

    def __init__(self, width: int, hidden: int, rng: np.random.Generator):
        super().__init__("pi")
        self.hidden = hidden
        self.gru = self.add_module(GRUCell("gru", 2 * width, hidden, rng))
        self.action_head = self.add_module(Dense("action", hidden, N_ACTIONS, rng))
        self.increment_head = self.add_module(Dense("increment", hidden, 1, rng))


class RPFNetwork(Module):
    def __init__(self, width: int = 64, hidden: int = 128, seed: int = 0):
        super().__init__("rpf")
        rng = np.random.default_rng(seed)
        self.width = width
        self.hidden = hidden
        self.entry_width = N_ACTIONS + DELTA_WIDTH + width
        self.phi = self.add_module(Encoder(width, rng))
        self.psi = self.add_module(TwoLayer("psi", self.entry_width, width, width, rng))
        self.pi = self.add_module(Controller(width, hidden, rng))
        self.omega = self.add_module(TwoLayer("omega", width + DELTA_WIDTH, width, width + 1, rng))
