"""Parameterised layers built on the tensor primitives."""

from typing import Dict, Iterator, List, Tuple

import numpy as np

from app.errors import ContractError
from app.grad import tensor as T
from app.grad.tensor import Tensor, parameter


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


class Module:
    """Container of named parameters and sub-modules, in registration order."""

    def __init__(self, name: str):
        self.name = name
        self._params: Dict[str, Tensor] = {}
        self._children: Dict[str, "Module"] = {}

    def add_parameter(self, key: str, data: np.ndarray) -> Tensor:
        p = parameter(data, f"{self.name}.{key}")
        self._params[key] = p
        return p

    def add_module(self, module: "Module") -> "Module":
        self._children[module.name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for key, p in self._params.items():
            yield f"{prefix}{self.name}.{key}", p
        for child in self._children.values():
            yield from child.named_parameters(f"{prefix}{self.name}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


class Dense(Module):
    def __init__(self, name: str, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__(name)
        self.n_in, self.n_out = n_in, n_out
        self.W = self.add_parameter("W", glorot(rng, n_in, n_out, (n_in, n_out)))
        self.b = self.add_parameter("b", np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return T.matmul(x, self.W) + self.b


class Conv1d(Module):
    def __init__(self, name: str, c_in: int, c_out: int, kernel: int, stride: int, rng: np.random.Generator):
        super().__init__(name)
        self.stride = stride
        self.kernel = kernel
        self.W = self.add_parameter("W", glorot(rng, c_in * kernel, c_out * kernel, (c_out, c_in, kernel)))
        self.b = self.add_parameter("b", np.zeros(c_out))

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv1d(x, self.W, self.b, self.stride)

    def output_length(self, length: int) -> int:
        return (length - self.kernel) // self.stride + 1


class GRUCell(Module):
    """Gated recurrent unit with separate weights per gate.

    z = sigmoid(x Wxz + h Whz + bz)
    r = sigmoid(x Wxr + h Whr + br)
    n = tanh(x Wxn + (r * h) Whn + bn)
    h' = (1 - z) * h + z * n
    """

    def __init__(self, name: str, n_in: int, hidden: int, rng: np.random.Generator):
        super().__init__(name)
        self.n_in, self.hidden = n_in, hidden
        for gate in ("z", "r", "n"):
            setattr(self, f"Wx{gate}", self.add_parameter(f"Wx{gate}", glorot(rng, n_in, hidden, (n_in, hidden))))
            setattr(self, f"Wh{gate}", self.add_parameter(f"Wh{gate}", orthogonal(rng, hidden)))
            setattr(self, f"b{gate}", self.add_parameter(f"b{gate}", np.zeros(hidden)))

    def __call__(self, h: Tensor, x: Tensor) -> Tensor:
        return gru_cell(h, x, self)


def gru_cell(h: Tensor, x: Tensor, params: GRUCell) -> Tensor:
    if h.shape[-1] != params.hidden or x.shape[-1] != params.n_in:
        raise ContractError(
            f"gru_cell: state {h.shape} and input {x.shape} do not match "
            f"hidden={params.hidden}, input={params.n_in}"
        )
    z = T.sigmoid(T.matmul(x, params.Wxz) + T.matmul(h, params.Whz) + params.bz)
    r = T.sigmoid(T.matmul(x, params.Wxr) + T.matmul(h, params.Whr) + params.br)
    n = T.tanh(T.matmul(x, params.Wxn) + T.matmul(r * h, params.Whn) + params.bn)
    return (1.0 - z) * h + z * n
