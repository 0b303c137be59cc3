"""Small reverse-mode autodiff engine for the controller networks."""

from app.grad.checkpoint import load_into, read_checkpoint, save_checkpoint
from app.grad.gradcheck import GradCheckReport, grad_check
from app.grad.layers import Conv1d, Dense, GRUCell, Module, gru_cell
from app.grad.optim import Adam, AdamState, adam_step
from app.grad.tensor import Tensor, parameter, precision

__all__ = [
    "Adam",
    "AdamState",
    "Conv1d",
    "Dense",
    "GRUCell",
    "GradCheckReport",
    "Module",
    "Tensor",
    "adam_step",
    "grad_check",
    "gru_cell",
    "load_into",
    "parameter",
    "precision",
    "read_checkpoint",
    "save_checkpoint",
]
