"""Central finite-difference verification of backpropagated gradients."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.grad.tensor import Tensor, precision

logger = logging.getLogger(__name__)


@dataclass
class GradCheckReport:
    max_rel_error: Dict[str, float] = field(default_factory=dict)
    checked_entries: Dict[str, int] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def passed(self, tolerance: float) -> bool:
        return self.worst < tolerance

    def lines(self) -> List[str]:
        width = max((len(n) for n in self.max_rel_error), default=0)
        return [
            f"{name:<{width}}  entries={self.checked_entries[name]:<4d} max_rel_error={err:.3e}"
            for name, err in self.max_rel_error.items()
        ]


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tuple[str, Tensor]],
    analytic_dtype=np.float64,
    h: Optional[float] = None,
    floor: float = 1e-6,
    max_entries: int = 16,
    seed: int = 0,
) -> GradCheckReport:
    """Compare backprop against central differences for each named parameter.

    The analytic gradient is computed in ``analytic_dtype``; finite
    differences always run in 64-bit. ``loss_fn`` must be deterministic and
    return a scalar. Relative error is ``|g - g_fd| / max(|g_fd|, floor)``
    over up to ``max_entries`` sampled entries per tensor.
    """
    if h is None:
        h = 1e-3 if np.dtype(analytic_dtype) == np.float32 else 1e-5
    rng = np.random.default_rng(seed)
    originals = [p.data for _, p in params]
    report = GradCheckReport()
    try:
        with precision(analytic_dtype):
            for _, p in params:
                p.data = p.data.astype(analytic_dtype)
                p.zero_grad()
            loss_fn().backward()
            analytic = [
                (p.grad if p.grad is not None else np.zeros_like(p.data)).astype(np.float64) for _, p in params
            ]

        with precision(np.float64):
            for _, p in params:
                p.data = p.data.astype(np.float64)
            for (name, p), grad in zip(params, analytic):
                flat = p.data.reshape(-1)
                picks = np.arange(flat.size)
                if flat.size > max_entries:
                    picks = rng.choice(flat.size, size=max_entries, replace=False)
                worst = 0.0
                for idx in picks:
                    saved = flat[idx]
                    flat[idx] = saved + h
                    f_plus = loss_fn().item()
                    flat[idx] = saved - h
                    f_minus = loss_fn().item()
                    flat[idx] = saved
                    fd = (f_plus - f_minus) / (2.0 * h)
                    g = grad.reshape(-1)[idx]
                    worst = max(worst, abs(g - fd) / max(abs(fd), floor))
                report.max_rel_error[name] = float(worst)
                report.checked_entries[name] = int(len(picks))
    finally:
        for (_, p), data in zip(params, originals):
            p.data = data
            p.zero_grad()
    logger.info(f"Gradient check over {len(params)} tensors: worst relative error {report.worst:.3e}")
    return report
