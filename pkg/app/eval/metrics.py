"""Per-trial outcomes and aggregate navigation metrics with bootstrap intervals."""

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.errors import ContractError

METRICS = ("success_rate", "spl", "median_norm_dist")


def success_threshold(initial_dist: float) -> float:
    """Within 2 steps or 10% of the initial distance, whichever is larger."""
    return max(2.0, 0.1 * initial_dist)


@dataclass(frozen=True)
class TrialResult:
    initial_dist: float
    final_dist: float
    executed_steps: int
    shortest: float
    collisions: int = 0
    trial_index: int = -1
    error: Optional[str] = None

    def __post_init__(self):
        if self.error is None and not self.initial_dist > 0:
            raise ContractError(f"trial initial distance must be positive, got {self.initial_dist}")

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def success(self) -> bool:
        return self.ok and self.final_dist <= success_threshold(self.initial_dist)

    @property
    def spl_term(self) -> float:
        if not self.success:
            return 0.0
        return self.shortest / max(self.executed_steps, self.shortest)

    @property
    def norm_dist(self) -> float:
        return self.final_dist / self.initial_dist

    def to_row(self) -> Dict[str, object]:
        row = asdict(self)
        row.update(success=self.success, spl_term=self.spl_term)
        return row


def success_rate(trials: Sequence[TrialResult]) -> float:
    return float(np.mean([t.success for t in trials])) if trials else 0.0


def spl(trials: Sequence[TrialResult]) -> float:
    """Mean of ``S_i * l_i / max(p_i, l_i)``; failures contribute 0."""
    return float(np.mean([t.spl_term for t in trials])) if trials else 0.0


def median_norm_dist(trials: Sequence[TrialResult]) -> float:
    return float(np.median([t.norm_dist for t in trials])) if trials else 0.0


def bootstrap_ci(
    values: Sequence[float],
    metric_fn: Callable[..., np.ndarray] = np.mean,
    resamples: int = 1000,
    level: float = 0.95,
    seed: Union[int, Sequence[int]] = 0,
) -> Tuple[float, float]:
    """Percentile bootstrap over resampled per-trial values.

    ``metric_fn`` is a numpy reducer taking ``axis`` (``np.mean``,
    ``np.median``); all resamples are reduced in one call. The interval always
    contains the point estimate.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return 0.0, 0.0
    estimate = float(metric_fn(arr))
    if arr.size == 1:
        return estimate, estimate
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, arr.size, size=(resamples, arr.size))
    stats = metric_fn(arr[idx], axis=1)
    alpha = (1.0 - level) / 2.0
    low = float(np.quantile(stats, alpha))
    high = float(np.quantile(stats, 1.0 - alpha))
    return min(low, estimate), max(high, estimate)


def per_trial_values(name: str, trials: Sequence[TrialResult]) -> Tuple[np.ndarray, Callable[..., np.ndarray]]:
    """Per-trial values and the reducer that turns them into metric ``name``."""
    if name == "success_rate":
        return np.array([t.success for t in trials], dtype=float), np.mean
    if name == "spl":
        return np.array([t.spl_term for t in trials], dtype=float), np.mean
    if name == "median_norm_dist":
        return np.array([t.norm_dist for t in trials], dtype=float), np.median
    raise ContractError(f"unknown metric {name!r}; expected one of {METRICS}")


@dataclass
class MetricsReport:
    success_rate: float
    spl: float
    median_norm_dist: float
    ci: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    n_trials: int = 0
    n_errors: int = 0
    collisions: float = 0.0

    @classmethod
    def from_trials(cls, trials: Sequence[TrialResult], resamples: int = 1000, level: float = 0.95, seed: int = 0) -> "MetricsReport":
        scored = [t for t in trials if t.ok]
        report = cls(
            success_rate=success_rate(scored),
            spl=spl(scored),
            median_norm_dist=median_norm_dist(scored),
            n_trials=len(scored),
            n_errors=len(trials) - len(scored),
            collisions=float(np.mean([t.collisions for t in scored])) if scored else 0.0,
        )
        for offset, name in enumerate(METRICS):
            estimate = getattr(report, name)
            if not scored:
                report.ci[name] = (estimate, estimate)
                continue
            values, reduce = per_trial_values(name, scored)
            report.ci[name] = bootstrap_ci(values, reduce, resamples=resamples, level=level, seed=[seed, offset])
        return report

    def rows(self, axis_value=None) -> List[Dict[str, object]]:
        out = []
        for name in METRICS:
            low, high = self.ci.get(name, (math.nan, math.nan))
            out.append(
                {
                    "axis_value": axis_value,
                    "metric": name,
                    "estimate": getattr(self, name),
                    "ci_low": low,
                    "ci_high": high,
                    "n": self.n_trials,
                }
            )
        return out
