"""Generalization sweeps and the base-settings policy comparison."""

import logging
import math
import os
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from app.config import RunConfig  # noqa: E402
from app.errors import ConfigurationError  # noqa: E402
from app.eval.harness import evaluate  # noqa: E402
from app.eval.metrics import METRICS, MetricsReport  # noqa: E402
from app.policy.policies import Policy  # noqa: E402
from app.tools.storage import ArtifactStore, get_store  # noqa: E402

logger = logging.getLogger(__name__)

CSV_FIELDS = ["axis_value", "metric", "estimate", "ci_low", "ci_high", "n"]
COMPARE_FIELDS = ["task", "policy", "metric", "estimate", "ci_low", "ci_high", "n", "errors"]

# demonstrations for the change axis are always recorded at this removal probability
CHANGE_DEMO_R = 0.5
BASE_LENGTH = 30

AXES: Dict[str, List[float]] = {
    "noise": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
    "clearance": [0.0, 0.2, 0.4, 0.6],
    "length": [30, 60, 90],
    "change": [0.1, 0.3, 0.5, 0.7, 0.9],
    "homing_noise": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
}

AXIS_LABELS = {
    "noise": "actuation noise",
    "clearance": "reference path clearance (m)",
    "length": "reference length (steps)",
    "change": "object removal probability at execution",
    "homing_noise": "actuation noise (homing)",
}


def scaled_horizon(base_horizon: int, length: int) -> int:
    """Longer references get proportionally more steps than the base 40-for-30."""
    return max(base_horizon, int(math.ceil(base_horizon * length / BASE_LENGTH)))


def axis_setting(config: RunConfig, axis: str, value: float) -> Tuple[RunConfig, Optional[int], Optional[str]]:
    """Config, horizon and task for one point of ``axis``."""
    if axis == "noise":
        return config.with_overrides({"sim.noise": value}), None, None
    if axis == "homing_noise":
        return config.with_overrides({"sim.noise": value, "task": "homing"}), None, "homing"
    if axis == "clearance":
        return config.with_overrides({"demo.clearance": value}), None, None
    if axis == "length":
        length = int(value)
        return config.with_overrides({"demo.length": length}), scaled_horizon(config.eval.horizon, length), None
    if axis == "change":
        return config.with_overrides({"change.r_demo": CHANGE_DEMO_R, "change.r_exec": value}), None, None
    raise ConfigurationError(f"unknown sweep axis {axis!r}; expected one of {sorted(AXES)}")


def sweep(
    config: RunConfig,
    policies: Sequence[Policy],
    axis: str,
    values: Optional[Sequence[float]] = None,
    n_trials: Optional[int] = None,
    store: Optional[ArtifactStore] = None,
) -> Dict[str, List[Tuple[float, MetricsReport]]]:
    """Evaluate every policy at each value of ``axis`` without retraining.

    Writes ``sweeps/<axis>/<policy>.csv`` and one plot per metric.
    """
    if axis not in AXES:
        raise ConfigurationError(f"unknown sweep axis {axis!r}; expected one of {sorted(AXES)}")
    store = store or get_store()
    values = list(AXES[axis] if values is None else values)
    results: Dict[str, List[Tuple[float, MetricsReport]]] = {p.kind: [] for p in policies}

    for value in values:
        point_config, horizon, task = axis_setting(config, axis, value)
        for policy in policies:
            report, _ = evaluate(point_config, policy, split="test", n_trials=n_trials, horizon=horizon, task=task)
            results[policy.kind].append((value, report))
        logger.info(f"Sweep {axis}={value} done for {len(policies)} policies")

    for kind, points in results.items():
        rows = [row for value, report in points for row in report.rows(value)]
        store.write_csv(os.path.join("sweeps", axis, f"{kind}.csv"), CSV_FIELDS, rows)
    for metric in METRICS:
        plot_sweep(results, axis, metric, store.path("sweeps", axis, f"{metric}.png"))
    return results


def plot_sweep(results: Dict[str, List[Tuple[float, MetricsReport]]], axis: str, metric: str, path: str) -> str:
    """Metric against axis value per policy, with the bootstrap interval shaded."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for kind, points in results.items():
        xs = [value for value, _ in points]
        ys = [getattr(report, metric) for _, report in points]
        low = [report.ci[metric][0] for _, report in points]
        high = [report.ci[metric][1] for _, report in points]
        ax.plot(xs, ys, marker="o", label=kind)
        ax.fill_between(xs, low, high, alpha=0.2)
    ax.set_xlabel(AXIS_LABELS.get(axis, axis))
    ax.set_ylabel(metric.replace("_", " "))
    if metric != "median_norm_dist":
        ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def compare_policies(
    config: RunConfig,
    policies: Sequence[Policy],
    tasks: Sequence[str] = ("following", "homing"),
    n_trials: Optional[int] = None,
    store: Optional[ArtifactStore] = None,
) -> List[Dict[str, object]]:
    """Base-settings table: every policy on every task, one row per metric."""
    store = store or get_store()
    rows: List[Dict[str, object]] = []
    for task in tasks:
        task_config = config.with_overrides({"task": task})
        for policy in policies:
            report, _ = evaluate(task_config, policy, split="test", n_trials=n_trials, task=task)
            for row in report.rows():
                row.pop("axis_value")
                rows.append({"task": task, "policy": policy.kind, "errors": report.n_errors, **row})
    store.write_csv("compare.csv", COMPARE_FIELDS, rows)
    return rows
