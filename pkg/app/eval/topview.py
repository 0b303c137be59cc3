"""Top-view SVG of a world, its reference path and executed rollouts."""

import io
import logging
from typing import Dict, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

from app.envgen.demonstration import Demonstration  # noqa: E402
from app.policy.rollout import Rollout  # noqa: E402
from app.sim.types import Pose  # noqa: E402
from app.sim.world import LABEL_FREE, LABEL_OBJECT_A, LABEL_OBJECT_B, LABEL_WALL, World  # noqa: E402

logger = logging.getLogger(__name__)

# indexed by label code
LABEL_COLORS = {
    LABEL_WALL: "#808080",
    LABEL_OBJECT_A: "#e69f00",
    LABEL_OBJECT_B: "#009e73",
    LABEL_FREE: "#ffffff",
}
REFERENCE_COLOR = "#000000"
POLICY_COLORS = {"rpf": "#d62728", "open_loop": "#1f77b4"}
OTHER_COLORS = ("#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22")
SVG_SALT = "rpf-topview"


def policy_color(kind: str, index: int = 0) -> str:
    """RPF variants in red, open loop in blue, anything else from a fixed cycle."""
    if kind in POLICY_COLORS:
        return POLICY_COLORS[kind]
    if kind.startswith("rpf"):
        return POLICY_COLORS["rpf"]
    return OTHER_COLORS[index % len(OTHER_COLORS)]


def _xy(poses: Sequence[Pose]) -> Tuple[np.ndarray, np.ndarray]:
    return np.array([p.x for p in poses]), np.array([p.y for p in poses])


def render_topview(
    world: World,
    demo: Optional[Demonstration] = None,
    rollouts: Sequence[Tuple[str, Rollout]] = (),
    title: Optional[str] = None,
) -> str:
    """SVG document; identical inputs give byte-identical output.

    Each rollout polyline carries the id ``rollout-<policy>-<k>`` and the
    reference path the id ``reference``.
    """
    codes = sorted(LABEL_COLORS)
    cmap = ListedColormap([LABEL_COLORS[c] for c in codes])
    extent_x = world.width * world.cell_m
    extent_y = world.height * world.cell_m

    with plt.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 6 * extent_y / extent_x))
        # labels are indexed [i, j] = [x, y]; imshow wants rows = y
        ax.imshow(
            world.labels.T,
            origin="lower",
            cmap=cmap,
            vmin=min(codes) - 0.5,
            vmax=max(codes) + 0.5,
            extent=(0.0, extent_x, 0.0, extent_y),
            interpolation="nearest",
        )
        if demo is not None:
            xs, ys = _xy(demo.poses)
            (line,) = ax.plot(xs, ys, color=REFERENCE_COLOR, linewidth=2.0, linestyle="--")
            line.set_gid("reference")
            ax.plot(xs[:1], ys[:1], marker="o", color=REFERENCE_COLOR)
            ax.plot(xs[-1:], ys[-1:], marker="*", markersize=12, color=REFERENCE_COLOR)

        counts: Dict[str, int] = {}
        for n, (kind, rollout) in enumerate(rollouts):
            k = counts.get(kind, 0)
            counts[kind] = k + 1
            xs, ys = _xy(rollout.poses)
            (line,) = ax.plot(xs, ys, color=policy_color(kind, n), linewidth=1.2, alpha=0.9)
            line.set_gid(f"rollout-{kind}-{k}")

        ax.set_xlim(0.0, extent_x)
        ax.set_ylim(0.0, extent_y)
        ax.set_aspect("equal")
        ax.set_xticks([])
        ax.set_yticks([])
        if title:
            ax.set_title(title)

        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None, "Creator": None}, bbox_inches="tight")
        plt.close(fig)
    logger.debug(f"Rendered top view with {len(rollouts)} rollouts")
    return buffer.getvalue()
