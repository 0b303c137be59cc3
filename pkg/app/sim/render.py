"""First-person range-and-label scans via grid ray traversal."""

import numpy as np

from app.errors import ContractError
from app.sim.types import CLASS_NAMES, FOV_DEG, MAX_RANGE_M, N_RAYS, RAY_WIDTH, Observation, Pose
from app.sim.world import LABEL_FREE, World

NOTHING = CLASS_NAMES.index("nothing")


def ray_offsets() -> np.ndarray:
    """Ray angles relative to heading in degrees, leftmost first."""
    k = np.arange(N_RAYS)
    return FOV_DEG / 2.0 - (k + 0.5) * FOV_DEG / N_RAYS


def cast_rays(world: World, x: float, y: float, angles_deg: np.ndarray):
    """Amanatides-Woo traversal of every ray at once.

    Returns hit distances in meters (``inf`` when nothing is hit within range)
    and the label code of the hit cell.
    """
    c = world.cell_m
    max_t = MAX_RANGE_M / c
    ox, oy = x / c, y / c
    rad = np.radians(angles_deg)
    dx, dy = np.cos(rad), np.sin(rad)
    n = len(rad)

    ci = np.full(n, int(np.floor(ox)))
    cj = np.full(n, int(np.floor(oy)))
    step_i = np.where(dx > 0, 1, -1)
    step_j = np.where(dy > 0, 1, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        delta_i = np.where(dx != 0, 1.0 / np.abs(dx), np.inf)
        delta_j = np.where(dy != 0, 1.0 / np.abs(dy), np.inf)
        next_i = np.where(dx > 0, (ci + 1 - ox) * delta_i, (ox - ci) * delta_i)
        next_j = np.where(dy > 0, (cj + 1 - oy) * delta_j, (oy - cj) * delta_j)
    next_i = np.where(dx != 0, next_i, np.inf)
    next_j = np.where(dy != 0, next_j, np.inf)

    hit_t = np.full(n, np.inf)
    hit_label = np.full(n, LABEL_FREE, dtype=np.int64)
    t_enter = np.zeros(n)
    active = np.ones(n, dtype=bool)
    labels = world.labels

    while active.any():
        inside = (ci >= 0) & (ci < world.width) & (cj >= 0) & (cj < world.height)
        # leaving the grid or the sensor range ends the ray with no hit
        active &= inside & (t_enter <= max_t)
        if not active.any():
            break
        idx = np.flatnonzero(active)
        cell = labels[ci[idx], cj[idx]]
        hit = cell != LABEL_FREE
        hit_t[idx[hit]] = t_enter[idx[hit]]
        hit_label[idx[hit]] = cell[hit]
        active[idx[hit]] = False

        idx = np.flatnonzero(active)
        go_i = next_i[idx] < next_j[idx]
        a, b = idx[go_i], idx[~go_i]
        t_enter[a] = next_i[a]
        ci[a] += step_i[a]
        next_i[a] += delta_i[a]
        t_enter[b] = next_j[b]
        cj[b] += step_j[b]
        next_j[b] += delta_j[b]

    return hit_t * c, hit_label


def _scan(world: World, pose: Pose) -> Observation:
    if not world.contains(pose.x, pose.y):
        raise ContractError(f"cannot render from outside the grid: {pose}")
    dist, label = cast_rays(world, pose.x, pose.y, pose.theta + ray_offsets())
    rays = np.zeros((N_RAYS, RAY_WIDTH), dtype=np.float32)
    seen = np.isfinite(dist) & (dist <= MAX_RANGE_M)
    rays[:, 0] = np.where(seen, np.minimum(dist / MAX_RANGE_M, 1.0), 1.0)
    cls = np.where(seen, label, NOTHING)
    rays[np.arange(N_RAYS), 1 + cls] = 1.0
    return Observation(rays)


def render(world: World, pose: Pose) -> Observation:
    return _scan(world, pose)


def rotated_render(world: World, pose: Pose, offset_deg: float = 180.0) -> Observation:
    """Scan from a camera mounted at ``offset_deg`` relative to the heading."""
    return _scan(world, pose.rotated(offset_deg))
