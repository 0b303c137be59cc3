"""Procedural floor plans: rooms joined by doors, furnished with removable objects."""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from app.config import WorldSection
from app.errors import WorldGenerationError
from app.sim.world import OBJECT_TAGS, World, WorldObject, boxed_walls

logger = logging.getLogger(__name__)

OBJECT_MIN_CELLS = 2
OBJECT_MAX_CELLS = 5
WALL_GAP = 4
OBJECT_GAP = 4
DOOR_KEEPOUT = 3
PLACEMENT_ATTEMPTS = 60


def _split_points(rng: np.random.Generator, length: int, parts: int) -> List[int]:
    """Interior wall coordinates dividing ``[0, length)`` into ``parts`` jittered bands."""
    spacing = (length - 1) / parts
    points = []
    for p in range(1, parts):
        jitter = rng.uniform(-0.2, 0.2) * spacing
        points.append(int(round(p * spacing + jitter)))
    return points


def _wall_segments(xs: List[int], ys: List[int], width: int, height: int):
    """Interior wall segments as ``(axis, fixed, lo, hi)`` with ``lo..hi`` exclusive of crossings."""
    xb = [0] + xs + [width - 1]
    yb = [0] + ys + [height - 1]
    segments = []
    for x in xs:
        for lo, hi in zip(yb[:-1], yb[1:]):
            segments.append(("x", x, lo + 1, hi - 1))
    for y in ys:
        for lo, hi in zip(xb[:-1], xb[1:]):
            segments.append(("y", y, lo + 1, hi - 1))
    return segments


def _layout_walls(rng: np.random.Generator, spec: WorldSection) -> Tuple[np.ndarray, np.ndarray]:
    cols = int(math.ceil(math.sqrt(spec.rooms)))
    rows = int(math.ceil(spec.rooms / cols))
    walls = boxed_walls(spec.width, spec.height)
    doors = np.zeros_like(walls)
    xs = _split_points(rng, spec.width, cols)
    ys = _split_points(rng, spec.height, rows)
    segments = _wall_segments(xs, ys, spec.width, spec.height)

    # merge surplus grid cells into neighbours by leaving some segments open
    surplus = cols * rows - spec.rooms
    open_segments = set(rng.choice(len(segments), size=surplus, replace=False).tolist()) if surplus else set()

    for idx, (axis, fixed, lo, hi) in enumerate(segments):
        span = hi - lo + 1
        if idx in open_segments:
            continue
        if span < spec.door_width + 2:
            raise WorldGenerationError(
                f"room wall of {span} cells cannot hold a door of width {spec.door_width}; "
                f"use fewer rooms or a larger grid"
            )
        if axis == "x":
            walls[fixed, lo : hi + 1] = True
        else:
            walls[lo : hi + 1, fixed] = True
        start = int(rng.integers(lo + 1, hi - spec.door_width + 2))
        if axis == "x":
            walls[fixed, start : start + spec.door_width] = False
            doors[fixed, start : start + spec.door_width] = True
        else:
            walls[start : start + spec.door_width, fixed] = False
            doors[start : start + spec.door_width, fixed] = True

    # crossings of interior walls stay solid
    for x in xs:
        for y in ys:
            walls[x, y] = True
            doors[x, y] = False
    return walls, doors


def _single_component(free: np.ndarray) -> bool:
    _, count = ndimage.label(free)
    return count == 1


def _place_objects(rng: np.random.Generator, walls: np.ndarray, doors: np.ndarray, count: int) -> List[WorldObject]:
    wall_dist = ndimage.distance_transform_cdt(~walls, metric="chessboard")
    keepout = ndimage.binary_dilation(doors, iterations=DOOR_KEEPOUT, structure=np.ones((3, 3), dtype=bool))
    occupied = walls.copy()
    objects_mask = np.zeros_like(walls)
    objects: List[WorldObject] = []
    width, height = walls.shape

    for obj_id in range(count):
        obj_dist = (
            ndimage.distance_transform_cdt(~objects_mask, metric="chessboard")
            if objects_mask.any()
            else np.full(walls.shape, np.iinfo(np.int32).max)
        )
        placed = False
        for _ in range(PLACEMENT_ATTEMPTS):
            w = int(rng.integers(OBJECT_MIN_CELLS, OBJECT_MAX_CELLS + 1))
            h = int(rng.integers(OBJECT_MIN_CELLS, OBJECT_MAX_CELLS + 1))
            i0 = int(rng.integers(1, width - w))
            j0 = int(rng.integers(1, height - h))
            region = (slice(i0, i0 + w), slice(j0, j0 + h))
            near_wall = int(wall_dist[region].min())
            # flush against a wall or leaving a passable gap
            if not (near_wall == 1 or near_wall >= WALL_GAP):
                continue
            if int(obj_dist[region].min()) < OBJECT_GAP or keepout[region].any():
                continue
            trial = occupied.copy()
            trial[region] = True
            if not _single_component(~trial):
                continue
            tag = OBJECT_TAGS[int(rng.integers(len(OBJECT_TAGS)))]
            cells = tuple((i, j) for i in range(i0, i0 + w) for j in range(j0, j0 + h))
            objects.append(WorldObject(id=obj_id, tag=tag, cells=cells))
            occupied = trial
            objects_mask[region] = True
            placed = True
            break
        if not placed:
            raise WorldGenerationError(
                f"could not place object {obj_id + 1} of {count} after {PLACEMENT_ATTEMPTS} attempts"
            )
    return objects


def generate_world(seed: int, spec: Optional[WorldSection] = None) -> World:
    """Deterministic world for ``seed``: walled rooms, doors, then objects."""
    spec = spec or WorldSection()
    rng = np.random.default_rng(seed)
    walls, doors = _layout_walls(rng, spec)
    if not _single_component(~walls):
        raise WorldGenerationError(f"room layout for seed {seed} is not connected")
    objects = _place_objects(rng, walls, doors, spec.object_count)
    world = World(walls, objects, spec.cell_m)
    logger.info(f"Generated world seed={seed}: {spec.rooms} rooms, {len(objects)} objects")
    return world
