"""Occupancy-grid worlds with removable, class-tagged objects."""

import json
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy import ndimage

from app.errors import ContractError

logger = logging.getLogger(__name__)

CELL_M = 0.2
AGENT_RADIUS = 0.15
OBJECT_TAGS = ("objectA", "objectB")

# label grid codes, aligned with CLASS_NAMES
LABEL_WALL = 0
LABEL_OBJECT_A = 1
LABEL_OBJECT_B = 2
LABEL_FREE = 3


@dataclass(frozen=True)
class WorldObject:
    """A removable obstacle occupying a set of grid cells."""

    id: int
    tag: str
    cells: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        if self.tag not in OBJECT_TAGS:
            raise ContractError(f"object {self.id} has unknown class tag {self.tag!r}")
        object.__setattr__(self, "cells", tuple((int(i), int(j)) for i, j in self.cells))


class World:
    """Immutable 2D environment; cell ``(i, j)`` covers ``[i*c, (i+1)*c) x [j*c, (j+1)*c)``."""

    def __init__(self, walls: np.ndarray, objects: Sequence[WorldObject] = (), cell_m: float = CELL_M):
        walls = np.array(walls, dtype=bool)
        if walls.ndim != 2:
            raise ContractError(f"walls must be a 2D grid, got shape {walls.shape}")
        self.cell_m = float(cell_m)
        self.width, self.height = walls.shape
        walls.setflags(write=False)
        self.walls = walls
        seen = np.zeros_like(walls)
        for obj in objects:
            for i, j in obj.cells:
                if not (0 <= i < self.width and 0 <= j < self.height):
                    raise ContractError(f"object {obj.id} cell {(i, j)} lies outside the grid")
                if walls[i, j]:
                    raise ContractError(f"object {obj.id} overlaps a base wall at {(i, j)}")
                if seen[i, j]:
                    raise ContractError(f"object {obj.id} overlaps another object at {(i, j)}")
                seen[i, j] = True
        self.objects: Tuple[WorldObject, ...] = tuple(objects)

    @cached_property
    def labels(self) -> np.ndarray:
        labels = np.full((self.width, self.height), LABEL_FREE, dtype=np.int8)
        labels[self.walls] = LABEL_WALL
        for obj in self.objects:
            code = LABEL_OBJECT_A if obj.tag == "objectA" else LABEL_OBJECT_B
            for i, j in obj.cells:
                labels[i, j] = code
        labels.setflags(write=False)
        return labels

    @cached_property
    def occupancy(self) -> np.ndarray:
        occupancy = self.labels != LABEL_FREE
        occupancy.setflags(write=False)
        return occupancy

    @cached_property
    def clearance_map(self) -> np.ndarray:
        """Meters from each cell center to the nearest occupied cell center (0 inside obstacles)."""
        if not self.occupancy.any():
            return np.full(self.occupancy.shape, np.inf)
        return ndimage.distance_transform_edt(~self.occupancy) * self.cell_m

    def cell_of(self, x: float, y: float) -> Tuple[int, int]:
        return int(np.floor(x / self.cell_m)), int(np.floor(y / self.cell_m))

    def cell_center(self, i: int, j: int) -> Tuple[float, float]:
        return (i + 0.5) * self.cell_m, (j + 0.5) * self.cell_m

    def in_bounds(self, i: int, j: int) -> bool:
        return 0 <= i < self.width and 0 <= j < self.height

    def contains(self, x: float, y: float) -> bool:
        return self.in_bounds(*self.cell_of(x, y))

    def is_free_cell(self, i: int, j: int) -> bool:
        return self.in_bounds(i, j) and not self.occupancy[i, j]

    def free_cells(self) -> np.ndarray:
        return np.argwhere(~self.occupancy)

    def clearance(self, x: float, y: float) -> float:
        i, j = self.cell_of(x, y)
        if not self.in_bounds(i, j):
            return 0.0
        return float(self.clearance_map[i, j])

    def disk_collides(self, points: np.ndarray, radius: float = AGENT_RADIUS) -> np.ndarray:
        """Vectorized disk-vs-occupied-cell test; cells outside the grid count as occupied."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64)) / self.cell_m
        r = radius / self.cell_m
        if r >= 1.0:
            raise ContractError(f"disk radius {radius} must be below one cell ({self.cell_m})")
        base = np.floor(pts).astype(np.int64)
        hits = np.zeros(len(pts), dtype=bool)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                ci = base[:, 0] + di
                cj = base[:, 1] + dj
                inside = (ci >= 0) & (ci < self.width) & (cj >= 0) & (cj < self.height)
                occupied = np.ones(len(pts), dtype=bool)
                occupied[inside] = self.occupancy[ci[inside], cj[inside]]
                nx = np.clip(pts[:, 0], ci, ci + 1)
                ny = np.clip(pts[:, 1], cj, cj + 1)
                d2 = (pts[:, 0] - nx) ** 2 + (pts[:, 1] - ny) ** 2
                if r == 0.0:
                    touching = (di == 0) & (dj == 0)
                    hits |= occupied & touching
                else:
                    hits |= occupied & (d2 < r * r)
        return hits

    def pose_collides(self, x: float, y: float, radius: float = AGENT_RADIUS) -> bool:
        return bool(self.disk_collides(np.array([[x, y]]), radius)[0])

    def with_objects(self, objects: Iterable[WorldObject]) -> "World":
        return World(self.walls, tuple(objects), self.cell_m)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "grid_w": self.width,
            "grid_h": self.height,
            "cell_m": self.cell_m,
            "walls": [[int(i), int(j)] for i, j in np.argwhere(self.walls)],
            "objects": [
                {"id": obj.id, "class": obj.tag, "cells": [list(c) for c in obj.cells]}
                for obj in self.objects
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "World":
        try:
            walls = np.zeros((int(data["grid_w"]), int(data["grid_h"])), dtype=bool)
            for i, j in data["walls"]:
                walls[i, j] = True
            objects = [
                WorldObject(id=int(o["id"]), tag=o["class"], cells=tuple(tuple(c) for c in o["cells"]))
                for o in data["objects"]
            ]
        except (KeyError, TypeError, ValueError, IndexError) as e:
            raise ContractError(f"malformed world document: {e}") from e
        return cls(walls, objects, float(data.get("cell_m", CELL_M)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def same_as(self, other: "World") -> bool:
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"World({self.width}x{self.height}, objects={len(self.objects)})"


def apply_change(world: World, removal_prob: float, rng: np.random.Generator) -> World:
    """Remove each object independently with probability ``removal_prob``; walls are untouched."""
    if not 0.0 <= removal_prob <= 1.0:
        raise ContractError(f"removal probability must be in [0, 1], got {removal_prob}")
    draws = rng.random(len(world.objects))
    kept = [obj for obj, u in zip(world.objects, draws) if u >= removal_prob]
    logger.debug(f"World change r={removal_prob}: kept {len(kept)}/{len(world.objects)} objects")
    return world.with_objects(kept)


def open_world(width: int = 80, height: int = 80, cell_m: float = CELL_M) -> World:
    """Wall-free grid, handy for tests and calibration."""
    return World(np.zeros((width, height), dtype=bool), (), cell_m)


def boxed_walls(width: int, height: int) -> np.ndarray:
    walls = np.zeros((width, height), dtype=bool)
    walls[0, :] = walls[-1, :] = True
    walls[:, 0] = walls[:, -1] = True
    return walls


def object_cells(objects: Sequence[WorldObject]) -> List[Tuple[int, int]]:
    return [cell for obj in objects for cell in obj.cells]
