"""Discrete (cell, heading) lattice and the geodesic distance-to-goal oracle."""

import logging
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from app.errors import ContractError
from app.sim.types import FORWARD_M, ROTATE_DEG, Action, Pose
from app.sim.world import World

logger = logging.getLogger(__name__)

N_HEADINGS = int(round(360.0 / ROTATE_DEG))
SWEEP_SAMPLES = 21

# successor table rows
MOVES = (Action.ROTATE_LEFT, Action.ROTATE_RIGHT, Action.FORWARD)


class LatticeState(NamedTuple):
    cell_i: int
    cell_j: int
    theta_bin: int


def heading_bin(theta: float) -> int:
    return int(round(theta / ROTATE_DEG)) % N_HEADINGS


def lattice_state(world: World, pose: Pose) -> LatticeState:
    i, j = world.cell_of(pose.x, pose.y)
    return LatticeState(i, j, heading_bin(pose.theta))


def state_pose(world: World, state: LatticeState) -> Pose:
    x, y = world.cell_center(state.cell_i, state.cell_j)
    return Pose(x, y, state.theta_bin * ROTATE_DEG)


class LatticeGraph:
    """Noiseless action graph over ``W x H x 12`` states.

    The lattice agent is a point that always sits at a cell center; Forward
    moves it 0.4 m along the bin heading and snaps to the cell it lands in.
    A Forward whose sweep touches a blocked cell is a self-loop and gets no
    edge. With ``min_clearance`` set, cells closer than that to occupancy are
    blocked as well.
    """

    def __init__(self, world: World, min_clearance: float = 0.0):
        self.world = world
        self.min_clearance = float(min_clearance)
        self.shape = (world.width, world.height, N_HEADINGS)
        self.size = int(np.prod(self.shape))
        traversable = ~world.occupancy
        if self.min_clearance > 0:
            traversable = traversable & (world.clearance_map >= self.min_clearance)
        self.traversable = traversable
        self.successors = self._build_successors()
        self.reverse_adjacency = self._build_reverse()

    def index(self, state: LatticeState) -> int:
        return int(np.ravel_multi_index(tuple(state), self.shape))

    def state(self, index: int) -> LatticeState:
        return LatticeState(*(int(v) for v in np.unravel_index(index, self.shape)))

    def _build_successors(self) -> np.ndarray:
        W, H, K = self.shape
        table = np.full((len(MOVES), W, H, K), -1, dtype=np.int64)
        ii, jj = np.meshgrid(np.arange(W), np.arange(H), indexing="ij")
        free = self.traversable

        for k in range(K):
            for row, delta in ((0, 1), (1, -1)):
                dest = np.ravel_multi_index((ii, jj, np.full_like(ii, (k + delta) % K)), self.shape)
                table[row, :, :, k] = np.where(free, dest, -1)

        step_cells = FORWARD_M / self.world.cell_m
        frac = np.linspace(0.0, 1.0, SWEEP_SAMPLES)
        cx = ii.reshape(-1, 1) + 0.5
        cy = jj.reshape(-1, 1) + 0.5
        for k in range(K):
            rad = np.radians(k * ROTATE_DEG)
            px = np.floor(cx + frac * step_cells * np.cos(rad)).astype(np.int64)
            py = np.floor(cy + frac * step_cells * np.sin(rad)).astype(np.int64)
            inside = (px >= 0) & (px < W) & (py >= 0) & (py < H)
            ok = np.zeros_like(inside)
            ok[inside] = free[px[inside], py[inside]]
            clear = ok.all(axis=1) & free.reshape(-1)
            dest = np.full(W * H, -1, dtype=np.int64)
            dest[clear] = np.ravel_multi_index(
                (px[clear, -1], py[clear, -1], np.full(int(clear.sum()), k)), self.shape
            )
            table[2, :, :, k] = dest.reshape(W, H)
        return table.reshape(len(MOVES), -1)

    def _build_reverse(self) -> csr_matrix:
        sources = np.tile(np.arange(self.size), len(MOVES))
        targets = self.successors.reshape(-1)
        keep = (targets >= 0) & (targets != sources)
        ones = np.ones(int(keep.sum()), dtype=np.float64)
        # edge t -> s so that searching from the goal yields distance-to-goal
        return csr_matrix((ones, (targets[keep], sources[keep])), shape=(self.size, self.size))

    def successor(self, state: LatticeState, action: Action) -> Optional[LatticeState]:
        """Noiseless lattice successor; None when the move is blocked."""
        action = Action(action)
        if action is Action.STAY:
            return state if self.traversable[state.cell_i, state.cell_j] else None
        dest = self.successors[MOVES.index(action), self.index(state)]
        return None if dest < 0 else self.state(int(dest))


class DistanceField:
    """Minimum macro-action count from each lattice state to the goal cell (``inf`` if unreachable)."""

    def __init__(self, graph: LatticeGraph, goal: Tuple[int, int], values: np.ndarray):
        self.graph = graph
        self.goal = (int(goal[0]), int(goal[1]))
        self.values = values

    def at(self, state: LatticeState) -> float:
        i, j, k = state
        if not self.graph.world.in_bounds(i, j):
            return float("inf")
        return float(self.values[i, j, k])

    def at_pose(self, pose: Pose) -> float:
        return self.at(lattice_state(self.graph.world, pose))

    def reachable_states(self, low: float, high: float) -> np.ndarray:
        """Lattice states whose distance lies in ``[low, high]`` as an ``(n, 3)`` index array."""
        return np.argwhere((self.values >= low) & (self.values <= high))


def distance_field(
    world: World,
    goal: Union[LatticeState, Tuple[int, int]],
    min_clearance: float = 0.0,
    graph: Optional[LatticeGraph] = None,
) -> DistanceField:
    """Breadth-first distances over the noiseless action graph; the goal is a cell, any heading."""
    if graph is None:
        graph = LatticeGraph(world, min_clearance)
    gi, gj = int(goal[0]), int(goal[1])
    if not world.in_bounds(gi, gj) or not graph.traversable[gi, gj]:
        raise ContractError(f"goal cell {(gi, gj)} is not in free space")
    sources = [graph.index(LatticeState(gi, gj, k)) for k in range(N_HEADINGS)]
    dist = dijkstra(graph.reverse_adjacency, directed=True, indices=sources, unweighted=True, min_only=True)
    logger.debug(f"Distance field to {(gi, gj)}: {int(np.isfinite(dist).sum())} reachable states")
    return DistanceField(graph, (gi, gj), dist.reshape(graph.shape))
