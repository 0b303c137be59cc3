"""A* search over noiseless macro-action successors."""

import heapq
import itertools
import logging
from typing import Callable, Generic, Hashable, List, Optional, Tuple, TypeVar

from app.envgen.lattice import DistanceField, lattice_state
from app.sim.dynamics import transition
from app.sim.types import Action, Pose
from app.sim.world import AGENT_RADIUS, World

logger = logging.getLogger(__name__)

Node = TypeVar("Node")

PLAN_ACTIONS = (Action.ROTATE_LEFT, Action.ROTATE_RIGHT, Action.FORWARD)


class AStarPlanner(Generic[Node]):
    """Unit-cost A*; nodes are deduplicated by ``key(node)``."""

    def __init__(
        self,
        successors: Callable[[Node], List[Tuple[Action, Node]]],
        heuristic: Callable[[Node], float],
        is_goal: Callable[[Node], bool],
        key: Callable[[Node], Hashable] = lambda node: node,
        max_expansions: int = 500000,
    ):
        self.successors = successors
        self.heuristic = heuristic
        self.is_goal = is_goal
        self.key = key
        self.max_expansions = max_expansions

    def plan(self, start: Node) -> Optional[List[Tuple[Node, Optional[Action]]]]:
        """Return ``[(node, action_taken_from_node), ...]`` ending with ``(goal, None)``, or None."""
        h0 = self.heuristic(start)
        if h0 == float("inf"):
            return None
        tie = itertools.count()
        frontier = [(h0, next(tie), start)]
        start_key = self.key(start)
        came_from = {start_key: None}
        cost_so_far = {start_key: 0}
        closed = set()
        expansions = 0

        while frontier and expansions < self.max_expansions:
            _, _, current = heapq.heappop(frontier)
            current_key = self.key(current)
            if current_key in closed:
                continue
            closed.add(current_key)
            expansions += 1

            if self.is_goal(current):
                return self.reconstruct_path(came_from, current)

            for action, nxt in self.successors(current):
                nxt_key = self.key(nxt)
                if nxt_key in closed:
                    continue
                new_cost = cost_so_far[current_key] + 1
                if nxt_key not in cost_so_far or new_cost < cost_so_far[nxt_key]:
                    h = self.heuristic(nxt)
                    if h == float("inf"):
                        continue
                    cost_so_far[nxt_key] = new_cost
                    came_from[nxt_key] = (current, action)
                    heapq.heappush(frontier, (new_cost + h, next(tie), nxt))

        return None

    def reconstruct_path(self, came_from, goal: Node) -> List[Tuple[Node, Optional[Action]]]:
        path = [(goal, None)]
        link = came_from[self.key(goal)]
        while link is not None:
            node, action = link
            path.append((node, action))
            link = came_from[self.key(node)]
        path.reverse()
        return path


def plan_poses(
    world: World,
    start: Pose,
    field: DistanceField,
    min_clearance: float = 0.0,
    radius: float = AGENT_RADIUS,
) -> Optional[List[Tuple[Pose, Optional[Action]]]]:
    """Plan over exact noiseless poses, keyed by lattice state, guided by ``field``.

    Every pose on the returned plan is collision-free for a disk of ``radius``
    and lies in a cell at least ``min_clearance`` from occupancy.
    """
    goal = field.goal

    def successors(pose: Pose):
        out = []
        for action in PLAN_ACTIONS:
            result = transition(world, pose, action, radius=radius)
            if result.blocked:
                continue
            if world.clearance(result.pose.x, result.pose.y) < min_clearance:
                continue
            out.append((action, result.pose))
        return out

    planner = AStarPlanner(
        successors,
        heuristic=field.at_pose,
        is_goal=lambda pose: world.cell_of(pose.x, pose.y) == goal,
        key=lambda pose: lattice_state(world, pose),
    )
    return planner.plan(start)
