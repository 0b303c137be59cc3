import math

import numpy as np
import pytest
from scipy import ndimage

from app.config import WorldSection
from app.envgen.demonstration import Demonstration, reverse_demonstration
from app.envgen.generator import generate_world
from app.envgen.lattice import N_HEADINGS, LatticeGraph, LatticeState, distance_field, lattice_state
from app.envgen.sampler import length_band, sample_demonstration
from app.errors import ContractError, DemonstrationSamplingError, WorldGenerationError
from app.sim.dynamics import replay
from app.sim.render import render
from app.sim.types import Action
from app.sim.world import World, boxed_walls


class TestGenerator:
    def test_same_seed_same_world(self):
        assert generate_world(7).same_as(generate_world(7))
        assert not generate_world(7).same_as(generate_world(8))

    def test_free_space_is_one_component(self):
        for seed in range(5):
            world = generate_world(seed)
            _, count = ndimage.label(~world.occupancy)
            assert count == 1
            assert len(world.objects) == 12

    @pytest.mark.slow
    def test_thousand_seeds_are_connected(self):
        for seed in range(1000):
            _, count = ndimage.label(~generate_world(seed).occupancy)
            assert count == 1, seed

    def test_tiny_grid_rejects_large_doors(self):
        with pytest.raises(WorldGenerationError):
            generate_world(0, WorldSection(width=16, height=16, rooms=4, door_width=12, object_count=0))


class TestDistanceField:
    @pytest.fixture
    def field(self, tiny_world):
        graph = LatticeGraph(tiny_world)
        goal = tuple(int(v) for v in np.argwhere(graph.traversable)[len(graph.traversable.nonzero()[0]) // 2])
        return distance_field(tiny_world, goal, graph=graph)

    def test_goal_cell_is_zero_for_every_heading(self, field):
        gi, gj = field.goal
        assert all(field.at(LatticeState(gi, gj, k)) == 0 for k in range(N_HEADINGS))

    def test_rotation_neighbours_differ_by_at_most_one(self, field):
        values = field.values
        finite = np.isfinite(values) & np.isfinite(np.roll(values, 1, axis=2))
        assert (np.abs(values - np.roll(values, 1, axis=2))[finite] <= 1).all()

    def test_forward_successor_bounds_distance(self, field):
        graph = field.graph
        flat = field.values.reshape(-1)
        forward = graph.successors[2]
        has_edge = (forward >= 0) & np.isfinite(flat)
        src = np.flatnonzero(has_edge)
        assert (flat[src] <= flat[forward[src]] + 1).all()

    def test_every_state_is_one_step_from_a_closer_one(self, field):
        flat = field.values.reshape(-1)
        succ = field.graph.successors
        valid = (succ >= 0) & (succ != np.arange(flat.size))
        nxt = np.where(valid, flat[np.where(valid, succ, 0)], np.inf)
        best = nxt.min(axis=0)
        interior = np.isfinite(flat) & (flat > 0)
        assert interior.any()
        assert np.array_equal(flat[interior], best[interior] + 1)

    def test_goal_must_be_free(self):
        walls = boxed_walls(20, 20)
        with pytest.raises(ContractError):
            distance_field(World(walls), (0, 0))

    def test_walled_off_region_is_unreachable(self):
        walls = boxed_walls(20, 20)
        walls[10, :] = True
        world = World(walls)
        field = distance_field(world, (5, 5))
        assert math.isinf(field.at(LatticeState(15, 5, 0)))


class TestDemonstrations:
    def test_length_band(self):
        assert length_band(30) == (27, 33)
        assert length_band(10) == (9, 11)

    def test_sampled_path_respects_length_and_clearance(self, tiny_world, tiny_demo):
        low, high = length_band(10)
        assert low + 1 <= len(tiny_demo) <= high + 1
        assert tiny_demo.actions[-1] is Action.STAY
        assert all(tiny_world.clearance(p.x, p.y) >= 0.4 - 1e-9 for p in tiny_demo.poses)
        assert low <= tiny_demo.metadata["geodesic"] <= high

    def test_actions_replay_to_the_recorded_poses(self, tiny_world, tiny_demo):
        poses = replay(tiny_world, tiny_demo.start, tiny_demo.moves)
        for replayed, recorded in zip(poses, tiny_demo.poses):
            assert replayed.x == pytest.approx(recorded.x)
            assert replayed.y == pytest.approx(recorded.y)
        assert render(tiny_world, tiny_demo.goal).equals(tiny_demo.observations[-1])

    def test_same_seed_same_demonstration(self, tiny_world, tiny_demo):
        again = sample_demonstration(tiny_world, seed=1, length=10, min_clearance=0.4, world_seed=3)
        assert again.poses == tiny_demo.poses
        assert again.actions == tiny_demo.actions

    def test_impossible_clearance_gives_up(self, tiny_world):
        with pytest.raises(DemonstrationSamplingError):
            sample_demonstration(tiny_world, seed=0, length=10, min_clearance=50.0, retries=3)

    def test_goal_is_reachable_in_the_execution_world(self, tiny_world):
        emptied = tiny_world.with_objects([])
        demo = sample_demonstration(emptied, seed=2, length=10, min_clearance=0.4, exec_world=tiny_world)
        goal = tiny_world.cell_of(demo.goal.x, demo.goal.y)
        field = distance_field(tiny_world, goal)
        assert math.isfinite(field.at(lattice_state(tiny_world, demo.start)))

    def test_reversal(self, tiny_world, tiny_demo):
        back = reverse_demonstration(tiny_demo, tiny_world)
        assert back.reversed and len(back) == len(tiny_demo)
        assert back.start == tiny_demo.goal.flipped()
        assert back.goal == tiny_demo.start.flipped()
        assert back.actions[-1] is Action.STAY
        assert back.moves == [a.reversed() for a in reversed(tiny_demo.moves)]

        twice = reverse_demonstration(back, tiny_world)
        assert twice.poses == tiny_demo.poses
        assert twice.actions == tiny_demo.actions
        assert all(a.equals(b) for a, b in zip(twice.observations, tiny_demo.observations))

    def test_reversed_path_is_drivable(self, tiny_world, tiny_demo):
        back = reverse_demonstration(tiny_demo, tiny_world)
        poses = replay(tiny_world, back.start, back.moves)
        assert poses[-1].x == pytest.approx(back.goal.x)
        assert poses[-1].y == pytest.approx(back.goal.y)

    def test_jsonl_document(self, tiny_demo):
        text = tiny_demo.to_jsonl()
        header = text.splitlines()[0]
        assert '"kind": "header"' in header
        assert len(text.splitlines()) == len(tiny_demo) + 1
        loaded = Demonstration.from_jsonl(text)
        assert loaded.poses == tiny_demo.poses
        assert loaded.actions == tiny_demo.actions
        assert loaded.metadata["demo_seed"] == 1
        assert all(a.equals(b) for a, b in zip(loaded.observations, tiny_demo.observations))
        with pytest.raises(ContractError):
            Demonstration.from_jsonl("\n".join(text.splitlines()[1:]))
