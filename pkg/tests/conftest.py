import numpy as np
import pytest

from app.config import RunConfig
from app.envgen.generator import generate_world
from app.envgen.sampler import sample_demonstration
from app.policy.network import RPFNetwork
from app.sim.world import World, boxed_walls, open_world

TINY = {
    "world.width": 32,
    "world.height": 32,
    "world.rooms": 1,
    "world.object_count": 2,
    "demo.length": 10,
    "demo.clearance": 0.4,
    "eval.horizon": 14,
    "eval.trials": 4,
    "eval.bootstrap": 50,
    "encoder.width": 8,
    "gru.hidden": 8,
    "trainer.iterations": 2,
    "trainer.batch": 2,
    "trainer.checkpoint_every": 1,
    "trainer.val_trials": 0,
    "workers": 1,
}


@pytest.fixture
def tiny_config(tmp_path) -> RunConfig:
    """Small worlds and a small network; every command finishes in seconds."""
    return RunConfig().with_overrides({**TINY, "out": str(tmp_path / "run")})


@pytest.fixture
def tiny_world(tiny_config) -> World:
    return generate_world(3, tiny_config.world)


@pytest.fixture
def tiny_demo(tiny_world):
    return sample_demonstration(tiny_world, seed=1, length=10, min_clearance=0.4, world_seed=3)


@pytest.fixture
def tiny_net() -> RPFNetwork:
    return RPFNetwork(width=8, hidden=8, seed=0)


@pytest.fixture
def empty_world() -> World:
    """40 x 40 grid with no obstacles at all."""
    return open_world(40, 40)


@pytest.fixture
def walled_world() -> World:
    """40 x 40 room with a wall column at x = 6.0 m."""
    walls = boxed_walls(40, 40)
    walls[30, :] = True
    return World(walls)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
