import pytest

from app.envgen.lattice import distance_field
from app.graph.workflow import EpisodeWorkflow, get_workflow, graph_for, world_for_seed
from app.policy.policies import make_policy

FOLLOWING_PATH = ["prepare_worlds", "record_demonstration", "build_following_memory", "execute", "score_trial"]
HOMING_PATH = ["prepare_worlds", "record_demonstration", "build_homing_memory", "execute", "score_trial"]


@pytest.fixture
def workflow() -> EpisodeWorkflow:
    return get_workflow()


def test_following_episode_visits_every_stage(workflow, tiny_config):
    final = workflow.run_episode(tiny_config, make_policy(tiny_config, "open_loop"), 9000, 5, trial_index=0)
    assert final["nodes_visited"] == FOLLOWING_PATH
    assert final["error_message"] is None
    assert final["trial"].trial_index == 0
    assert len(final["rollout"].actions) == tiny_config.eval.horizon
    assert final["reference"] is final["demo"]


def test_homing_episode_retraces_the_reversed_path(workflow, tiny_config):
    final = workflow.run_episode(tiny_config, make_policy(tiny_config, "rpf"), 9000, 5, task="homing")
    assert final["nodes_visited"] == HOMING_PATH
    reference, demo = final["reference"], final["demo"]
    assert reference.reversed
    assert reference.start == demo.goal.flipped()
    assert final["rollout"].poses[0] == reference.start


def test_training_episode_ends_with_labels(workflow, tiny_config):
    final = workflow.run_episode(tiny_config, make_policy(tiny_config, "rpf"), 0, 3, mode="train", horizon=6)
    assert final["nodes_visited"][-1] == "label_actions"
    assert final["trial"] is None
    assert len(final["labels"]) == 6
    assert all(final["labels"])


def test_demonstration_failure_stops_the_episode(workflow, tiny_config):
    config = tiny_config.with_overrides({"demo.clearance": 40.0, "demo.retries": 2})
    final = workflow.run_episode(config, make_policy(config, "open_loop"), 9000, 5)
    assert final["nodes_visited"] == ["prepare_worlds", "record_demonstration"]
    assert final["error_message"].startswith("Demonstration recording failed")
    assert final["trial"] is None


def test_same_seeds_same_episode(workflow, tiny_config):
    config = tiny_config.with_overrides({"sim.noise": 0.3})
    policy = make_policy(config, "open_loop")
    a = workflow.run_episode(config, policy, 9001, 17)
    b = workflow.run_episode(config, policy, 9001, 17)
    assert a["rollout"].poses == b["rollout"].poses


def test_paired_change_removes_a_superset(workflow, tiny_config):
    config = tiny_config.with_overrides(
        {"world.object_count": 4, "change.r_demo": 0.3, "change.r_exec": 0.7}
    )
    final = workflow.run_episode(config, make_policy(config, "open_loop"), 9000, 5)
    base_ids = {o.id for o in final["base_world"].objects}
    demo_ids = {o.id for o in final["demo_world"].objects}
    exec_ids = {o.id for o in final["exec_world"].objects}
    assert exec_ids <= demo_ids <= base_ids
    assert final["demo"].change_r == pytest.approx(0.3)


def test_unchanged_worlds_are_shared(workflow, tiny_config):
    final = workflow.run_episode(tiny_config, make_policy(tiny_config, "open_loop"), 9000, 5)
    assert final["demo_world"] is final["base_world"] is final["exec_world"]


def test_worlds_and_graphs_are_cached(tiny_config):
    world = world_for_seed(9000, tiny_config.world)
    assert world_for_seed(9000, tiny_config.world) is world
    assert graph_for(world) is graph_for(world)


def test_execution_goal_is_reachable(workflow, tiny_config):
    config = tiny_config.with_overrides({"change.r_demo": 0.5, "change.r_exec": 0.0})
    final = workflow.run_episode(config, make_policy(config, "open_loop"), 9002, 8)
    world, demo = final["exec_world"], final["demo"]
    field = distance_field(world, world.cell_of(demo.goal.x, demo.goal.y))
    assert field.at_pose(demo.start) < float("inf")
