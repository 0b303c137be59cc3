import logging
import weakref
from functools import lru_cache
from typing import Any, Dict, Optional

import numpy as np
from langgraph.graph import StateGraph, END

from app.config import RunConfig, WorldSection
from app.envgen.demonstration import reverse_demonstration
from app.envgen.generator import generate_world
from app.envgen.lattice import LatticeGraph
from app.envgen.sampler import sample_demonstration
from app.eval.trials import goal_field, score_rollout
from app.graph.state import EpisodeState, MODES, TASKS
from app.policy.policies import Policy
from app.policy.rollout import run_policy
from app.sim.types import NoiseSpec
from app.sim.world import World, apply_change
from app.train.labels import label_rollout

logger = logging.getLogger(__name__)

# per-episode random streams, all derived from the episode seed
CHANGE_STREAM = 1
EXECUTE_STREAM = 2

_graphs: "weakref.WeakKeyDictionary[World, LatticeGraph]" = weakref.WeakKeyDictionary()


@lru_cache(maxsize=64)
def _cached_world(seed: int, spec_json: str) -> World:
    return generate_world(seed, WorldSection.model_validate_json(spec_json))


def world_for_seed(seed: int, spec: WorldSection) -> World:
    """Generated world for ``seed``; repeated seeds reuse the same object."""
    return _cached_world(int(seed), spec.model_dump_json())


def graph_for(world: World) -> LatticeGraph:
    """Unrestricted lattice graph of ``world``, built once per world object."""
    graph = _graphs.get(world)
    if graph is None:
        graph = LatticeGraph(world)
        _graphs[world] = graph
    return graph


def noise_spec(config: RunConfig) -> NoiseSpec:
    return NoiseSpec(level=config.sim.noise, rot_sigma=config.sim.rot_sigma, trans_sigma=config.sim.trans_sigma)


class EpisodeWorkflow:
    """Demonstrate-then-execute episode shared by training and evaluation."""

    def __init__(self):
        """Initialize the workflow graph."""
        self.graph = None
        self._build_workflow()

    def _build_workflow(self):
        """Build the LangGraph state machine workflow."""

        # Create the state graph
        workflow = StateGraph(EpisodeState)

        # Add nodes for each stage
        workflow.add_node("prepare_worlds", self._prepare_worlds)
        workflow.add_node("record_demonstration", self._record_demonstration)
        workflow.add_node("build_following_memory", self._build_following_memory)
        workflow.add_node("build_homing_memory", self._build_homing_memory)
        workflow.add_node("execute", self._execute)
        workflow.add_node("label_actions", self._label_actions)
        workflow.add_node("score_trial", self._score_trial)

        # Define entry point
        workflow.set_entry_point("prepare_worlds")

        workflow.add_conditional_edges(
            "prepare_worlds",
            self._route_on_error("record_demonstration"),
            {"record_demonstration": "record_demonstration", "error": END},
        )

        # Route by task to the memory builder
        workflow.add_conditional_edges(
            "record_demonstration",
            self._route_by_task,
            {
                "following": "build_following_memory",
                "homing": "build_homing_memory",
                "error": END,
            },
        )

        workflow.add_conditional_edges(
            "build_following_memory",
            self._route_on_error("execute"),
            {"execute": "execute", "error": END},
        )
        workflow.add_conditional_edges(
            "build_homing_memory",
            self._route_on_error("execute"),
            {"execute": "execute", "error": END},
        )

        # Training labels the visited states; evaluation scores the trial
        workflow.add_conditional_edges(
            "execute",
            self._route_by_mode,
            {
                "train": "label_actions",
                "eval": "score_trial",
                "error": END,
            },
        )

        workflow.add_edge("label_actions", END)
        workflow.add_edge("score_trial", END)

        # Compile the workflow
        self.graph = workflow.compile()

    # routing

    @staticmethod
    def _route_on_error(next_node: str):
        def route(state: EpisodeState) -> str:
            return "error" if state.get("error_message") else next_node

        return route

    def _route_by_task(self, state: EpisodeState) -> str:
        """Pick the memory builder for the episode's task."""
        if state.get("error_message"):
            return "error"
        task = state.get("task", "following")
        if task not in TASKS:
            return "error"
        return task

    def _route_by_mode(self, state: EpisodeState) -> str:
        if state.get("error_message"):
            return "error"
        mode = state.get("mode", "eval")
        return mode if mode in MODES else "error"

    # nodes

    def _prepare_worlds(self, state: EpisodeState) -> Dict[str, Any]:
        """Generate the base world and its demo-time and execution-time variants."""
        try:
            config = state["config"]
            base = world_for_seed(state["world_seed"], config.world)
            r_demo, r_exec = config.change.r_demo, config.change.r_exec
            # both variants draw the same per-object uniforms
            demo_world = base if r_demo == 0 else apply_change(base, r_demo, self._stream(state, CHANGE_STREAM))
            if r_exec == r_demo:
                exec_world = demo_world
            elif r_exec == 0:
                exec_world = base
            else:
                exec_world = apply_change(base, r_exec, self._stream(state, CHANGE_STREAM))
            return {
                "base_world": base,
                "demo_world": demo_world,
                "exec_world": exec_world,
                "nodes_visited": state.get("nodes_visited", []) + ["prepare_worlds"],
            }
        except Exception as e:
            logger.error(f"World preparation failed for seed {state.get('world_seed')}: {e}")
            return {
                "error_message": f"World preparation failed: {str(e)}",
                "nodes_visited": state.get("nodes_visited", []) + ["prepare_worlds"],
            }

    def _record_demonstration(self, state: EpisodeState) -> Dict[str, Any]:
        try:
            config = state["config"]
            demo = sample_demonstration(
                state["demo_world"],
                seed=state["episode_seed"],
                length=config.demo.length,
                min_clearance=config.demo.clearance,
                retries=config.demo.retries,
                exec_world=state["exec_world"],
                world_seed=state["world_seed"],
                change_r=config.change.r_demo,
                radius=config.sim.agent_radius,
            )
            return {
                "demo": demo,
                "nodes_visited": state.get("nodes_visited", []) + ["record_demonstration"],
            }
        except Exception as e:
            logger.warning(f"No demonstration for world {state.get('world_seed')}: {e}")
            return {
                "error_message": f"Demonstration recording failed: {str(e)}",
                "nodes_visited": state.get("nodes_visited", []) + ["record_demonstration"],
            }

    def _build_following_memory(self, state: EpisodeState) -> Dict[str, Any]:
        try:
            demo = state["demo"]
            return {
                "reference": demo,
                "memory": state["policy"].following_memory(demo),
                "nodes_visited": state.get("nodes_visited", []) + ["build_following_memory"],
            }
        except Exception as e:
            return {
                "error_message": f"Following memory failed: {str(e)}",
                "nodes_visited": state.get("nodes_visited", []) + ["build_following_memory"],
            }

    def _build_homing_memory(self, state: EpisodeState) -> Dict[str, Any]:
        """Reverse the demonstration and build memory for retracing it back to its start."""
        try:
            demo = state["demo"]
            reversed_demo = reverse_demonstration(demo, state["demo_world"])
            memory = state["policy"].homing_memory(demo, reversed_demo, state["config"].homing.memory)
            return {
                "reference": reversed_demo,
                "memory": memory,
                "nodes_visited": state.get("nodes_visited", []) + ["build_homing_memory"],
            }
        except Exception as e:
            return {
                "error_message": f"Homing memory failed: {str(e)}",
                "nodes_visited": state.get("nodes_visited", []) + ["build_homing_memory"],
            }

    def _execute(self, state: EpisodeState) -> Dict[str, Any]:
        """Run the policy in the execution world from the reference start."""
        try:
            config = state["config"]
            world = state["exec_world"]
            reference = state["reference"]
            field = goal_field(world, reference, graph=graph_for(world))
            rollout = run_policy(
                world,
                reference.start,
                state["policy"],
                state["memory"],
                noise_spec(config),
                state["horizon"],
                self._stream(state, EXECUTE_STREAM),
                greedy=state["greedy"],
                radius=config.sim.agent_radius,
            )
            return {
                "exec_field": field,
                "rollout": rollout,
                "nodes_visited": state.get("nodes_visited", []) + ["execute"],
            }
        except Exception as e:
            logger.error(f"Execution failed for episode {state.get('episode_seed')}: {e}")
            return {
                "error_message": f"Execution failed: {str(e)}",
                "nodes_visited": state.get("nodes_visited", []) + ["execute"],
            }

    def _label_actions(self, state: EpisodeState) -> Dict[str, Any]:
        """Oracle good-action sets at every state the policy acted in."""
        try:
            rollout = state["rollout"]
            labels = label_rollout(
                state["exec_world"], rollout.poses[:-1], state["exec_field"], state["config"].sim.agent_radius
            )
            return {
                "labels": labels,
                "nodes_visited": state.get("nodes_visited", []) + ["label_actions"],
            }
        except Exception as e:
            logger.warning(f"Discarding episode {state.get('episode_seed')}: {e}")
            return {
                "error_message": f"Labeling failed: {str(e)}",
                "nodes_visited": state.get("nodes_visited", []) + ["label_actions"],
            }

    def _score_trial(self, state: EpisodeState) -> Dict[str, Any]:
        trial = score_rollout(state["exec_field"], state["rollout"], state["trial_index"])
        return {
            "trial": trial,
            "error_message": trial.error,
            "nodes_visited": state.get("nodes_visited", []) + ["score_trial"],
        }

    @staticmethod
    def _stream(state: EpisodeState, stream: int) -> np.random.Generator:
        return np.random.default_rng([state["episode_seed"], stream])

    def run_episode(
        self,
        config: RunConfig,
        policy: Policy,
        world_seed: int,
        episode_seed: int,
        mode: str = "eval",
        trial_index: int = -1,
        greedy: Optional[bool] = None,
        horizon: Optional[int] = None,
        task: Optional[str] = None,
    ) -> EpisodeState:
        """Run one episode through the complete workflow.

        Training episodes sample actions from the policy and end with labels;
        evaluation episodes act greedily and end with a scored trial.
        """
        initial_state: EpisodeState = {
            "config": config,
            "policy": policy,
            "mode": mode,
            "task": task or config.task,
            "world_seed": int(world_seed),
            "episode_seed": int(episode_seed),
            "trial_index": trial_index,
            "greedy": (mode != "train") if greedy is None else greedy,
            "horizon": horizon or config.eval.horizon,
            "base_world": None,
            "demo_world": None,
            "exec_world": None,
            "demo": None,
            "reference": None,
            "memory": None,
            "exec_field": None,
            "rollout": None,
            "labels": [],
            "trial": None,
            "nodes_visited": [],
            "error_message": None,
        }

        # Run the workflow
        try:
            return self.graph.invoke(initial_state)
        except Exception as e:
            logger.error(f"Episode workflow failed: {e}")
            return {
                **initial_state,
                "error_message": f"Workflow error: {str(e)}",
                "nodes_visited": ["error_handler"],
            }


# Global workflow instance
workflow = EpisodeWorkflow()


def get_workflow() -> EpisodeWorkflow:
    """Get the global workflow instance."""
    return workflow
