import math

import pytest

from artiscene.execution import execute_plan, opening_degree
from artiscene.fixtures import kitchen, kitchen_goal, minimal_drawer
from artiscene.planner import PlannerConfig, plan_scene
from artiscene.scene import RobotState
from artiscene.sim import SimConfig


def noiseless():
    return SimConfig(noise_sigma=0.0, dropout_prob=0.0, rng_seed=0)


def test_opening_degree_ratio():
    scene, _ = minimal_drawer()
    assert opening_degree(scene, "drawer_1", 0.15) == pytest.approx(1.0)
    assert opening_degree(scene, "drawer_1", 0.075) == pytest.approx(0.5)


def test_execute_drawer_to_goal():
    scene, _ = minimal_drawer()
    robot = RobotState(base_pose=(1.5, 1.0, math.pi / 2))
    state = scene.initial_state()
    plan = plan_scene(scene, state, robot, {"drawer_1": 0.15}, PlannerConfig(seed=0))
    assert plan.feasible
    result = execute_plan(scene, state, plan, scene, noiseless(), robot)
    out = result.outcomes[0]
    assert out.completed
    assert out.opening_degree == pytest.approx(1.0, abs=1e-9)
    assert result.final_state.theta("drawer_1") == pytest.approx(0.15, abs=1e-9)


def test_execute_kitchen_goal_with_true_model():
    # executing against the ground-truth model is the oracle upper bound
    scene, _ = kitchen()
    robot = RobotState(base_pose=(3.0, 1.2, math.pi / 2))
    goal = {}
    for pid, v in kitchen_goal().items():
        part = scene.part(pid)
        goal[pid] = math.radians(v) if part.joint.kind == "revolute" else v
    state = scene.initial_state()
    plan = plan_scene(scene, state, robot, goal, PlannerConfig(seed=0))
    assert plan.feasible
    result = execute_plan(scene, state, plan, scene, noiseless(), robot)
    for out in result.outcomes:
        assert out.opening_degree >= 0.99, out


def test_execution_respects_joint_limits():
    scene, _ = minimal_drawer()
    robot = RobotState(base_pose=(1.5, 1.0, math.pi / 2))
    state = scene.initial_state()
    plan = plan_scene(scene, state, robot, {"drawer_1": 0.15}, PlannerConfig(seed=1))
    result = execute_plan(scene, state, plan, scene, noiseless(), robot)
    part = scene.part("drawer_1")
    assert result.final_state.theta("drawer_1") <= part.joint.limit_max + 1e-12
