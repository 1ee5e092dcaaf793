"""Scene-level manipulation planning: trajectory synthesis, swept-volume and
path feasibility, base placement, and interaction-order search."""

from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import NoBaseFoundError
from .geometry import as_vec3, obb_intersects
from .scene import (REVOLUTE, JointModel, KinematicScene, MobilePart, RobotState,
                    SceneState, handle_at, part_shape_at, rodrigues_rotation)
from .sim import OccupancyGrid, nav_grid


@dataclass(frozen=True)
class EndEffectorTrajectory:
    """K+1 evenly sampled end-effector positions actuating one joint."""

    part_id: str
    waypoints: np.ndarray  # (K+1, 3)
    goal_delta: float
    K: int

    def __post_init__(self):
        w = np.asarray(self.waypoints, dtype=float).reshape(-1, 3)
        if w.shape[0] != self.K + 1:
            raise ValueError("waypoint count must be K+1")
        object.__setattr__(self, "waypoints", w)

    def centroid(self) -> np.ndarray:
        return self.waypoints.mean(axis=0)


def revolute_trajectory(p, joint: JointModel, g_r: float, K: int) -> EndEffectorTrajectory:
    """Waypoints R(i g_r / K)(p - q) + q for i in 0..K about the joint axis."""
    if joint.kind != REVOLUTE:
        raise ValueError("joint must be revolute")
    if K < 1:
        raise ValueError("K must be >= 1")
    _check_goal(joint, g_r)
    p = as_vec3(p)
    rel = p - joint.pivot
    wps = [rodrigues_rotation(joint.axis, i * g_r / K) @ rel + joint.pivot
           for i in range(K + 1)]
    return EndEffectorTrajectory("", np.asarray(wps), g_r, K)


def prismatic_trajectory(p, joint: JointModel, g_p: float, K: int) -> EndEffectorTrajectory:
    """Waypoints p + (i/K) g_p u for i in 0..K along the joint axis."""
    if joint.kind == REVOLUTE:
        raise ValueError("joint must be prismatic")
    if K < 1:
        raise ValueError("K must be >= 1")
    _check_goal(joint, g_p)
    p = as_vec3(p)
    wps = [p + (i / K) * g_p * joint.axis for i in range(K + 1)]
    return EndEffectorTrajectory("", np.asarray(wps), g_p, K)


def _check_goal(joint: JointModel, g: float) -> None:
    if not (joint.limit_min - 1e-9 <= g <= joint.limit_max + 1e-9):
        from .errors import LimitViolationError

        raise LimitViolationError(
            f"goal {g} outside joint limits [{joint.limit_min}, {joint.limit_max}]")


def part_trajectory(part: MobilePart, theta_start: float, theta_goal: float,
                    K: int) -> EndEffectorTrajectory:
    """Trajectory of the handle from its pose at theta_start to theta_goal."""
    p = handle_at(part, theta_start)
    delta = theta_goal - theta_start
    if part.joint.kind == REVOLUTE:
        shifted = JointModel(REVOLUTE, part.joint.axis, part.joint.pivot,
                             part.joint.limit_min - theta_start,
                             part.joint.limit_max - theta_start, 0.0)
        traj = revolute_trajectory(p, shifted, delta, K)
    else:
        shifted = JointModel(part.joint.kind, part.joint.axis, None,
                             part.joint.limit_min - theta_start,
                             part.joint.limit_max - theta_start, 0.0)
        traj = prismatic_trajectory(p, shifted, delta, K)
    return EndEffectorTrajectory(part.id, traj.waypoints, delta, K)


def sample_part_sweep(part: MobilePart, n_configs: int = 6) -> list:
    """Part boxes at n_configs states interpolated from zero to the maximum."""
    if n_configs < 2:
        raise ValueError("n_configs must be >= 2")
    theta_max = part.joint.max_state()
    return [part_shape_at(part, j * theta_max / (n_configs - 1))
            for j in range(n_configs)]


def check_part_collision(candidate_sweep, environment, margin: float = 0.02):
    """First (sweep, environment) box pair that overlaps, or (False, None)."""
    for i, a in enumerate(candidate_sweep):
        for j, b in enumerate(environment):
            if obb_intersects(a, b, margin):
                return True, (i, j)
    return False, None


def check_path(grid: OccupancyGrid, from_pose, to_pose) -> bool:
    """Breadth-first connectivity between two poses on the inflated grid."""
    if np.allclose(np.asarray(from_pose[:2], dtype=float),
                   np.asarray(to_pose[:2], dtype=float)):
        return grid.is_free(from_pose[:2])
    start = grid.cell_of(from_pose[:2])
    goal = grid.cell_of(to_pose[:2])
    for ix, iy in (start, goal):
        if not grid.in_grid(ix, iy) or grid.occupied[iy, ix]:
            return False
    ny, nx = grid.occupied.shape
    seen = np.zeros((ny, nx), dtype=bool)
    seen[start[1], start[0]] = True
    queue = deque([start])
    while queue:
        cx, cy = queue.popleft()
        if (cx, cy) == goal:
            return True
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            jx, jy = cx + dx, cy + dy
            if 0 <= jx < nx and 0 <= jy < ny and not seen[jy, jx] \
                    and not grid.occupied[jy, jx]:
                seen[jy, jx] = True
                queue.append((jx, jy))
    return False


def select_base(trajectory: EndEffectorTrajectory, scene: KinematicScene,
                grid: OccupancyGrid, arm: RobotState, n_samples: int = 200,
                sample_range: float = 1.2,
                rng: np.random.Generator | None = None):
    """Sampled base pose reaching the most trajectory waypoints.

    Draws collision-free poses uniformly in the disc around the trajectory
    centroid, scores each by waypoints inside the reach annulus and height
    band, and returns the argmax (ties: nearest the centroid, then lowest
    sample index). Raises NoBaseFoundError when no valid sample appears.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = rng or np.random.default_rng(0)
    centroid = trajectory.centroid()
    cxy = centroid[:2]
    best = None  # (-score, distance, index, pose)
    valid = 0
    draws = 0
    while valid < n_samples and draws < 20 * n_samples:
        draws += 1
        r = sample_range * math.sqrt(rng.random())
        phi = rng.random() * 2.0 * math.pi
        xy = cxy + r * np.array([math.cos(phi), math.sin(phi)])
        if not scene.base.in_bounds(xy) or not grid.is_free(xy):
            continue
        heading = math.atan2(cxy[1] - xy[1], cxy[0] - xy[0])
        pose = (float(xy[0]), float(xy[1]), heading)
        candidate = arm.at(pose)
        score = sum(1 for w in trajectory.waypoints if candidate.can_reach(w))
        key = (-score, float(np.linalg.norm(xy - cxy)), valid)
        if best is None or key < best[0]:
            best = (key, pose, score)
        valid += 1
    if best is None:
        raise NoBaseFoundError("no collision-free base sample in range")
    return best[1], best[2]


@dataclass(frozen=True)
class PlannerConfig:
    K: int = 10
    n_configs: int = 6
    n_samples: int = 200
    sample_range: float = 1.2
    margin: float = 0.02
    standing_margin: float = 0.05  # extra sweep clearance for base placement
    resolution: float = 0.05
    robot_radius: float = 0.30
    max_candidates: int = 120
    seed: int = 0


@dataclass
class PlanStep:
    part_id: str
    goal: float
    base_pose: tuple
    trajectory: EndEffectorTrajectory
    reach_count: int


@dataclass
class InteractionPlan:
    feasible: bool
    steps: list
    diagnostics: list = field(default_factory=list)

    def order(self) -> list:
        return [s.part_id for s in self.steps]


def _environment_boxes(scene: KinematicScene, committed: dict, active_id: str,
                       margin: float = 0.02) -> list:
    """Collision environment for one part's sweep: the base obstacles except
    the cabinet the part is mounted on (its closed shape touches it), plus
    every other part at its committed state."""
    closed = scene.part(active_id).shape
    boxes = [b for b in scene.base.obstacles if not obb_intersects(b, closed, margin)]
    for part in scene.parts:
        if part.id != active_id:
            boxes.append(part_shape_at(part, committed[part.id]))
    return boxes


def evaluate_candidate_order(scene: KinematicScene, state: SceneState,
                             robot: RobotState, order, goal: dict,
                             config: PlannerConfig, candidate_idx: int = 0):
    """Simulate committing the order step by step.

    Per step: the part's sweep is collision-checked against the committed
    environment, a base is selected clear of the sweep, and the travel from
    the previous base is path-checked on the pre-step grid. Returns
    (steps, None) on success or (None, diagnostic dict) on the first rejection.
    """
    committed = dict(state.joint_states)
    prev_pose = robot.base_pose
    steps = []
    for step_idx, part_id in enumerate(order):
        part = scene.part(part_id)
        theta_start = committed[part_id]
        theta_goal = goal[part_id]
        if theta_goal <= theta_start + 1e-12:
            continue
        sweep = sample_part_sweep(part, config.n_configs)
        env = _environment_boxes(scene, committed, part_id, config.margin)
        hit, pair = check_part_collision(sweep, env, config.margin)
        if hit:
            return None, {"order": list(order), "step": part_id,
                          "reason": "part-collision",
                          "sweep_config": pair[0], "environment_box": pair[1]}
        committed_state = SceneState(committed)
        travel_grid = nav_grid(scene, committed_state, config.resolution,
                               config.robot_radius)
        standing = [b.inflated(config.standing_margin) for b in sweep]
        standing_grid = nav_grid(scene, committed_state, config.resolution,
                                 config.robot_radius, extra_boxes=standing)
        trajectory = part_trajectory(part, theta_start, theta_goal, config.K)
        rng = np.random.default_rng([config.seed, candidate_idx, step_idx])
        try:
            base_pose, reach = select_base(trajectory, scene, standing_grid, robot,
                                           config.n_samples, config.sample_range, rng)
        except NoBaseFoundError:
            return None, {"order": list(order), "step": part_id,
                          "reason": "unreachable"}
        if not check_path(travel_grid, prev_pose, base_pose):
            return None, {"order": list(order), "step": part_id,
                          "reason": "path-blocked",
                          "from": list(prev_pose[:2]), "to": list(base_pose[:2])}
        steps.append(PlanStep(part_id, theta_goal, base_pose, trajectory, reach))
        committed[part_id] = theta_goal
        prev_pose = base_pose
    return steps, None


def _candidate_orders(part_ids, config: PlannerConfig,
                      rng: np.random.Generator):
    ids = sorted(part_ids)
    if len(ids) <= 6:
        yield from itertools.permutations(ids)
        return
    seen = set()
    for _ in range(config.max_candidates):
        order = tuple(rng.permutation(ids).tolist())
        if order not in seen:
            seen.add(order)
            yield order


def plan_scene(scene: KinematicScene, state: SceneState, robot: RobotState,
               goal: dict, config: PlannerConfig | None = None) -> InteractionPlan:
    """Search interaction orders and return the first fully feasible plan.

    Orderings are exhaustive for up to 6 goal parts, sampled otherwise.
    Infeasibility is a result (feasible=False with per-candidate diagnostics),
    not an error.
    """
    config = config or PlannerConfig()
    for part_id in goal:
        scene.part(part_id)  # raises UnknownPartError
    rng = np.random.default_rng([config.seed, 0xC0FFEE])
    diagnostics = []
    for idx, order in enumerate(_candidate_orders(goal.keys(), config, rng)):
        steps, rejection = evaluate_candidate_order(scene, state, robot, order,
                                                    goal, config, idx)
        if rejection is None:
            return InteractionPlan(True, steps, diagnostics)
        diagnostics.append(rejection)
    return InteractionPlan(False, [], diagnostics)


def validate_plan(scene: KinematicScene, state: SceneState, robot: RobotState,
                  plan: InteractionPlan, config: PlannerConfig | None = None) -> bool:
    """Re-run collision and path checks from scratch against a finished plan."""
    config = config or PlannerConfig()
    committed = dict(state.joint_states)
    prev_pose = robot.base_pose
    for step in plan.steps:
        part = scene.part(step.part_id)
        sweep = sample_part_sweep(part, config.n_configs)
        env = _environment_boxes(scene, committed, step.part_id, config.margin)
        hit, _ = check_part_collision(sweep, env, config.margin)
        if hit:
            return False
        committed_state = SceneState(committed)
        travel_grid = nav_grid(scene, committed_state, config.resolution,
                               config.robot_radius)
        standing = [b.inflated(config.standing_margin) for b in sweep]
        standing_grid = nav_grid(scene, committed_state, config.resolution,
                                 config.robot_radius, extra_boxes=standing)
        if not standing_grid.is_free(step.base_pose[:2]):
            return False
        arm = robot.at(step.base_pose)
        recount = sum(1 for w in step.trajectory.waypoints if arm.can_reach(w))
        if recount != step.reach_count:
            return False
        if not check_path(travel_grid, prev_pose, step.base_pose):
            return False
        committed[step.part_id] = step.goal
        prev_pose = step.base_pose
    return True


# --- plan serialization ------------------------------------------------------

def _sig9(x: float) -> float:
    return float(f"{float(x):.9g}")


def plan_to_json(plan: InteractionPlan, scene: KinematicScene) -> dict:
    steps = []
    for s in plan.steps:
        kind = scene.part(s.part_id).joint.kind
        goal_field = ("goal_deg", _sig9(math.degrees(s.goal))) if kind == REVOLUTE \
            else ("goal_m", _sig9(s.goal))
        steps.append({
            "part_id": s.part_id,
            goal_field[0]: goal_field[1],
            "base_pose": {"x": _sig9(s.base_pose[0]), "y": _sig9(s.base_pose[1]),
                          "heading_deg": _sig9(math.degrees(s.base_pose[2]))},
            "waypoints": [[_sig9(v) for v in w] for w in s.trajectory.waypoints],
            "reach_count": s.reach_count,
        })
    return {"feasible": plan.feasible, "steps": steps,
            "diagnostics": plan.diagnostics}


def write_plan(plan: InteractionPlan, scene: KinematicScene, path) -> None:
    with open(path, "w") as f:
        json.dump(plan_to_json(plan, scene), f, indent=2)
        f.write("\n")
