"""Articulation discovery: visit handles, pull along estimated normals under
unknown kinematics, detect failures, reposition, and emit pre/post
observation pairs for the estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import (GraspFailureError, InvalidViewpointError, NoActionError,
                     RepositionFailedError)
from .geometry import (DegenerateGeometryError, cloud_displacement,
                       consensus_plane_normal, erode_isolated, plane_normal,
                       unit)
from .scene import KinematicScene, RobotState, SceneState, handle_at
from .sim import (GRASP_TOLERANCE, Observation, OccupancyGrid, SimConfig,
                  arm_blocked, attempt_pull, nav_grid, render_observation)

REVOLUTE_LEFT = "revolute-left"
REVOLUTE_RIGHT = "revolute-right"
PRISMATIC_KIND = "prismatic"
UNKNOWN = "unknown"

# minimum nearest-neighbor displacement for a point to count as moved
DISPLACED_TAU = 0.02


@dataclass(frozen=True)
class ExplorationConfig:
    max_steps: int = 25                 # micro-interactions per attempt
    failure_threshold: float = 0.02     # chamfer displacement, meters
    reposition_distance: float = 0.30   # base-to-hotspot distance after a failure
    retreat_distance: float = 0.50      # backoff before the post observation
    max_attempts: int = 3
    rotation_classify_threshold: float = math.radians(5.0)
    approach_distance: float = 0.55     # initial stand-off in front of a handle
    observation_radius: float = 0.30    # crop radius around the interaction site
    local_radius: float = 0.15          # compliance-normal neighborhood
    min_local_points: int = 20
    grace_steps: int = 12               # pulls before the displacement check applies
    stall_break: int = 6                # consecutive no-advance pulls ending an attempt
    robot_radius: float = 0.30
    grid_resolution: float = 0.05

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        for name in ("max_steps", "failure_threshold", "reposition_distance",
                     "retreat_distance", "rotation_classify_threshold",
                     "approach_distance", "observation_radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Handle:
    label: str
    position: np.ndarray


@dataclass
class ExplorationRecord:
    part_id: str
    pre: Observation | None
    post: Observation | None
    attempts_used: int
    classified_kind: str
    succeeded: bool
    failure_stage: str | None = None  # navigation | manipulation, when failed
    displacement: float = 0.0


@dataclass
class ExplorationResult:
    records: list
    events: list
    final_state: SceneState


def compliance_action(obs: Observation, grasp) -> np.ndarray:
    """Pull direction from the local surface normal around the grasp.

    Fits a plane to the points within the compliance neighborhood and returns
    its normal oriented toward the viewpoint (outward). For both drawer fronts
    and door faces this is the direction the part can move.
    """
    return _compliance_action(obs, grasp, 0.15, 20)


def _compliance_action(obs: Observation, grasp, radius: float, min_points: int) -> np.ndarray:
    g = np.asarray(grasp, dtype=float).reshape(3)
    d2 = np.sum((obs.cloud.points - g) ** 2, axis=1)
    neigh = obs.cloud.points[d2 <= radius * radius]
    if neigh.shape[0] < min_points:
        raise NoActionError(
            f"only {neigh.shape[0]} points within {radius} m of the grasp")
    try:
        return consensus_plane_normal(neigh, viewpoint=obs.viewpoint,
                                      min_points=max(min_points // 2, 3))
    except DegenerateGeometryError as e:
        raise NoActionError(str(e)) from e


def detect_failure(pre: Observation, current: Observation, threshold: float) -> bool:
    """Failure iff the clouds moved less than the threshold (strict)."""
    return cloud_displacement(pre.cloud, current.cloud) < threshold


def _displaced_subset(a: Observation, b: Observation, tau: float) -> np.ndarray:
    """Points of a that moved relative to b, eroded to drop isolated flicker
    (dropout re-sampling and crop-boundary noise)."""
    pts = a.cloud.points
    d, _ = cKDTree(b.cloud.points).query(pts)
    return pts[erode_isolated(pts, d > tau)]


def classify_joint(pre: Observation, current: Observation,
                   threshold: float = math.radians(5.0)) -> str:
    """Joint type from the rotation between displaced-subset plane normals.

    Counterclockwise rotation seen from above (about world +z) is 'left'.
    Returns 'unknown' when either displaced subset is too small or degenerate.
    """
    moved_pre = _displaced_subset(pre, current, DISPLACED_TAU)
    moved_cur = _displaced_subset(current, pre, DISPLACED_TAU)
    if moved_pre.shape[0] < 3 or moved_cur.shape[0] < 3:
        return UNKNOWN
    try:
        n_pre = plane_normal(moved_pre, viewpoint=pre.viewpoint)
        n_cur = plane_normal(moved_cur, viewpoint=current.viewpoint)
    except DegenerateGeometryError:
        return UNKNOWN
    angle = math.acos(float(np.clip(n_pre @ n_cur, -1.0, 1.0)))
    if angle <= threshold:
        return PRISMATIC_KIND
    side = float(np.cross(n_pre, n_cur)[2])
    return REVOLUTE_LEFT if side >= 0.0 else REVOLUTE_RIGHT


def reposition_base(kind: str, hotspot, robot: RobotState, distance: float,
                    grid: OccupancyGrid, snap_radius: float = 0.5) -> tuple:
    """New base pose after a failed attempt.

    Revolute: step diagonally back and to the side the handle is heading
    toward (the rotation side). Prismatic: retreat straight back from the
    hotspot. The pose snaps to the nearest free grid cell.
    """
    h = np.asarray(hotspot, dtype=float).reshape(3)
    bx, by, _ = robot.base_pose
    f = unit(np.array([h[0] - bx, h[1] - by]))
    back = -f
    if kind == REVOLUTE_LEFT:
        lateral = np.array([-back[1], back[0]])  # 90 degrees counterclockwise of back
        direction = unit(back + lateral)
    elif kind == REVOLUTE_RIGHT:
        lateral = np.array([back[1], -back[0]])
        direction = unit(back + lateral)
    elif kind in (PRISMATIC_KIND, UNKNOWN):
        direction = back
    else:
        raise ValueError(f"unknown joint kind {kind!r}")
    target = h[:2] + direction * distance
    if not grid.is_free(target):
        snapped = grid.nearest_free(target, snap_radius)
        if snapped is None:
            raise RepositionFailedError(
                f"no free cell within {snap_radius} m of the reposition target")
        target = snapped
    heading = math.atan2(h[1] - target[1], h[0] - target[0])
    return (float(target[0]), float(target[1]), heading)


def resolve_grasped_part(scene: KinematicScene, state: SceneState, point) -> str | None:
    """Part whose current handle is close enough to grasp at the given point."""
    p = np.asarray(point, dtype=float).reshape(3)
    best = None
    best_d = GRASP_TOLERANCE
    for part in scene.parts:
        d = float(np.linalg.norm(handle_at(part, state.theta(part.id)) - p))
        if d <= best_d:
            best = part.id
            best_d = d
    return best


def _outward_normal_xy(box, point) -> np.ndarray | None:
    """Horizontal outward normal of the box face nearest to a surface point."""
    local = box.orientation.T @ (np.asarray(point, dtype=float) - box.center)
    slack = box.half_extents - np.abs(local)
    i = int(np.argmin(slack))
    normal = np.sign(local[i]) * box.orientation[:, i] if local[i] != 0 \
        else box.orientation[:, i]
    xy = normal[:2]
    n = np.linalg.norm(xy)
    return xy / n if n > 1e-6 else None


def _approach_pose(scene: KinematicScene, grid: OccupancyGrid, hotspot,
                   distance: float):
    """Stand in front of the handle: offset along the nearest face normal."""
    h = np.asarray(hotspot, dtype=float).reshape(3)
    boxes = list(scene.base.obstacles) + [p.shape for p in scene.parts]
    out = None
    if boxes:
        nearest = min(boxes, key=lambda b: b.distance_to_point(h))
        out = _outward_normal_xy(nearest, h)
    if out is None:
        out = np.array([0.0, -1.0])
    target = h[:2] + out * distance
    if not grid.is_free(target):
        snapped = grid.nearest_free(target, 1.0)
        if snapped is None:
            return None
        target = snapped
    heading = math.atan2(h[1] - target[1], h[0] - target[0])
    return (float(target[0]), float(target[1]), heading)


class _EventLog:
    """Deterministic exploration log; time is a step counter, not wall clock."""

    def __init__(self):
        self.t = 0
        self.events: list = []

    def add(self, event: str, **fields):
        entry = {"t": self.t, "event": event}
        entry.update(fields)
        self.events.append(entry)
        self.t += 1


def explore_scene(scene: KinematicScene, sim_config: SimConfig,
                  config: ExplorationConfig | None = None, handles=None,
                  robot: RobotState | None = None,
                  rng: np.random.Generator | None = None) -> ExplorationResult:
    """Run the discovery stage over every handle and collect observation pairs.

    Per handle: stand in front of it, take a pre observation, pull along the
    estimated surface normal up to max_steps times, reposition and retry on
    detected failures (up to max_attempts), then retreat and take the post
    observation. Joint parameters are never touched, only joint states.
    """
    config = config or ExplorationConfig()
    robot = robot or RobotState()
    rng = rng or np.random.default_rng(sim_config.rng_seed)
    if handles is None:
        handles = [Handle(p.id, p.handle) for p in scene.parts]
    state = scene.initial_state()
    log = _EventLog()
    records = []

    for hd in handles:
        record, state = _explore_handle(scene, state, hd, sim_config, config,
                                        robot, rng, log)
        records.append(record)

    return ExplorationResult(records, log.events, state)


def _observe(scene, state, viewpoint, hotspot, center, sim_config, config, rng):
    """Observation cropped around a fixed interaction-site center.

    Keeping one crop center per handle means the static content of successive
    observations coincides, so apparent displacement comes from real motion
    only. Returns None when the region is empty (e.g. a handle annotated in
    free space) or otherwise unobservable."""
    try:
        full = render_observation(scene, state, viewpoint, sim_config, rng,
                                  hotspot=hotspot)
        return full.cropped(config.observation_radius, center=center)
    except (ValueError, InvalidViewpointError):
        return None


def _pose_to_list(pose) -> list:
    return [round(float(v), 6) for v in pose]


def _explore_handle(scene, state, hd: Handle, sim_config, config, robot, rng, log):
    grid = nav_grid(scene, state, config.grid_resolution, config.robot_radius)
    part_id = resolve_grasped_part(scene, state, hd.position)
    hotspot0 = (handle_at(scene.part(part_id), state.theta(part_id))
                if part_id else np.asarray(hd.position, dtype=float))

    pose = _approach_pose(scene, grid, hotspot0, config.approach_distance)
    if pose is None:
        log.add("navigate-failed", handle=hd.label)
        return ExplorationRecord(hd.label, None, None, 0, UNKNOWN, False,
                                 failure_stage="navigation"), state
    log.add("navigate", handle=hd.label, base=_pose_to_list(pose))
    log.add("grasp", handle=hd.label, part=part_id,
            hotspot=[round(float(v), 6) for v in hotspot0])
    robot = robot.at(pose)
    viewpoint = np.array([pose[0], pose[1], sim_config.eye_height])

    site = hotspot0.copy()
    pre = _observe(scene, state, viewpoint, hotspot0, site, sim_config, config, rng)
    log.add("observe", handle=hd.label, phase="pre",
            points=len(pre.cloud) if pre else 0)

    classified = UNKNOWN
    attempts = 0
    failed_out = False
    while True:
        attempts += 1
        attempt_pre = _observe(scene, state, viewpoint,
                               _current_hotspot(scene, state, part_id, hd),
                               site, sim_config, config, rng)
        if attempt_pre is None:
            outcome = "failed"
            log.add("observe-failed", handle=hd.label, attempt=attempts)
        else:
            state, outcome, classified = _run_attempt(
                scene, state, hd, part_id, attempt_pre, pre, site, robot,
                viewpoint, sim_config, config, rng, log, classified)
        if outcome == "completed":
            break
        if attempts >= config.max_attempts:
            failed_out = True
            log.add("attempts-exhausted", handle=hd.label, attempts=attempts)
            break
        # reposition and retry
        grid = nav_grid(scene, state, config.grid_resolution, config.robot_radius)
        hotspot = _current_hotspot(scene, state, part_id, hd)
        try:
            pose = reposition_base(classified, hotspot, robot,
                                   config.reposition_distance, grid)
        except RepositionFailedError:
            log.add("reposition-failed", handle=hd.label)
            failed_out = True
            attempts = config.max_attempts
            break
        log.add("reposition", handle=hd.label, kind=classified, base=_pose_to_list(pose))
        robot = robot.at(pose)
        viewpoint = np.array([pose[0], pose[1], sim_config.eye_height])

    # retreat, then the post observation
    hotspot = _current_hotspot(scene, state, part_id, hd)
    bx, by, heading = robot.base_pose
    away = np.array([bx - hotspot[0], by - hotspot[1]])
    n = np.linalg.norm(away)
    away = away / n if n > 1e-9 else np.array([0.0, -1.0])
    grid = nav_grid(scene, state, config.grid_resolution, config.robot_radius)
    target = np.array([bx, by]) + away * config.retreat_distance
    if not grid.is_free(target):
        snapped = grid.nearest_free(target, 1.0)
        target = snapped if snapped is not None else np.array([bx, by])
    viewpoint = np.array([target[0], target[1], sim_config.eye_height])
    log.add("retreat", handle=hd.label, base=_pose_to_list((target[0], target[1], heading)))
    post = _observe(scene, state, viewpoint, hotspot, site, sim_config, config, rng)
    log.add("observe", handle=hd.label, phase="post",
            points=len(post.cloud) if post else 0)

    if pre is not None and post is not None:
        displacement = cloud_displacement(pre.cloud, post.cloud)
        final_kind = classify_joint(pre, post, config.rotation_classify_threshold)
        if final_kind == UNKNOWN:
            final_kind = classified
    else:
        displacement = 0.0
        final_kind = classified
    succeeded = (not failed_out) and displacement >= config.failure_threshold
    record = ExplorationRecord(
        part_id=hd.label, pre=pre, post=post, attempts_used=attempts,
        classified_kind=final_kind, succeeded=succeeded,
        failure_stage=None if succeeded else "manipulation",
        displacement=float(displacement))
    log.add("record", handle=hd.label, succeeded=succeeded, kind=final_kind,
            displacement=round(float(displacement), 6), attempts=attempts)
    return record, state


def _current_hotspot(scene, state, part_id, hd: Handle):
    if part_id:
        return handle_at(scene.part(part_id), state.theta(part_id))
    return np.asarray(hd.position, dtype=float)


def _run_attempt(scene, state, hd, part_id, attempt_pre, first_pre, site, robot,
                 viewpoint, sim_config, config, rng, log, classified):
    """One attempt: up to max_steps micro-interactions.

    Returns (state, outcome, classified) with outcome 'completed' or 'failed'.
    """
    no_advance = 0
    for i in range(1, config.max_steps + 1):
        hotspot = _current_hotspot(scene, state, part_id, hd)
        obs = _observe(scene, state, viewpoint, hotspot, site, sim_config,
                       config, rng)
        if obs is None:
            log.add("observe-failed", handle=hd.label, step=i)
            return state, "failed", classified

        stalled = no_advance >= config.stall_break
        check_failure = i > config.grace_steps or stalled
        if check_failure and detect_failure(attempt_pre, obs, config.failure_threshold):
            classified = _maybe_classify(first_pre, obs, config, classified)
            log.add("failure", handle=hd.label, step=i, kind=classified)
            return state, "failed", classified
        if stalled:
            # arm made progress earlier but cannot advance further: done here
            log.add("stall", handle=hd.label, step=i)
            classified = _maybe_classify(first_pre, obs, config, classified)
            return state, "completed", classified

        advanced = 0.0
        try:
            direction = _compliance_action(obs, hotspot, config.local_radius,
                                           config.min_local_points)
            blocked = None
            if part_id:
                blocked = arm_blocked(scene, state, part_id, hotspot, robot,
                                      config.robot_radius)
            if blocked:
                log.add("pull-blocked", handle=hd.label, step=i, reason=blocked)
            elif part_id is None:
                raise GraspFailureError("no part at the annotated handle")
            else:
                result = attempt_pull(scene, state, part_id, hotspot, direction,
                                      sim_config)
                state = result.state
                advanced = result.advanced
                log.add("pull", handle=hd.label, step=i,
                        advanced=round(float(advanced), 9), slipped=result.slipped)
        except (NoActionError, GraspFailureError) as e:
            log.add("pull-failed", handle=hd.label, step=i, reason=type(e).__name__)

        no_advance = 0 if abs(advanced) > 1e-12 else no_advance + 1

    # ran the full budget without a detected failure
    hotspot = _current_hotspot(scene, state, part_id, hd)
    obs = _observe(scene, state, viewpoint, hotspot, site, sim_config, config, rng)
    if obs is None:
        log.add("observe-failed", handle=hd.label, step=config.max_steps)
        return state, "failed", classified
    if detect_failure(attempt_pre, obs, config.failure_threshold):
        classified = _maybe_classify(first_pre, obs, config, classified)
        log.add("failure", handle=hd.label, step=config.max_steps, kind=classified)
        return state, "failed", classified
    classified = _maybe_classify(first_pre, obs, config, classified)
    return state, "completed", classified


def _maybe_classify(first_pre, obs, config, fallback):
    kind = classify_joint(first_pre, obs, config.rotation_classify_threshold)
    return kind if kind != UNKNOWN else fallback
