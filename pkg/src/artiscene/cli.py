"""Command-line front end: explore, estimate, plan, and the full pipeline.

Exit codes: 0 success (including an infeasible plan, which is a valid answer),
1 usage errors, 2 scene/goal validation errors, 3 runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .errors import (ArtisceneError, SceneFormatError, SceneValidationError,
                     UnknownPartError)
from .estimation import (articulation_errors, build_estimated_scene,
                         estimate_record, estimated_part, register_to_scene)
from .execution import execute_plan, opening_degree
from .exploration import ExplorationConfig, explore_scene
from .geometry import PointCloud, load_xyz, save_xyz
from .planner import PlannerConfig, plan_scene, write_plan
from .scene import (REVOLUTE, KinematicScene, RobotState, load_scene,
                    load_scene_extras, save_scene)
from .sim import Observation, SimConfig, sample_scene_surfaces

EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _prepare_out(path: str, force: bool) -> Path | None:
    out = Path(path)
    if out.exists() and any(out.iterdir()) and not force:
        return None
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_overrides(arg: str | None) -> dict:
    if not arg:
        return {}
    text = arg if arg.lstrip().startswith("{") else Path(arg).read_text()
    return json.loads(text)


def _dataclass_with(cls, base, overrides: dict):
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - fields
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return dataclasses.replace(base, **overrides)


def _build_configs(scene_path, args):
    """Merge scene-file extras, --config overrides and direct flags."""
    extras = load_scene_extras(scene_path)
    overrides = _load_overrides(getattr(args, "config", None))
    sim_kwargs = dict(extras.get("sim", {}))
    sim_kwargs.update(overrides.get("sim", {}))
    sim_kwargs["rng_seed"] = args.seed
    if getattr(args, "noise_sigma", None) is not None:
        sim_kwargs["noise_sigma"] = args.noise_sigma
    sim = SimConfig(**sim_kwargs)

    expl = _dataclass_with(ExplorationConfig, ExplorationConfig(),
                           overrides.get("exploration", {}))

    planner_kwargs = dict(overrides.get("planner", {}))
    planner_kwargs["seed"] = args.seed
    if getattr(args, "max_candidates", None) is not None:
        planner_kwargs["max_candidates"] = args.max_candidates
    planner = _dataclass_with(PlannerConfig, PlannerConfig(), planner_kwargs)

    robot_kwargs = dict(extras.get("robot", {}))
    robot_kwargs.update(overrides.get("robot", {}))
    start = robot_kwargs.pop("start", None)
    robot = _dataclass_with(RobotState, RobotState(), robot_kwargs)
    if start is not None:
        robot = robot.at((start[0], start[1], math.radians(start[2])))
    return sim, expl, planner, robot


def _load_goal(scene: KinematicScene, path: str) -> dict:
    """Goal file maps part id -> threshold (degrees for revolute, meters else)."""
    with open(path) as f:
        raw = json.load(f)
    goal = {}
    for part_id, value in raw.items():
        part = scene.part(part_id)  # raises UnknownPartError
        goal[part_id] = math.radians(float(value)) if part.joint.kind == REVOLUTE \
            else float(value)
    return goal


# --- explore -----------------------------------------------------------------

def _base_map_cloud(scene: KinematicScene, sim: SimConfig) -> PointCloud:
    """Clean full-coverage cloud of the static map (the mapping-stage model)."""
    pts = []
    rng = np.random.default_rng(sim.rng_seed)
    for box in scene.base.obstacles:
        for sgn in (1.0, -1.0):
            for k in range(3):
                normal = sgn * box.orientation[:, k]
                vp = box.center + normal * (float(box.half_extents[k]) + 1.0)
                sampled, _ = sample_scene_surfaces(
                    scene, scene.initial_state(), vp,
                    dataclasses.replace(sim, noise_sigma=0.0, dropout_prob=0.0),
                    rng, include_base=True, part_ids=())
                pts.append(sampled)
    if not pts:
        return PointCloud(np.zeros((0, 3)))
    allpts = np.vstack(pts)
    # sampling from 6 directions duplicates faces; thin deterministically
    order = np.lexsort(allpts.T)
    allpts = allpts[order]
    keep = np.ones(len(allpts), dtype=bool)
    if len(allpts) > 1:
        d = np.linalg.norm(np.diff(allpts, axis=0), axis=1)
        keep[1:] = d > 1e-6
    return PointCloud(allpts[keep])


def _write_observation(obs: Observation, stem: Path) -> dict:
    save_xyz(obs.cloud, f"{stem}.xyz")
    return {"cloud": f"{stem.name}.xyz",
            "hotspot": [float(v) for v in obs.hotspot],
            "viewpoint": [float(v) for v in obs.viewpoint]}


def run_explore(scene_path, out: Path, args) -> dict:
    scene = load_scene(scene_path)
    extras = load_scene_extras(scene_path)
    sim, expl, _, robot = _build_configs(scene_path, args)
    rng = np.random.default_rng(sim.rng_seed)
    t0 = time.perf_counter()
    result = explore_scene(scene, sim, expl, robot=robot, rng=rng)
    elapsed = time.perf_counter() - t0

    with open(out / "exploration_log.jsonl", "w") as f:
        for event in result.events:
            f.write(json.dumps(event) + "\n")

    records_dir = out / "records"
    records_dir.mkdir(exist_ok=True)
    for rec in result.records:
        doc = {"part_id": rec.part_id, "succeeded": rec.succeeded,
               "classified_kind": rec.classified_kind,
               "attempts_used": rec.attempts_used,
               "displacement": rec.displacement,
               "failure_stage": rec.failure_stage}
        if rec.pre is not None:
            doc["pre"] = _write_observation(rec.pre, records_dir / f"{rec.part_id}_pre")
        if rec.post is not None:
            doc["post"] = _write_observation(rec.post, records_dir / f"{rec.part_id}_post")
        with open(records_dir / f"{rec.part_id}.json", "w") as f:
            json.dump(doc, f, indent=2)

    save_scene(KinematicScene(scene.base, ()), out / "base_map.json", extra=extras)
    save_xyz(_base_map_cloud(scene, sim), out / "base_map.xyz")

    openings = {p.id: opening_degree(scene, p.id, result.final_state.theta(p.id))
                for p in scene.parts}
    breakdown = {
        "total": len(result.records),
        "success": sum(1 for r in result.records if r.succeeded),
        "navigation_failures": sum(1 for r in result.records
                                   if r.failure_stage == "navigation"),
        "manipulation_failures": sum(1 for r in result.records
                                     if r.failure_stage == "manipulation"),
        "opening_degrees": {k: round(v, 6) for k, v in sorted(openings.items())},
    }
    with open(out / "breakdown.json", "w") as f:
        json.dump(breakdown, f, indent=2)
    print(f"explored {breakdown['total']} handles: {breakdown['success']} succeeded "
          f"({elapsed:.1f}s)")
    return {"elapsed": elapsed, "breakdown": breakdown}


def cmd_explore(args) -> int:
    out = _prepare_out(args.out, args.force)
    if out is None:
        return _fail(EXIT_USAGE, f"output directory {args.out} is not empty (use --force)")
    try:
        run_explore(args.scene, out, args)
    except (SceneFormatError, SceneValidationError) as e:
        return _fail(EXIT_VALIDATION, str(e))
    except (ArtisceneError, OSError, ValueError) as e:
        return _fail(EXIT_RUNTIME, str(e))
    return 0


# --- estimate ----------------------------------------------------------------

def _read_record(records_dir: Path, doc: dict):
    def read_obs(sub):
        cloud = load_xyz(records_dir / sub["cloud"])
        return Observation(cloud, sub["hotspot"], sub["viewpoint"])

    pre = read_obs(doc["pre"]) if "pre" in doc else None
    post = read_obs(doc["post"]) if "post" in doc else None
    return pre, post


def run_estimate(records_root: Path, out: Path, truth_path=None) -> dict:
    records_dir = records_root / "records"
    if not records_dir.is_dir():
        raise SceneValidationError(f"no records directory under {records_root}")
    base_scene = load_scene(records_root / "base_map.json", validate_reachability=False)
    base_cloud = None
    base_xyz = records_root / "base_map.xyz"
    if base_xyz.exists() and base_xyz.stat().st_size > 0:
        base_cloud = load_xyz(base_xyz)
    truth = load_scene(truth_path) if truth_path else None

    estimates = []
    failures = []
    parts = []
    for rec_path in sorted(records_dir.glob("*.json")):
        doc = json.loads(rec_path.read_text())
        if not doc.get("succeeded"):
            failures.append({"part_id": doc["part_id"], "stage": "exploration"})
            continue
        pre, post = _read_record(records_dir, doc)
        try:
            est = estimate_record(doc["part_id"], pre, post)
            if base_cloud is not None and len(base_cloud) > 100:
                est, _ = register_to_scene(est, pre.cloud, base_cloud)
            estimates.append((est, pre))
            parts.append(estimated_part(est, pre, post))
        except ArtisceneError as e:
            failures.append({"part_id": doc["part_id"], "stage": "estimation",
                             "reason": str(e)})

    est_scene = build_estimated_scene(base_scene.base, parts)
    extras = load_scene_extras(records_root / "base_map.json")
    save_scene(est_scene, out / "estimated_scene.json", extra=extras)

    rows = []
    if truth is not None:
        for est, _pre in estimates:
            try:
                joint = truth.part(est.part_id).joint
            except UnknownPartError:
                continue
            err = articulation_errors(est, joint)
            rows.append([est.part_id, joint.kind, est.kind,
                         "" if err.angle_err_deg is None else f"{err.angle_err_deg:.9g}",
                         "" if err.trans_err_m is None else f"{err.trans_err_m:.9g}"])
    with open(out / "metrics.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["part_id", "kind_true", "kind_est", "angle_err_deg",
                         "trans_err_m"])
        writer.writerows(sorted(rows))

    summary = {"estimated": len(estimates), "failures": failures}
    with open(out / "estimation_summary.json", "w") as f:
        json.dump(summary, f, indent=2)
    print(f"estimated {len(estimates)} parts ({len(failures)} failures)")
    return summary


def cmd_estimate(args) -> int:
    out = _prepare_out(args.out, args.force)
    if out is None:
        return _fail(EXIT_USAGE, f"output directory {args.out} is not empty (use --force)")
    try:
        run_estimate(Path(args.records), out, args.truth)
    except (SceneFormatError, SceneValidationError) as e:
        return _fail(EXIT_VALIDATION, str(e))
    except (ArtisceneError, OSError, ValueError) as e:
        return _fail(EXIT_RUNTIME, str(e))
    return 0


# --- plan --------------------------------------------------------------------

def run_plan(scene_path, goal_path, out: Path, args) -> dict:
    scene = load_scene(scene_path)
    _, _, planner_cfg, robot = _build_configs(scene_path, args)
    goal = _load_goal(scene, goal_path)
    state = scene.initial_state()
    t0 = time.perf_counter()
    plan = plan_scene(scene, state, robot, goal, planner_cfg)
    elapsed = time.perf_counter() - t0
    write_plan(plan, scene, out / "plan.json")

    lines = [f"feasible: {plan.feasible}"]
    if plan.feasible:
        lines.append("order: " + " -> ".join(plan.order()))
        for s in plan.steps:
            lines.append(f"  {s.part_id}: base=({s.base_pose[0]:.3f}, "
                         f"{s.base_pose[1]:.3f}) reach={s.reach_count}/{s.trajectory.K + 1}")
    for d in plan.diagnostics:
        lines.append(f"rejected {d['order']}: {d['reason']} at {d['step']}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print(lines[0] + (f"; order: {' -> '.join(plan.order())}" if plan.feasible else ""))
    return {"elapsed": elapsed, "plan": plan, "scene": scene, "goal": goal}


def cmd_plan(args) -> int:
    out = _prepare_out(args.out, args.force)
    if out is None:
        return _fail(EXIT_USAGE, f"output directory {args.out} is not empty (use --force)")
    try:
        run_plan(args.scene, args.goal, out, args)
    except (SceneFormatError, SceneValidationError, UnknownPartError) as e:
        return _fail(EXIT_VALIDATION, str(e))
    except (ArtisceneError, OSError, ValueError) as e:
        return _fail(EXIT_RUNTIME, str(e))
    return 0


# --- run-all -----------------------------------------------------------------

def run_all(args) -> int:
    out = _prepare_out(args.out, args.force)
    if out is None:
        return _fail(EXIT_USAGE, f"output directory {args.out} is not empty (use --force)")
    try:
        scene = load_scene(args.scene)
        sim, expl, planner_cfg, robot = _build_configs(args.scene, args)
        goal = _load_goal(scene, args.goal)
    except (SceneFormatError, SceneValidationError, UnknownPartError) as e:
        return _fail(EXIT_VALIDATION, str(e))
    except (OSError, ValueError) as e:
        return _fail(EXIT_USAGE, str(e))

    manifest = {"scene": str(args.scene), "goal": str(args.goal), "seed": args.seed,
                "stages": {}}
    try:
        # discovery stage on the pristine scene
        explore_out = out / "explore"
        explore_out.mkdir(exist_ok=True)
        t0 = time.perf_counter()
        info = run_explore(args.scene, explore_out, args)
        manifest["stages"]["explore"] = {"out": str(explore_out),
                                         "seconds": round(time.perf_counter() - t0, 3)}
        manifest["exploration_opening_degrees"] = info["breakdown"]["opening_degrees"]

        estimate_out = out / "estimate"
        estimate_out.mkdir(exist_ok=True)
        t0 = time.perf_counter()
        est_summary = run_estimate(explore_out, estimate_out, args.scene)
        manifest["stages"]["estimate"] = {"out": str(estimate_out),
                                          "seconds": round(time.perf_counter() - t0, 3)}
        breakdown = dict(info["breakdown"])
        breakdown.pop("opening_degrees", None)
        breakdown["estimation_failures"] = sum(
            1 for f in est_summary["failures"] if f["stage"] == "estimation")
        manifest["discovery_breakdown"] = breakdown

        # manipulation stage: joints reset to closed, plan on the estimated model
        plan_out = out / "plan"
        plan_out.mkdir(exist_ok=True)
        est_scene_path = estimate_out / "estimated_scene.json"
        t0 = time.perf_counter()
        plan_info = run_plan(est_scene_path, args.goal, plan_out, _PlanArgs(args))
        manifest["stages"]["plan"] = {"out": str(plan_out),
                                      "seconds": round(time.perf_counter() - t0, 3)}
        plan = plan_info["plan"]
        est_scene = plan_info["scene"]

        t0 = time.perf_counter()
        state = scene.initial_state()
        rows = []
        openings = {}
        if plan.feasible:
            result = execute_plan(scene, state, plan, est_scene, sim, robot,
                                  planner_cfg.robot_radius)
            for o in result.outcomes:
                openings[o.part_id] = o.opening_degree
                rows.append([o.part_id, f"{o.achieved:.9g}",
                             f"{o.opening_degree:.9g}", o.pulls, o.completed])
        with open(out / "execution.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["part_id", "theta_final", "opening_degree", "pulls",
                             "completed"])
            writer.writerows(rows)
        manifest["stages"]["execute"] = {"out": str(out / "execution.csv"),
                                         "seconds": round(time.perf_counter() - t0, 3)}
        manifest["plan_feasible"] = plan.feasible
        manifest["execution_opening_degrees"] = {k: round(v, 6)
                                                 for k, v in sorted(openings.items())}
        from .scene import goal_satisfied

        final = result.final_state if plan.feasible and plan.steps else state
        manifest["goal_satisfied"] = goal_satisfied(scene, final, goal)
    except (SceneFormatError, SceneValidationError, UnknownPartError) as e:
        return _fail(EXIT_VALIDATION, str(e))
    except (ArtisceneError, OSError, ValueError) as e:
        return _fail(EXIT_RUNTIME, str(e))

    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2)
    print(f"pipeline complete; manifest at {out / 'manifest.json'}")
    return 0


class _PlanArgs:
    """Plan-stage view of the run-all arguments."""

    def __init__(self, args):
        self.seed = args.seed
        self.config = getattr(args, "config", None)
        self.noise_sigma = getattr(args, "noise_sigma", None)
        self.max_candidates = getattr(args, "max_candidates", None)


# --- entry point -------------------------------------------------------------

def _add_common(p, scene=True):
    if scene:
        p.add_argument("--scene", required=True, help="scene JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true", help="allow non-empty --out")
    p.add_argument("--config", help="JSON overrides (path or inline)")
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    p.add_argument("--max-candidates", dest="max_candidates", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="artiscene",
        description="Build and use a scene-level articulation model in simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explore", help="run the articulation discovery stage")
    _add_common(p)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("estimate", help="estimate joint models from records")
    p.add_argument("--records", required=True, help="explore output directory")
    p.add_argument("--truth", default=None, help="ground-truth scene for metrics")
    _add_common(p, scene=False)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("plan", help="plan a feasible interaction sequence")
    _add_common(p)
    p.add_argument("--goal", required=True, help="goal JSON: part id -> threshold")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("run-all", help="explore, estimate, plan and execute")
    _add_common(p)
    p.add_argument("--goal", required=True, help="goal JSON: part id -> threshold")
    p.set_defaults(func=run_all)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except json.JSONDecodeError as e:
        return _fail(EXIT_VALIDATION, f"invalid JSON: {e}")
    except FileNotFoundError as e:
        return _fail(EXIT_USAGE, str(e))


if __name__ == "__main__":
    raise SystemExit(main())
