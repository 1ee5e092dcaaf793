import json
import math

import numpy as np
import pytest

from artiscene.errors import (LimitViolationError, SceneFormatError,
                              SceneValidationError, UnknownPartError)
from artiscene.geometry import OrientedBox
from artiscene.scene import (JointModel, KinematicScene, MobilePart, RobotState,
                             SceneState, StaticBaseMap, goal_satisfied, handle_at,
                             load_scene, part_pose_at, save_scene, scene_from_json,
                             scene_to_json)
from artiscene.fixtures import kitchen, minimal_drawer


def drawer_part(part_id="d", axis=(1.0, 0.0, 0.0)):
    shape = OrientedBox.axis_aligned((0.0, 0.0, 0.5), (0.2, 0.02, 0.15))
    joint = JointModel("prismatic", axis, None, 0.0, 0.15)
    return MobilePart(part_id, shape, joint, (0.0, -0.02, 0.5))


def door_part(part_id="door"):
    shape = OrientedBox.axis_aligned((1.15, 0.0, 0.5), (0.15, 0.02, 0.3))
    joint = JointModel("revolute", (0.0, 0.0, 1.0), (1.0, 0.0, 0.5), 0.0, math.pi / 2)
    return MobilePart(part_id, shape, joint, (1.28, -0.02, 0.5))


def test_joint_invariants():
    with pytest.raises(ValueError):
        JointModel("revolute", (0, 0, 2.0), (0, 0, 0), 0.0, 1.0)
    with pytest.raises(ValueError):
        JointModel("revolute", (0, 0, 1.0), None, 0.0, 1.0)
    with pytest.raises(ValueError):
        JointModel("prismatic", (0, 0, 1.0), (0, 0, 0), 0.0, 1.0)
    with pytest.raises(LimitViolationError):
        JointModel("prismatic", (0, 0, 1.0), None, 0.0, 0.1, state=0.2)


def test_handle_must_touch_shape():
    shape = OrientedBox.axis_aligned((0, 0, 0.5), (0.2, 0.02, 0.15))
    joint = JointModel("prismatic", (1.0, 0, 0), None, 0.0, 0.15)
    with pytest.raises(SceneValidationError):
        MobilePart("bad", shape, joint, (0.0, -0.5, 0.5))


def test_part_pose_identity_at_zero():
    for part in (drawer_part(), door_part()):
        t = part_pose_at(part, 0.0)
        assert np.allclose(t.rotation, np.eye(3), atol=1e-12)
        assert np.allclose(t.translation, 0.0, atol=1e-12)


def test_prismatic_pose_is_axis_translation():
    t = part_pose_at(drawer_part(), 0.15)
    assert np.allclose(t.translation, [0.15, 0, 0], atol=1e-12)
    assert np.allclose(t.rotation, np.eye(3), atol=1e-12)


def test_revolute_pose_hand_computed():
    # rotation about z through q=(1,0,0) by 90 degrees: (1.3,0,0.5) -> (1,0.3,0.5)
    part = door_part()
    t = part_pose_at(part, math.pi / 2)
    moved = t.apply(np.array([1.3, 0.0, 0.5]))
    assert np.allclose(moved, [1.0, 0.3, 0.5], atol=1e-12)


def test_pose_out_of_limits():
    with pytest.raises(LimitViolationError):
        part_pose_at(drawer_part(), 0.2)


def test_revolute_preserves_corner_distance_to_axis():
    part = door_part()
    axis_point = np.asarray(part.joint.pivot)
    axis = np.asarray(part.joint.axis)
    corners = part.shape.corners()

    def dist_to_axis(p):
        rel = p - axis_point
        return np.linalg.norm(rel - (rel @ axis) * axis)

    for theta in np.linspace(0.0, math.pi / 2, 7):
        t = part_pose_at(part, theta)
        for c in corners:
            assert abs(dist_to_axis(t.apply(c)) - dist_to_axis(c)) < 1e-9


def test_prismatic_pose_composition():
    part = drawer_part()
    t1 = part_pose_at(part, 0.05)
    t2 = part_pose_at(part, 0.07)
    both = t1.compose(t2)
    t12 = part_pose_at(part, 0.12)
    assert np.allclose(both.translation, t12.translation, atol=1e-12)


def test_handle_tracks_revolute_motion():
    part = door_part()
    h = handle_at(part, math.pi / 2)
    # handle (1.28,-0.02) about pivot (1.0, 0): rel (0.28,-0.02) -> (0.02, 0.28)
    assert np.allclose(h, [1.02, 0.28, 0.5], atol=1e-12)


def test_scene_rejects_duplicate_ids_and_overlap():
    base = StaticBaseMap((), (-1, -1), (3, 3))
    with pytest.raises(SceneValidationError):
        KinematicScene(base, (drawer_part("a"), drawer_part("a")))
    p1 = drawer_part("a")
    p2 = drawer_part("b")  # identical shapes overlap
    with pytest.raises(SceneValidationError):
        KinematicScene(base, (p1, p2))


def test_goal_satisfied_thresholds():
    scene, _ = minimal_drawer()
    state = scene.initial_state()
    assert goal_satisfied(scene, state, {})
    assert not goal_satisfied(scene, state, {"drawer_1": 0.05})
    assert goal_satisfied(scene, state.with_theta("drawer_1", 0.05), {"drawer_1": 0.05})
    with pytest.raises(UnknownPartError):
        goal_satisfied(scene, state, {"nope": 0.1})


def test_goal_revolute_30_degree_threshold():
    base = StaticBaseMap((), (-1, -1), (3, 3))
    scene = KinematicScene(base, (door_part("door"),))
    goal = {"door": math.radians(30.0)}
    sat35 = SceneState({"door": math.radians(35.0)})
    sat25 = SceneState({"door": math.radians(25.0)})
    assert goal_satisfied(scene, sat35, goal)
    assert not goal_satisfied(scene, sat25, goal)


def test_minimal_scene_loads_with_one_part(tmp_path):
    scene, extras = minimal_drawer()
    path = tmp_path / "scene.json"
    save_scene(scene, path, extra=extras)
    loaded = load_scene(path)
    assert len(loaded.parts) == 1
    assert loaded.parts[0].joint.kind == "prismatic"


def test_kitchen_loads_with_nine_parts(tmp_path):
    scene, extras = kitchen()
    path = tmp_path / "kitchen.json"
    save_scene(scene, path, extra=extras)
    loaded = load_scene(path)
    assert len(loaded.parts) == 9
    kinds = [p.joint.kind for p in loaded.parts]
    assert kinds.count("revolute") == 5
    assert kinds.count("prismatic") == 4


def test_round_trip_preserves_numbers(tmp_path):
    scene, _ = kitchen()
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    save_scene(scene, p1)
    save_scene(load_scene(p1), p2)
    d1 = json.loads(p1.read_text())
    d2 = json.loads(p2.read_text())
    assert d1 == d2
    again = scene_from_json(scene_to_json(scene))
    for orig, back in zip(scene.parts, again.parts):
        assert np.allclose(orig.shape.center, back.shape.center, atol=1e-12)
        assert np.allclose(orig.joint.axis, back.joint.axis, atol=1e-12)
        assert abs(orig.joint.limit_max - back.joint.limit_max) < 1e-12


def test_schema_violations_name_the_field(tmp_path):
    scene, _ = minimal_drawer()
    doc = scene_to_json(scene)
    del doc["parts"][0]["joint"]["axis"]
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SceneFormatError) as exc:
        load_scene(path)
    assert "axis" in str(exc.value)


def test_overlapping_parts_rejected_at_load(tmp_path):
    scene, _ = minimal_drawer()
    doc = scene_to_json(scene)
    clone = json.loads(json.dumps(doc["parts"][0]))
    clone["id"] = "drawer_2"
    doc["parts"].append(clone)
    path = tmp_path / "overlap.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SceneValidationError):
        load_scene(path)


def test_prismatic_limit_field_mismatch(tmp_path):
    scene, _ = minimal_drawer()
    doc = scene_to_json(scene)
    doc["parts"][0]["joint"]["limits_deg"] = [0, 90]
    del doc["parts"][0]["joint"]["limits_m"]
    path = tmp_path / "units.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SceneFormatError) as exc:
        load_scene(path)
    assert "limits_deg" in str(exc.value)


def test_robot_reach_annulus():
    robot = RobotState(base_pose=(0.0, 0.0, 0.0))
    assert robot.can_reach((0.5, 0.0, 0.5))
    assert not robot.can_reach((0.05, 0.0, 0.5))   # inside r_min
    assert not robot.can_reach((2.0, 0.0, 0.5))    # beyond r_max
    assert not robot.can_reach((0.5, 0.0, 1.5))    # above the height band


def test_unreachable_handle_rejected_at_load(tmp_path):
    # drawer handle walled in on all sides: no free floor within arm reach
    scene, extras = minimal_drawer()
    doc = scene_to_json(scene)
    for cx, cy, hx, hy in ((1.5, 1.2, 1.5, 0.15), (1.5, 2.95, 1.5, 0.05),
                           (0.25, 2.1, 0.2, 1.0), (2.75, 2.1, 0.2, 1.0)):
        doc["base"]["obstacles"].append(
            {"center": [cx, cy, 0.5], "half_extents": [hx, hy, 0.5], "yaw_deg": 0})
    path = tmp_path / "walled.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SceneValidationError):
        load_scene(path)
