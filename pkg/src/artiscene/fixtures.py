"""Built-in scenes: a kitchen wall of doors and drawers plus two galley
fixtures with ordering and path-blocking constraints.

Run as a module to write them out: python -m artiscene.fixtures <dir>
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

from .geometry import OrientedBox
from .scene import (PRISMATIC, REVOLUTE, JointModel, KinematicScene, MobilePart,
                    StaticBaseMap, save_scene)

Z_AXIS = (0.0, 0.0, 1.0)
NEG_Z = (0.0, 0.0, -1.0)
SOUTH = (0.0, -1.0, 0.0)
DEG90 = math.pi / 2.0


def _box(cx, cy, cz, hx, hy, hz) -> OrientedBox:
    return OrientedBox.axis_aligned((cx, cy, cz), (hx, hy, hz))


def _drawer(part_id, cx, face_y, cz=0.70, half_w=0.225, half_h=0.125) -> MobilePart:
    shape = _box(cx, face_y - 0.015, cz, half_w, 0.015, half_h)
    joint = JointModel(PRISMATIC, SOUTH, None, 0.0, 0.15)
    return MobilePart(part_id, shape, joint, (cx, face_y - 0.03, cz))


def _door(part_id, west_x, face_y, hinge: str, cz=0.45, width=0.45, half_h=0.30) -> MobilePart:
    cx = west_x + width / 2.0
    shape = _box(cx, face_y - 0.015, cz, width / 2.0, 0.015, half_h)
    if hinge == "east":  # counterclockwise from above: a 'left' door
        pivot = (west_x + width, face_y - 0.015, cz)
        axis = Z_AXIS
        handle = (west_x + 0.05, face_y - 0.03, cz)
    else:
        pivot = (west_x, face_y - 0.015, cz)
        axis = NEG_Z
        handle = (west_x + width - 0.05, face_y - 0.03, cz)
    joint = JointModel(REVOLUTE, axis, pivot, 0.0, DEG90)
    return MobilePart(part_id, shape, joint, handle)


def minimal_drawer() -> tuple[KinematicScene, dict]:
    """One prismatic drawer over an empty base map."""
    base = StaticBaseMap((), (0.0, 0.0), (3.0, 3.0))
    parts = [_drawer("drawer_1", 1.5, 2.45, cz=0.5, half_w=0.2, half_h=0.15)]
    extras = {"robot": {"start": [1.5, 1.0, 90.0]}}
    return KinematicScene(base, parts), extras


def kitchen() -> tuple[KinematicScene, dict]:
    """Counter wall with 5 cabinet doors and 4 drawers."""
    counter = _box(3.0, 3.7, 0.45, 2.7, 0.3, 0.45)
    base = StaticBaseMap((counter,), (0.0, 0.0), (6.0, 4.0))
    face_y = 3.4
    parts = []
    doors = 0
    drawers = 0
    for i in range(9):
        west = 0.44 + 0.57 * i
        if i % 2 == 0:
            doors += 1
            hinge = "east" if i % 4 == 0 else "west"
            parts.append(_door(f"door_{doors}", west, face_y, hinge))
        else:
            drawers += 1
            parts.append(_drawer(f"drawer_{drawers}", west + 0.225, face_y))
    extras = {"robot": {"start": [3.0, 1.2, 90.0]}}
    return KinematicScene(base, parts), extras


def kitchen_goal() -> dict:
    return {"door_1": 90.0, "drawer_1": 0.15, "door_3": 90.0}


def _fold_down(part_id, west_x, face_y, width, panel_len=0.62, pivot_z=0.15,
               handle_frac=0.5) -> MobilePart:
    """Dishwasher-style door: vertical panel rotating down about its bottom edge."""
    cx = west_x + width / 2.0
    cz = pivot_z + panel_len / 2.0
    shape = _box(cx, face_y - 0.015, cz, width / 2.0, 0.015, panel_len / 2.0)
    pivot = (cx, face_y - 0.015, pivot_z)
    joint = JointModel(REVOLUTE, (1.0, 0.0, 0.0), pivot, 0.0, DEG90)
    handle_x = west_x + handle_frac * width
    handle = (handle_x, face_y - 0.03, pivot_z + panel_len - 0.02)
    return MobilePart(part_id, shape, joint, handle)


def galley_block() -> tuple[KinematicScene, dict]:
    """Ordering fixture: the island door must open before the dishwasher.

    The dishwasher panel folds flat over the island door's swing arc, so any
    order that commits the dishwasher first leaves the island door blocked.
    The east drawer is unconstrained.
    """
    counter = _box(2.9, 3.1, 0.45, 2.1, 0.3, 0.45)
    island = _box(2.9, 1.175, 0.4, 2.1, 0.775, 0.4)
    base = StaticBaseMap((counter, island), (0.8, 0.4), (5.0, 3.4))
    dishwasher = _fold_down("dishwasher", 1.3, 2.8, width=0.70)
    island_door = MobilePart(
        "island_door",
        _box(1.325, 1.965, 0.45, 0.225, 0.015, 0.30),
        JointModel(REVOLUTE, Z_AXIS, (1.1, 1.965, 0.45), 0.0, DEG90),
        (1.5, 1.98, 0.45))
    east_drawer = _drawer("east_drawer", 3.825, 2.8)
    scene = KinematicScene(base, (dishwasher, island_door, east_drawer))
    extras = {"robot": {"start": [4.3, 2.35, 180.0]}}
    return scene, extras


def galley_block_goal() -> dict:
    return {"dishwasher": 90.0, "island_door": 90.0, "east_drawer": 0.15}


def blocked_aisle() -> tuple[KinematicScene, dict]:
    """Path-blocking fixture: a wide fold-down door severs the only aisle.

    Its handle sits at the west end of the panel, so the only workable base is
    west of the sweep; once the panel is down, everything east is unreachable.
    """
    counter = _box(3.0, 3.0, 0.45, 3.0, 0.3, 0.45)
    island = _box(3.0, 1.2, 0.3, 3.0, 0.5, 0.3)
    base = StaticBaseMap((counter, island), (0.0, 0.0), (6.0, 3.3))
    dishwasher = _fold_down("dishwasher", 2.0, 2.7, width=1.2, handle_frac=0.1)
    east_drawer = _drawer("east_drawer", 4.625, 2.7)
    scene = KinematicScene(base, (dishwasher, east_drawer))
    extras = {"robot": {"start": [0.7, 2.2, 0.0]}}
    return scene, extras


def blocked_aisle_goal() -> dict:
    return {"dishwasher": 90.0, "east_drawer": 0.15}


BUILDERS = {
    "minimal_drawer": (minimal_drawer, None),
    "kitchen": (kitchen, kitchen_goal),
    "galley_block": (galley_block, galley_block_goal),
    "blocked_aisle": (blocked_aisle, blocked_aisle_goal),
}


def write_all(out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (builder, goal_fn) in BUILDERS.items():
        scene, extras = builder()
        path = out / f"{name}.json"
        save_scene(scene, path, extra=extras)
        written.append(path)
        if goal_fn is not None:
            goal_path = out / f"{name}_goal.json"
            with open(goal_path, "w") as f:
                json.dump(goal_fn(), f, indent=2)
                f.write("\n")
            written.append(goal_path)
    return written


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else "scenes"
    for p in write_all(target):
        print(p)
