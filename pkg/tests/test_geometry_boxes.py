import numpy as np
import pytest

from artiscene.geometry import (OrientedBox, obb_intersects, obb_separation,
                                rodrigues_rotation)
from oracles import boxes_overlap_oracle


def random_box(rng, center_scale=1.0):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    rot = rodrigues_rotation(axis, rng.uniform(0.0, np.pi))
    return OrientedBox(rng.uniform(-center_scale, center_scale, size=3),
                       rng.uniform(0.1, 0.6, size=3), rot)


def test_identical_boxes_intersect():
    box = OrientedBox.axis_aligned((0, 0, 0), (1, 1, 1))
    assert obb_intersects(box, box, margin=0.0)


def test_distant_cubes_disjoint():
    a = OrientedBox.axis_aligned((0, 0, 0), (0.5, 0.5, 0.5))
    b = OrientedBox.axis_aligned((5, 0, 0), (0.5, 0.5, 0.5))
    assert not obb_intersects(a, b, margin=0.0)


def test_margin_inflates_both_boxes():
    a = OrientedBox.axis_aligned((0, 0, 0), (0.5, 0.5, 0.5))
    b = OrientedBox.axis_aligned((1.1, 0, 0), (0.5, 0.5, 0.5))
    assert not obb_intersects(a, b, margin=0.0)
    assert obb_intersects(a, b, margin=0.06)  # gap 0.1 closed by 2 * 0.06


def test_negative_margin_rejected():
    box = OrientedBox.axis_aligned((0, 0, 0), (1, 1, 1))
    with pytest.raises(ValueError):
        obb_intersects(box, box, margin=-0.1)


def test_symmetry_random_pairs():
    rng = np.random.default_rng(5)
    for _ in range(300):
        a = random_box(rng)
        b = random_box(rng)
        m = rng.uniform(0.0, 0.1)
        assert obb_intersects(a, b, m) == obb_intersects(b, a, m)


def test_agrees_with_point_sampling_oracle():
    # smaller sibling of the acceptance run (10,000 pairs live there)
    rng = np.random.default_rng(17)
    disagreements = 0
    for _ in range(1000):
        a = random_box(rng)
        b = random_box(rng)
        sat = obb_intersects(a, b, margin=0.0)
        oracle = boxes_overlap_oracle(a, b, rng, volume_samples=4000)
        if sat != oracle:
            disagreements += 1
            # SAT is exact for boxes: the oracle may only miss thin slivers
            assert sat and not oracle
            assert abs(obb_separation(a, b)) < 1e-3
    assert disagreements / 1000 <= 0.005


def test_touching_faces_count_as_overlap():
    a = OrientedBox.axis_aligned((0, 0, 0), (0.5, 0.5, 0.5))
    b = OrientedBox.axis_aligned((1.0, 0, 0), (0.5, 0.5, 0.5))
    assert obb_separation(a, b) == pytest.approx(0.0, abs=1e-12)
    assert obb_intersects(a, b, margin=0.0)


def test_footprint_of_yawed_box():
    box = OrientedBox((1, 2, 0.5), (0.5, 0.25, 0.5),
                      rodrigues_rotation((0, 0, 1), 0.3))
    fp = box.footprint()
    assert fp.shape == (4, 2)
    assert np.allclose(fp.mean(axis=0), [1, 2], atol=1e-12)
