import math

import numpy as np
import pytest

from artiscene.errors import DegenerateGeometryError
from artiscene.geometry import (PointCloud, cloud_displacement,
                                estimate_normals, fit_rigid_transform,
                                icp_register, load_xyz, remove_statistical_outliers,
                                rodrigues_rotation, save_xyz)


def rand_rotation(rng, max_angle=math.pi):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return rodrigues_rotation(axis, rng.uniform(0.0, max_angle))


def rotation_angle_deg(r):
    c = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    return math.degrees(math.acos(c))


# --- normals -----------------------------------------------------------------

def test_plane_normals_face_viewpoint():
    rng = np.random.default_rng(1)
    pts = np.column_stack([rng.uniform(-1, 1, 500), rng.uniform(-1, 1, 500),
                           np.zeros(500)])
    normals, valid = estimate_normals(PointCloud(pts), k=16, viewpoint=(0, 0, 1))
    assert valid.all()
    angles = np.degrees(np.arccos(np.clip(normals @ [0, 0, 1.0], -1, 1)))
    assert np.all(angles < 1.0)


def test_three_points_k2_exact_triangle_normal():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0]])
    normals, valid = estimate_normals(PointCloud(pts), k=2, viewpoint=(0, 0, 5))
    assert valid.all()
    assert np.allclose(np.abs(normals @ [0, 0, 1.0]), 1.0, atol=1e-12)
    assert np.all(normals @ [0, 0, 1.0] > 0)


def test_sphere_normals_radial():
    rng = np.random.default_rng(2)
    v = rng.normal(size=(2000, 3))
    pts = v / np.linalg.norm(v, axis=1, keepdims=True)
    normals, valid = estimate_normals(PointCloud(pts), k=16, viewpoint=(0, 0, 0))
    inward = -pts  # flipped toward the center viewpoint
    angles = np.degrees(np.arccos(np.clip(np.einsum("ij,ij->i", normals[valid],
                                                    inward[valid]), -1, 1)))
    assert np.all(angles < 5.0)


def test_collinear_neighborhood_flagged_invalid():
    line = np.column_stack([np.linspace(0, 1, 30), np.zeros(30), np.zeros(30)])
    normals, valid = estimate_normals(PointCloud(line), k=4, viewpoint=(0, 0, 1))
    assert not valid.any()
    assert np.isnan(normals[~valid]).all()


def test_too_few_points_rejected():
    with pytest.raises(ValueError):
        estimate_normals(PointCloud(np.zeros((3, 3))), k=3)


# --- rigid fit ---------------------------------------------------------------

def test_fit_identity():
    rng = np.random.default_rng(3)
    pts = PointCloud(rng.normal(size=(50, 3)))
    t = fit_rigid_transform(pts, pts)
    assert np.allclose(t.rotation, np.eye(3), atol=1e-12)
    assert np.allclose(t.translation, 0.0, atol=1e-12)


def test_fit_recovers_known_transform():
    rng = np.random.default_rng(4)
    for _ in range(50):
        src = rng.normal(size=(200, 3))
        rot = rand_rotation(rng)
        trans = rng.normal(size=3)
        t = fit_rigid_transform(PointCloud(src), PointCloud(src @ rot.T + trans))
        assert np.linalg.norm(t.rotation - rot) < 1e-9
        assert np.linalg.norm(t.translation - trans) < 1e-9


def test_fit_exact_on_minimal_noncollinear():
    src = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0]])
    rot = rodrigues_rotation((0, 0, 1.0), 0.7)
    dst = src @ rot.T + np.array([0.1, -0.2, 0.3])
    t = fit_rigid_transform(PointCloud(src), PointCloud(dst))
    assert np.linalg.norm(t.apply(src) - dst) < 1e-9


def test_fit_noise_monte_carlo():
    rng = np.random.default_rng(5)
    errs = []
    for _ in range(100):
        src = rng.uniform(-0.5, 0.5, size=(1000, 3))
        rot = rand_rotation(rng)
        trans = rng.normal(size=3)
        noisy = src @ rot.T + trans + rng.normal(0.0, 1e-3, size=(1000, 3))
        t = fit_rigid_transform(PointCloud(src), PointCloud(noisy))
        errs.append(rotation_angle_deg(t.rotation.T @ rot))
    assert max(errs) < 0.5


def test_fit_collinear_degenerate():
    line = np.column_stack([np.linspace(0, 1, 10), np.zeros(10), np.zeros(10)])
    with pytest.raises(DegenerateGeometryError):
        fit_rigid_transform(PointCloud(line), PointCloud(line + 0.1))


def test_fit_weights_downweight_outlier():
    rng = np.random.default_rng(6)
    src = rng.normal(size=(40, 3))
    dst = src + np.array([0.5, 0.0, 0.0])
    dst[0] += 10.0
    w = np.ones(40)
    w[0] = 0.0
    t = fit_rigid_transform(PointCloud(src), PointCloud(dst), weights=w)
    assert np.allclose(t.translation, [0.5, 0, 0], atol=1e-9)


# --- icp ---------------------------------------------------------------------

def patch_cloud(rng, n=800):
    pts = np.column_stack([rng.uniform(-0.4, 0.4, n), rng.uniform(-0.3, 0.3, n),
                           rng.uniform(-0.02, 0.02, n)])
    bump = rng.uniform(-0.1, 0.1, size=(n, 3)) * (rng.random((n, 1)) < 0.3)
    return pts + bump


def test_icp_identity():
    rng = np.random.default_rng(7)
    cloud = PointCloud(patch_cloud(rng))
    result = icp_register(cloud, cloud, outlier_removal=False)
    assert result.residual < 1e-12
    assert np.allclose(result.transform.rotation, np.eye(3), atol=1e-9)


def test_icp_small_offset_round_trip():
    rng = np.random.default_rng(8)
    src = patch_cloud(rng)
    rot = rodrigues_rotation((0, 0, 1.0), math.radians(5.0))
    dst = src @ rot.T + np.array([0.03, 0.0, 0.0])
    result = icp_register(PointCloud(src), PointCloud(dst), outlier_removal=False)
    assert rotation_angle_deg(result.transform.rotation.T @ rot) < 0.2
    assert np.linalg.norm(result.transform.translation - [0.03, 0, 0]) < 1e-3


def test_icp_partial_overlap():
    rng = np.random.default_rng(9)
    full = patch_cloud(rng, n=1200)
    keep = rng.random(1200) > 0.30
    src = full[keep]
    dst = full + np.array([0.02, 0.0, 0.0])
    result = icp_register(PointCloud(src), PointCloud(dst), outlier_removal=False)
    err = np.linalg.norm(result.transform.translation - [0.02, 0, 0])
    assert err < 5e-3


def test_icp_accepted_residuals_non_increasing():
    rng = np.random.default_rng(10)
    src = patch_cloud(rng)
    dst = src @ rodrigues_rotation((0, 0, 1.0), 0.1).T + 0.05
    result = icp_register(PointCloud(src), PointCloud(dst), outlier_removal=False)
    hist = np.asarray(result.residual_history)
    assert np.all(np.diff(hist) <= 1e-15)


def test_outlier_removal_drops_far_points():
    rng = np.random.default_rng(11)
    pts = rng.normal(0.0, 0.05, size=(500, 3))
    pts[0] = [5.0, 5.0, 5.0]
    cleaned = remove_statistical_outliers(PointCloud(pts))
    assert len(cleaned) < 500
    assert not np.any(np.all(cleaned.points == pts[0], axis=1))


# --- chamfer displacement ----------------------------------------------------

def test_displacement_zero_for_equal_clouds():
    rng = np.random.default_rng(12)
    c = PointCloud(rng.normal(size=(100, 3)))
    assert cloud_displacement(c, c) == 0.0


def test_displacement_translated_plane_patch():
    # plane normal to the motion: every nearest neighbor is the moved twin
    g = np.linspace(-0.5, 0.5, 20)
    yy, zz = np.meshgrid(g, g)
    pts = np.column_stack([np.zeros(yy.size), yy.ravel(), zz.ravel()])
    a = PointCloud(pts)
    b = PointCloud(pts + np.array([0.10, 0.0, 0.0]))
    assert cloud_displacement(a, b) == pytest.approx(0.10, abs=1e-6)


def test_displacement_disjoint_clusters():
    rng = np.random.default_rng(13)
    a = PointCloud(rng.uniform(-0.05, 0.05, size=(200, 3)))
    b = PointCloud(rng.uniform(-0.05, 0.05, size=(200, 3)) + np.array([1.0, 0, 0]))
    assert cloud_displacement(a, b) >= 1.0 - 2 * 0.05 * math.sqrt(3)


def test_displacement_positive_for_distinct_clouds():
    a = PointCloud(np.array([[0.0, 0, 0], [1.0, 0, 0]]))
    b = PointCloud(np.array([[0.0, 0, 0], [1.0, 0.2, 0]]))
    assert cloud_displacement(a, b) > 0.0


def test_displacement_symmetry():
    rng = np.random.default_rng(14)
    a = PointCloud(rng.normal(size=(150, 3)))
    b = PointCloud(rng.normal(size=(80, 3)))
    assert cloud_displacement(a, b) == pytest.approx(cloud_displacement(b, a), abs=1e-15)


def test_xyz_round_trip(tmp_path):
    rng = np.random.default_rng(15)
    cloud = PointCloud(rng.normal(size=(64, 3)))
    path = tmp_path / "cloud.xyz"
    save_xyz(cloud, path)
    back = load_xyz(path)
    assert np.allclose(back.points, cloud.points, atol=1e-7)
