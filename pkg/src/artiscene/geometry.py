"""Foundational 3D math: rotations, rigid transforms, oriented boxes, point clouds.

All angles are radians and all lengths meters. Direction vectors (joint axes,
pull directions) are expected unit-norm. Values are treated as immutable once
constructed and are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError, RegistrationFailedError

UNIT_TOL = 1e-9


def as_vec3(v) -> np.ndarray:
    """Convert to a float64 (3,) array."""
    a = np.asarray(v, dtype=float).reshape(3)
    return a


def unit(v) -> np.ndarray:
    """Normalize a vector; raises on near-zero input."""
    a = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(a))
    if n < 1e-12:
        raise ValueError("cannot normalize a near-zero vector")
    return a / n


def require_unit(v, name: str = "axis") -> np.ndarray:
    a = as_vec3(v)
    if abs(float(np.linalg.norm(a)) - 1.0) > UNIT_TOL:
        raise ValueError(f"{name} must be unit-norm (within {UNIT_TOL})")
    return a


def skew(v) -> np.ndarray:
    """Skew-symmetric matrix [v]_x with [v]_x p = v x p."""
    x, y, z = as_vec3(v)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rodrigues_rotation(axis, angle: float) -> np.ndarray:
    """Rotation matrix about a unit axis: I + sin(a)[u]x + (1-cos(a))[u]x^2."""
    u = require_unit(axis)
    k = skew(u)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rotation_axis_angle(rot: np.ndarray) -> tuple[np.ndarray, float]:
    """Extract (axis, angle) with angle in [0, pi] from a rotation matrix.

    The axis sign is chosen so the rotation is +angle about it. For angle ~ 0
    the axis is arbitrary (returns +z). Angles within ~1e-6 of pi resolve the
    axis from the symmetric part but the sign stays ambiguous by nature.
    """
    tr = float(np.trace(rot))
    c = min(1.0, max(-1.0, (tr - 1.0) / 2.0))
    angle = float(np.arccos(c))
    if angle < 1e-12:
        return np.array([0.0, 0.0, 1.0]), 0.0
    if np.pi - angle < 1e-6:
        # R ~ 2 uu^T - I near 180 degrees
        m = (rot + np.eye(3)) / 2.0
        i = int(np.argmax(np.diag(m)))
        ax = m[:, i] / np.sqrt(max(m[i, i], 1e-18))
        return unit(ax), angle
    ax = np.array([rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]])
    return ax / (2.0 * np.sin(angle)), angle


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid transform x -> R x + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = as_vec3(self.translation)
        if np.linalg.norm(r @ r.T - np.eye(3)) > 1e-8 or abs(np.linalg.det(r) - 1.0) > 1e-8:
            raise ValueError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply to one point (3,) or a stack (N, 3)."""
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return p @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self o other)(x) = self(other(x))."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)


@dataclass(frozen=True)
class OrientedBox:
    """Box given by center, positive half extents and an orthonormal orientation."""

    center: np.ndarray
    half_extents: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        c = as_vec3(self.center)
        h = as_vec3(self.half_extents)
        r = np.asarray(self.orientation, dtype=float).reshape(3, 3)
        if np.any(h <= 0.0):
            raise ValueError("half_extents must be strictly positive")
        if np.linalg.norm(r @ r.T - np.eye(3)) > 1e-8:
            raise ValueError("orientation must be orthonormal")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_extents", h)
        object.__setattr__(self, "orientation", r)

    @staticmethod
    def axis_aligned(center, half_extents) -> "OrientedBox":
        return OrientedBox(as_vec3(center), as_vec3(half_extents), np.eye(3))

    def inflated(self, margin: float) -> "OrientedBox":
        return OrientedBox(self.center, self.half_extents + margin, self.orientation)

    def corners(self) -> np.ndarray:
        """All 8 corners, (8, 3)."""
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
        return self.center + (signs * self.half_extents) @ self.orientation.T

    def transformed(self, t: RigidTransform) -> "OrientedBox":
        return OrientedBox(t.apply(self.center), self.half_extents, t.rotation @ self.orientation)

    def contains(self, point, tol: float = 0.0) -> bool:
        local = self.orientation.T @ (as_vec3(point) - self.center)
        return bool(np.all(np.abs(local) <= self.half_extents + tol))

    def distance_to_point(self, point) -> float:
        """Euclidean distance from a point to the box (0 if inside)."""
        local = self.orientation.T @ (as_vec3(point) - self.center)
        outside = np.maximum(np.abs(local) - self.half_extents, 0.0)
        return float(np.linalg.norm(outside))

    def footprint(self) -> np.ndarray:
        """Convex hull of the xy-projected corners, counterclockwise, (M, 2)."""
        pts = self.corners()[:, :2]
        return _convex_hull_2d(pts)


def _convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Andrew monotone chain over a small point set."""
    pts = sorted({(float(x), float(y)) for x, y in points})
    if len(pts) <= 2:
        return np.asarray(pts, dtype=float)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1], dtype=float)


def obb_separation(a: OrientedBox, b: OrientedBox) -> float:
    """Largest separation over the 15 SAT axes (negative when none separates)."""
    axes = []
    for i in range(3):
        axes.append(a.orientation[:, i])
        axes.append(b.orientation[:, i])
    for i in range(3):
        for j in range(3):
            c = np.cross(a.orientation[:, i], b.orientation[:, j])
            n = np.linalg.norm(c)
            if n > 1e-12:
                axes.append(c / n)
    d = b.center - a.center
    best = -np.inf
    for ax in axes:
        ra = float(np.abs(ax @ a.orientation) @ a.half_extents)
        rb = float(np.abs(ax @ b.orientation) @ b.half_extents)
        sep = abs(float(ax @ d)) - (ra + rb)
        if sep > best:
            best = sep
    return best


def obb_intersects(a: OrientedBox, b: OrientedBox, margin: float = 0.02) -> bool:
    """Separating-axis overlap test with both boxes inflated by the margin."""
    if margin < 0.0:
        raise ValueError("margin must be >= 0")
    if margin > 0.0:
        a = a.inflated(margin)
        b = b.inflated(margin)
    return obb_separation(a, b) <= 0.0


@dataclass(frozen=True)
class PointCloud:
    """Set of 3D points with optional per-point weights in [0, 1]."""

    points: np.ndarray
    weights: np.ndarray | None = field(default=None)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", p)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if w.shape[0] != p.shape[0]:
                raise ValueError("weights must match the point count")
            if np.any(w < 0.0) or np.any(w > 1.0):
                raise ValueError("weights must lie in [0, 1]")
            object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def transformed(self, t: RigidTransform) -> "PointCloud":
        return PointCloud(t.apply(self.points), self.weights)

    def subset(self, mask) -> "PointCloud":
        m = np.asarray(mask)
        w = self.weights[m] if self.weights is not None else None
        return PointCloud(self.points[m], w)


def save_xyz(cloud: PointCloud, path) -> None:
    """Write one whitespace-separated point per line."""
    np.savetxt(path, cloud.points, fmt="%.9g")


def load_xyz(path) -> PointCloud:
    pts = np.loadtxt(path, dtype=float)
    if pts.size == 0:
        raise ValueError(f"empty point cloud file: {path}")
    return PointCloud(pts.reshape(-1, 3))


def estimate_normals(cloud: PointCloud, k: int = 16, viewpoint=(0.0, 0.0, 0.0)):
    """Per-point normals from PCA over the k nearest neighbors.

    Normals are flipped to face the viewpoint. Returns (normals (N,3), valid (N,))
    where degenerate neighborhoods (rank < 2, i.e. collinear) are marked invalid
    and left as NaN.

    Requires k >= 2 and at least k+1 points (the point itself plus k neighbors).
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    pts = cloud.points
    n = pts.shape[0]
    if n < k + 1:
        raise ValueError(f"cloud must have at least k+1={k + 1} points, got {n}")
    vp = as_vec3(viewpoint)
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k + 1)
    neigh = pts[idx]  # (N, k+1, 3) including the point itself
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    covs = np.einsum("nki,nkj->nij", centered, centered)
    eigvals, eigvecs = np.linalg.eigh(covs)
    normals = eigvecs[:, :, 0].copy()
    # collinear neighborhood: second eigenvalue ~ 0 relative to the largest
    scale = np.maximum(eigvals[:, 2], 1e-300)
    valid = eigvals[:, 1] / scale > 1e-12
    flip = np.einsum("ni,ni->n", normals, vp - pts) < 0.0
    normals[flip] *= -1.0
    norms = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = normals / np.maximum(norms, 1e-300)
    normals[~valid] = np.nan
    return normals, valid


def plane_normal(points: np.ndarray, viewpoint=None) -> np.ndarray:
    """Dominant plane normal of a point set (smallest PCA axis).

    Raises DegenerateGeometryError when the set does not span a plane.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 3:
        raise DegenerateGeometryError("need at least 3 points for a plane fit")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals[1] <= 1e-12 * max(eigvals[2], 1e-300):
        raise DegenerateGeometryError("points are collinear; plane normal undefined")
    n = eigvecs[:, 0]
    if viewpoint is not None and float(n @ (as_vec3(viewpoint) - pts.mean(axis=0))) < 0.0:
        n = -n
    return n / np.linalg.norm(n)


def consensus_plane_normal(points: np.ndarray, viewpoint=None, min_points: int = 6,
                           inlier_tol: float = 0.008) -> np.ndarray:
    """Plane normal of the dominant surface in a mixed neighborhood.

    A neighborhood at a part edge is often bimodal (a front face plus a
    perpendicular edge strip or a nearby static surface), which wrecks a
    single least-squares fit. Micro-planes fitted around spread anchor points
    vote by inlier count and the consensus surface is refit over its inliers.
    Deterministic: anchors are every k-th point, no sampling.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = pts.shape[0]
    step = max(1, n // 12)
    tree = cKDTree(pts)
    best_mask = None
    best_count = 0
    for anchor in range(0, n, step):
        _, idx = tree.query(pts[anchor], k=min(9, n))
        try:
            cand = plane_normal(pts[idx])
        except DegenerateGeometryError:
            continue
        res = np.abs((pts - pts[idx].mean(axis=0)) @ cand)
        inliers = res <= inlier_tol
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_mask = inliers
    if best_mask is None or best_count < max(min_points, 3):
        return plane_normal(pts, viewpoint=viewpoint)
    return plane_normal(pts[best_mask], viewpoint=viewpoint)


def fit_rigid_transform(src: PointCloud, dst: PointCloud, weights=None) -> RigidTransform:
    """Weighted least-squares rigid alignment src -> dst (point i <-> point i).

    Minimizes sum w_i ||R s_i + t - d_i||^2 via the SVD of the weighted
    cross-covariance, with the reflection corrected to a proper rotation.
    """
    a = src.points
    b = dst.points
    if a.shape != b.shape:
        raise ValueError("source and destination must have equal point counts")
    if a.shape[0] < 3:
        raise ValueError("need at least 3 correspondences")
    if weights is None:
        w = np.ones(a.shape[0])
    else:
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.shape[0] != a.shape[0]:
            raise ValueError("weights must match the point count")
    wsum = float(w.sum())
    if wsum <= 0.0:
        raise ValueError("weight sum must be positive")
    wn = w / wsum
    ca = wn @ a
    cb = wn @ b
    aa = a - ca
    bb = b - cb
    h = (aa * wn[:, None]).T @ bb
    u, s, vt = np.linalg.svd(h)
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise DegenerateGeometryError("correspondences are collinear; rotation unconstrained")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rot, cb - rot @ ca)


def remove_statistical_outliers(cloud: PointCloud, k: int = 10, std_ratio: float = 2.0) -> PointCloud:
    """Drop points whose mean k-NN distance exceeds the global mean + std_ratio * stddev."""
    pts = cloud.points
    if pts.shape[0] <= k + 1:
        return cloud
    tree = cKDTree(pts)
    dists, _ = tree.query(pts, k=k + 1)
    mean_d = dists[:, 1:].mean(axis=1)
    cutoff = mean_d.mean() + std_ratio * mean_d.std()
    return cloud.subset(mean_d <= cutoff)


@dataclass(frozen=True)
class ICPResult:
    transform: RigidTransform
    residual: float
    iterations: int
    converged: bool
    residual_history: tuple


def icp_register(src: PointCloud, dst: PointCloud, max_iters: int = 50, tol: float = 1e-5,
                 init: RigidTransform | None = None, outlier_removal: bool = True) -> ICPResult:
    """Point-to-point ICP with statistical outlier removal up front.

    Alternates nearest-neighbor correspondence with a rigid least-squares
    update until the mean residual changes by less than tol, the iteration cap
    is hit, or the residual grows three consecutive times (divergence, which
    raises RegistrationFailedError carrying the best transform seen).
    """
    if len(src) == 0 or len(dst) == 0:
        raise ValueError("both clouds must be non-empty")
    if outlier_removal:
        src = remove_statistical_outliers(src)
        dst = remove_statistical_outliers(dst)
    tree = cKDTree(dst.points)
    t = init if init is not None else RigidTransform.identity()

    moved = t.apply(src.points)
    d, idx = tree.query(moved)
    best_res = float(d.mean())
    best_t = t
    prev_res = best_res
    history = [best_res]
    grow_streak = 0
    iters = 0
    converged = False
    for iters in range(1, max_iters + 1):
        try:
            delta = fit_rigid_transform(PointCloud(moved), PointCloud(dst.points[idx]))
        except DegenerateGeometryError:
            break
        t = delta.compose(t)
        moved = t.apply(src.points)
        d, idx = tree.query(moved)
        res = float(d.mean())
        if res < best_res:
            best_res = res
            best_t = t
            history.append(res)
        if res > prev_res + 1e-15:
            grow_streak += 1
            if grow_streak >= 3:
                raise RegistrationFailedError(
                    f"ICP diverged after {iters} iterations (residual {res:.3g})",
                    best_transform=best_t, residual=best_res)
        else:
            grow_streak = 0
        if abs(prev_res - res) < tol:
            converged = True
            prev_res = res
            break
        prev_res = res
    return ICPResult(best_t, best_res, iters, converged, tuple(history))


def erode_isolated(points: np.ndarray, mask: np.ndarray, k: int = 6) -> np.ndarray:
    """Drop marked points whose own-cloud neighborhoods are mostly unmarked.

    Lone marked points (sensor dropout, crop-boundary flicker) carry large
    lever arms into downstream fits; a genuinely moved region supports its
    members.
    """
    mask = np.asarray(mask, dtype=bool)
    n = points.shape[0]
    if not mask.any() or n < 8:
        return mask
    kk = min(k, n - 1)
    _, idx = cKDTree(points).query(points[mask], k=kk + 1)
    support = mask[idx[:, 1:]].sum(axis=1)
    out = np.zeros_like(mask)
    out[np.flatnonzero(mask)[support >= (kk + 1) // 2]] = True
    return out


def cloud_displacement(a: PointCloud, b: PointCloud) -> float:
    """Symmetric chamfer distance between two clouds."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both clouds must be non-empty")
    ta = cKDTree(a.points)
    tb = cKDTree(b.points)
    d_ab, _ = tb.query(a.points)
    d_ba, _ = ta.query(b.points)
    return 0.5 * (float(d_ab.mean()) + float(d_ba.mean()))
