"""Rigid-body math, pinhole projection and oriented bounding boxes.

Pose convention: a ``Pose`` called ``pose_w_c`` maps world points into the
camera frame, ``X_c = R X_w + t``.  Its inverse maps camera points back to the
world.  Twists are ordered ``[xi; omega]`` (translation part first).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import (
    AngleNearPi,
    CovarianceNotPsd,
    NonPositiveDepth,
    PixelOutOfBounds,
    TooFewPoints,
)
from .rng import SplitMix64

ORTHO_TOL = 1e-9
PI_MARGIN = 1e-6
SMALL_ANGLE = 1e-4
MIN_EXTENT = 1e-4
IOU_SAMPLES_PER_AXIS = 64


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    return a


def _check_rotation(r: np.ndarray, tol: float = ORTHO_TOL) -> None:
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise ValueError("rotation must be a finite 3x3 matrix")
    if np.linalg.norm(r.T @ r - np.eye(3)) >= tol:
        raise ValueError("rotation is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) >= tol:
        raise ValueError("rotation determinant is not +1")


def nearest_rotation(m) -> np.ndarray:
    """Project a 3x3 matrix onto SO(3) (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    return r


@dataclass(frozen=True, eq=False)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        _check_rotation(r)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m, orthonormalize: bool = False) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        r = m[:3, :3]
        if orthonormalize:
            r = nearest_rotation(r)
        return cls(r, m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        """Transform an (N, 3) array (or a single 3-vector)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    def __repr__(self):
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


@dataclass(frozen=True)
class Twist:
    xi: tuple[float, float, float]
    omega: tuple[float, float, float]

    def __post_init__(self):
        xi = tuple(float(x) for x in np.asarray(self.xi, dtype=np.float64).reshape(3))
        om = tuple(float(x) for x in np.asarray(self.omega, dtype=np.float64).reshape(3))
        if not all(math.isfinite(x) for x in xi + om):
            raise ValueError("twist components must be finite")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "omega", om)

    @classmethod
    def from_vector(cls, v) -> "Twist":
        v = np.asarray(v, dtype=np.float64).reshape(6)
        return cls(v[:3], v[3:])

    def vector(self) -> np.ndarray:
        return np.array(self.xi + self.omega, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class PoseNoiseModel:
    mean_twist: Twist
    covariance: np.ndarray

    def __post_init__(self):
        c = np.array(self.covariance, dtype=np.float64).reshape(6, 6)
        if not np.all(np.isfinite(c)) or np.max(np.abs(c - c.T)) > 1e-12:
            raise CovarianceNotPsd("covariance must be finite and symmetric")
        if np.linalg.eigvalsh(c).min() < -1e-12:
            raise CovarianceNotPsd("covariance has a negative eigenvalue")
        c.setflags(write=False)
        object.__setattr__(self, "covariance", c)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ValueError("image size must be integral")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])


@dataclass(frozen=True, eq=False)
class Obb:
    center: np.ndarray
    extents: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        c = np.array(self.center, dtype=np.float64).reshape(3)
        e = np.array(self.extents, dtype=np.float64).reshape(3)
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(e))):
            raise ValueError("box center and extents must be finite")
        if np.any(e <= 0):
            raise ValueError("box extents must be strictly positive")
        _check_rotation(r)
        for a in (c, e, r):
            a.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "extents", e)
        object.__setattr__(self, "rotation", r)

    @classmethod
    def axis_aligned(cls, center, extents) -> "Obb":
        return cls(center, extents, np.eye(3))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
        return self.center + (signs * self.extents / 2) @ self.rotation.T

    def to_local(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) @ self.rotation

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        local = self.to_local(points)
        return np.all(np.abs(local) <= self.extents / 2 + tol, axis=-1)

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        half = np.abs(self.rotation) @ (self.extents / 2)
        return self.center - half, self.center + half

    def __eq__(self, other):
        if not isinstance(other, Obb):
            return NotImplemented
        return (
            np.array_equal(self.center, other.center)
            and np.array_equal(self.extents, other.extents)
            and np.array_equal(self.rotation, other.rotation)
        )

    def __repr__(self):
        return (
            f"Obb(center={self.center.tolist()}, extents={self.extents.tolist()}, "
            f"rotation={self.rotation.tolist()})"
        )


# ---------------------------------------------------------------------------
# SE(3)


def skew(v) -> np.ndarray:
    x, y, z = _as_vec3(v)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def _so3_coefficients(theta: float) -> tuple[float, float, float]:
    """(sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3) with series near zero."""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, 1.0 / 6.0 - t2 / 120.0
    s = math.sin(theta)
    half = math.sin(theta / 2.0)
    return s / theta, 2.0 * half * half / (theta * theta), (theta - s) / theta**3


def so3_exp(omega) -> np.ndarray:
    w = skew(omega)
    theta = float(np.linalg.norm(omega))
    a, b, _ = _so3_coefficients(theta)
    return np.eye(3) + a * w + b * (w @ w)


def se3_exp(twist: Twist) -> Pose:
    """Exponential map: Rodrigues rotation, left Jacobian applied to ``xi``."""
    omega = np.array(twist.omega)
    xi = np.array(twist.xi)
    w = skew(omega)
    w2 = w @ w
    theta = float(np.linalg.norm(omega))
    a, b, c = _so3_coefficients(theta)
    r = np.eye(3) + a * w + b * w2
    v = np.eye(3) + b * w + c * w2
    return Pose(r, v @ xi)


def rotation_angle(r: np.ndarray) -> float:
    s = 0.5 * float(np.linalg.norm(vee(r - r.T)))
    c = 0.5 * (float(np.trace(r)) - 1.0)
    return math.atan2(s, c)


def se3_log(pose: Pose) -> Twist:
    r = pose.rotation
    theta = rotation_angle(r)
    if theta > math.pi - PI_MARGIN:
        raise AngleNearPi(f"rotation angle {theta!r} is within {PI_MARGIN} of pi")
    anti = vee(r - r.T)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        omega = 0.5 * (1.0 + t2 / 6.0) * anti
        d = 1.0 / 12.0 + t2 / 720.0
    else:
        omega = theta / (2.0 * math.sin(theta)) * anti
        a, b, _ = _so3_coefficients(theta)
        d = (1.0 - a / (2.0 * b)) / (theta * theta)
    w = skew(omega)
    v_inv = np.eye(3) - 0.5 * w + d * (w @ w)
    return Twist(v_inv @ pose.translation, omega)


def compose(a: Pose, b: Pose) -> Pose:
    """``a * b``: apply ``b`` first, then ``a``."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert_pose(pose: Pose) -> Pose:
    rt = pose.rotation.T
    return Pose(rt, -rt @ pose.translation)


def sample_twist(noise: PoseNoiseModel, seed: int) -> np.ndarray:
    """Draw ``mean + S z`` with ``S`` the symmetric square root of the covariance.

    ``z`` is six standard normals from ``SplitMix64(seed)`` (see ``rng``).
    """
    w, v = np.linalg.eigh(noise.covariance)
    if w.min() < -1e-12:
        raise CovarianceNotPsd("covariance has a negative eigenvalue")
    sqrt_cov = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    z = SplitMix64(seed).normals(6)
    return noise.mean_twist.vector() + sqrt_cov @ z


def perturb_pose(pose: Pose, noise: PoseNoiseModel, seed: int) -> Pose:
    twist = Twist.from_vector(sample_twist(noise, seed))
    return compose(se3_exp(twist), pose)


# ---------------------------------------------------------------------------
# camera


def _pixel_in_bounds(u: float, v: float, intr: CameraIntrinsics) -> bool:
    return 0 <= u < intr.width and 0 <= v < intr.height


def back_project(pixel: Sequence[float], depth: float, intrinsics: CameraIntrinsics) -> np.ndarray:
    u, v = float(pixel[0]), float(pixel[1])
    if not depth > 0:
        raise NonPositiveDepth(f"depth must be positive, got {depth!r}")
    if not _pixel_in_bounds(u, v, intrinsics):
        raise PixelOutOfBounds(f"pixel ({u}, {v}) outside {intrinsics.width}x{intrinsics.height}")
    return np.array(
        [(u - intrinsics.cx) / intrinsics.fx * depth, (v - intrinsics.cy) / intrinsics.fy * depth, depth]
    )


def back_project_many(uv: np.ndarray, depth: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Vectorised ``back_project`` without validation; rows of ``uv`` are (u, v)."""
    uv = np.asarray(uv, dtype=np.float64)
    d = np.asarray(depth, dtype=np.float64)
    x = (uv[:, 0] - intr.cx) / intr.fx * d
    y = (uv[:, 1] - intr.cy) / intr.fy * d
    return np.stack([x, y, d], axis=1)


def camera_to_world(point_c, pose_w_c: Pose) -> np.ndarray:
    return invert_pose(pose_w_c).apply(point_c)


def world_to_camera(point_w, pose_w_c: Pose) -> np.ndarray:
    return pose_w_c.apply(point_w)


def project_to_pixel(point_w, pose_w_c: Pose, intrinsics: CameraIntrinsics):
    """Pinhole projection; returns ``((u, v), z)`` or ``None`` if behind the camera."""
    x, y, z = pose_w_c.apply(_as_vec3(point_w))
    if z <= 0:
        return None
    u = intrinsics.fx * x / z + intrinsics.cx
    v = intrinsics.fy * y / z + intrinsics.cy
    return (float(u), float(v)), float(z)


def project_points(points_w, pose_w_c: Pose, intr: CameraIntrinsics):
    """Vectorised projection.

    Returns ``(uv, z, ok)`` where ``ok`` marks points in front of the camera
    whose projection falls inside the image.
    """
    pc = pose_w_c.apply(np.asarray(points_w, dtype=np.float64).reshape(-1, 3))
    z = pc[:, 2]
    front = z > 0
    safe_z = np.where(front, z, 1.0)
    u = intr.fx * pc[:, 0] / safe_z + intr.cx
    v = intr.fy * pc[:, 1] / safe_z + intr.cy
    uv = np.stack([u, v], axis=1)
    ok = front & (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
    return uv, z, ok


# ---------------------------------------------------------------------------
# oriented boxes


def _canonical_sign(axis: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(axis)))
    return -axis if axis[k] < 0 else axis


def _min_area_rectangle(pts2: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """Rotating-calipers minimum-area rectangle; returns two in-plane unit axes."""
    try:
        hull = ConvexHull(pts2)
    except (QhullError, ValueError):
        return None
    verts = pts2[hull.vertices]
    best = None
    for i in range(len(verts)):
        edge = verts[(i + 1) % len(verts)] - verts[i]
        n = np.linalg.norm(edge)
        if n < 1e-12:
            continue
        u = edge / n
        v = np.array([-u[1], u[0]])
        pu, pv = verts @ u, verts @ v
        area = (pu.max() - pu.min()) * (pv.max() - pv.min())
        if best is None or area < best[0] - 1e-12 * max(1.0, best[0]):
            best = (area, u, v)
    if best is None:
        return None
    return best[1], best[2]


def _refine_plane(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    basis = np.stack([a, b], axis=1)
    rect = _min_area_rectangle(points @ basis)
    if rect is None:
        return a, b
    u, v = rect
    return basis @ u, basis @ v


def _isotropic_axes(points: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    """Smallest box flush with a hull face, for clouds with isotropic covariance."""
    try:
        hull = ConvexHull(points)
    except (QhullError, ValueError):
        return fallback
    normals = {}
    for n in hull.equations[:, :3]:
        n = _canonical_sign(n / np.linalg.norm(n))
        normals.setdefault(tuple(np.round(n, 9)), n)
    best = None
    for key in sorted(normals):
        n = normals[key]
        helper = np.eye(3)[int(np.argmin(np.abs(n)))]
        a = np.cross(n, helper)
        a /= np.linalg.norm(a)
        b = np.cross(n, a)
        u, v = _refine_plane(points, a, b)
        axes = np.stack([u, v, n], axis=1)
        proj = points @ axes
        vol = float(np.prod(proj.max(axis=0) - proj.min(axis=0)))
        if best is None or vol < best[0] - 1e-12 * max(1.0, best[0]):
            best = (vol, axes)
    return fallback if best is None else best[1]


def _order_axes(points: np.ndarray, axes: np.ndarray) -> np.ndarray:
    centered = points - points.mean(axis=0)
    variances = np.var(centered @ axes, axis=0)
    tol = 1e-6 * max(float(variances.max()), 1e-300)
    order = list(np.argsort(-variances, kind="stable"))
    # group near-equal variances, then put the most z-aligned axis last
    groups: list[list[int]] = []
    for idx in order:
        if groups and abs(variances[groups[-1][0]] - variances[idx]) <= tol:
            groups[-1].append(idx)
        else:
            groups.append([idx])
    ordered = []
    for g in groups:
        g.sort(key=lambda i: (abs(axes[2, i]), -abs(axes[0, i]), -abs(axes[1, i])))
        ordered.extend(g)
    cols = [_canonical_sign(axes[:, i]) for i in ordered]
    r = np.stack(cols, axis=1)
    if np.linalg.det(r) < 0:
        r[:, 2] *= -1
    return nearest_rotation(r)


def fit_obb(points) -> Obb:
    """PCA box around a point cloud.

    Axes are covariance eigenvectors ordered by descending eigenvalue.  Where
    eigenvalues coincide the PCA basis is arbitrary, so the degenerate
    subspace is resolved with a minimum-area (2D) or hull-face (3D) search.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 4:
        raise TooFewPoints(f"need at least 4 points, got {len(pts)}")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    w, v = np.linalg.eigh(cov)  # ascending
    scale = max(float(w[-1]), 1e-300)
    tol = 1e-6 * scale
    close01 = w[1] - w[0] <= tol
    close12 = w[2] - w[1] <= tol
    axes = v.copy()
    if close01 and close12:
        if w[2] > 1e-18:
            axes = _isotropic_axes(pts, v)
    elif close12:
        if w[2] > 1e-18:
            axes[:, 1], axes[:, 2] = _refine_plane(pts, v[:, 1], v[:, 2])
    elif close01:
        if w[1] > 1e-18:
            axes[:, 0], axes[:, 1] = _refine_plane(pts, v[:, 0], v[:, 1])
    r = _order_axes(pts, axes)
    proj = pts @ r
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    extents = np.maximum(hi - lo, MIN_EXTENT)
    center = r @ ((lo + hi) / 2)
    return Obb(center, extents, r)


def fit_upright_obb(points) -> Obb:
    """Gravity-aligned box: third axis is world +z, the other two span the
    minimum-area rectangle of the points' floor projection (longer side first)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 4:
        raise TooFewPoints(f"need at least 4 points, got {len(pts)}")
    rect = _min_area_rectangle(pts[:, :2])
    if rect is None:
        u, v = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    else:
        u, v = rect
    spans = [np.ptp(pts[:, :2] @ a) for a in (u, v)]
    if spans[1] > spans[0]:
        u, v = v, u
    u = _canonical_sign(u)
    v = np.array([-u[1], u[0]])
    r = np.array([[u[0], v[0], 0.0], [u[1], v[1], 0.0], [0.0, 0.0, 1.0]])
    proj = pts @ r
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    return Obb(r @ ((lo + hi) / 2), np.maximum(hi - lo, MIN_EXTENT), r)


def centroid_distance(a: Obb, b: Obb) -> float:
    return float(np.linalg.norm(a.center - b.center))


def obbs_separated(a: Obb, b: Obb) -> bool:
    """Separating-axis test; touching boxes count as separated."""
    ra, rb = a.rotation, b.rotation
    ha, hb = a.extents / 2, b.extents / 2
    t = b.center - a.center
    axes = [ra[:, i] for i in range(3)] + [rb[:, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            c = np.cross(ra[:, i], rb[:, j])
            n = np.linalg.norm(c)
            if n > 1e-9:
                axes.append(c / n)
    for axis in axes:
        pa = float(np.sum(ha * np.abs(ra.T @ axis)))
        pb = float(np.sum(hb * np.abs(rb.T @ axis)))
        if abs(float(t @ axis)) >= pa + pb:
            return True
    return False


def _signed_permutation(m: np.ndarray, tol: float = 1e-12) -> bool:
    a = np.abs(m)
    return bool(np.all((a < tol) | (np.abs(a - 1.0) < tol)) and np.all(np.sum(a > 0.5, axis=0) == 1))


def _interval_overlap(lo_a, hi_a, lo_b, hi_b) -> float:
    return float(np.prod(np.clip(np.minimum(hi_a, hi_b) - np.maximum(lo_a, lo_b), 0.0, None)))


def _grid_hits(small: Obb, big: Obb, n: int) -> int:
    """How many of the n**3 cell centres of ``small`` lie inside ``big``.

    Counted per grid line along ``small``'s first axis: the line is clipped
    against ``big``'s three slabs and the centres inside the interval are
    counted arithmetically, so the cost is n**2 rather than n**3.
    """
    ticks = (np.arange(n) + 0.5) / n - 0.5
    e0 = small.extents[0]
    gy, gz = np.meshgrid(ticks * small.extents[1], ticks * small.extents[2], indexing="ij")
    base = small.center + np.outer(gy.ravel(), small.rotation[:, 1]) + np.outer(gz.ravel(), small.rotation[:, 2])
    q0 = big.to_local(base)  # (m, 3) line origins in big's frame
    d = big.rotation.T @ small.rotation[:, 0]
    half = big.extents / 2
    lo = np.full(len(q0), -np.inf)
    hi = np.full(len(q0), np.inf)
    for k in range(3):
        if abs(d[k]) < 1e-12:
            outside = np.abs(q0[:, k]) > half[k]
            hi[outside] = -np.inf
            continue
        s1 = (-half[k] - q0[:, k]) / d[k]
        s2 = (half[k] - q0[:, k]) / d[k]
        lo = np.maximum(lo, np.minimum(s1, s2))
        hi = np.minimum(hi, np.maximum(s1, s2))
    # centre i sits at s = (ticks[i]) * e0; invert for the index range
    with np.errstate(invalid="ignore"):
        i_min = np.ceil((lo / e0 + 0.5) * n - 0.5)
        i_max = np.floor((hi / e0 + 0.5) * n - 0.5)
    i_min = np.clip(np.nan_to_num(i_min, nan=n, neginf=0, posinf=n), 0, n)
    i_max = np.clip(np.nan_to_num(i_max, nan=-1, neginf=-1, posinf=n - 1), -1, n - 1)
    return int(np.sum(np.maximum(i_max - i_min + 1, 0)))


def obb_iou(a: Obb, b: Obb, samples_per_axis: int = IOU_SAMPLES_PER_AXIS) -> float:
    """Volumetric IoU of two oriented boxes.

    Exact when the boxes share a frame up to axis permutation/sign (this
    includes the axis-aligned case); otherwise the intersection is estimated
    on a regular ``samples_per_axis**3`` grid of cell centres spanning the
    smaller box, which makes the estimate deterministic.  Overlapping boxes
    always get a positive value, so ``iou > 0`` agrees with the exact
    separating-axis test.
    """
    if obbs_separated(a, b):
        return 0.0
    va, vb = a.volume, b.volume
    rel = a.rotation.T @ b.rotation
    if _signed_permutation(rel):
        # express b in a's frame, where both are axis-aligned
        cb = a.to_local(b.center)
        hb = np.abs(rel) @ (b.extents / 2)
        inter = _interval_overlap(-a.extents / 2, a.extents / 2, cb - hb, cb + hb)
    else:
        small, big = (a, b) if va <= vb else (b, a)
        n = int(samples_per_axis)
        hits = _grid_hits(small, big, n)
        # the boxes do overlap (SAT above), so a sliver thinner than one cell counts as half a cell
        inter = max(float(hits), 0.5) / n**3 * small.volume
    union = va + vb - inter
    if union <= 0:
        return 0.0
    return float(min(1.0, max(0.0, inter / union)))


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """World-to-camera pose for a camera at ``eye`` looking at ``target`` (x right, y down, z forward)."""
    eye = _as_vec3(eye)
    f = _as_vec3(target) - eye
    f /= np.linalg.norm(f)
    x = np.cross(f, _as_vec3(up))
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(f, np.array([0.0, 1.0, 0.0]))
    x /= np.linalg.norm(x)
    y = np.cross(f, x)
    r = np.stack([x, y, f], axis=0)
    return Pose(r, -r @ eye)


def yaw_rotation(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
