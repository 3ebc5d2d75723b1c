"""Rigid transforms, camera model, depth lifting and pose chaining.

Conventions used throughout the package:

* ``PoseSE3`` is camera-to-world: ``x_world = R @ x_cam + t``.  The renderer's
  view transform is the inverse of a camera pose.
* A twist is the 6-vector ``(omega, v)``: axis-angle rotation part plus the
  translation part of the SE(3) exponential (the V-matrix acts on ``v``).
* Pixel ``(u, v)`` with depth ``z`` lifts to the camera-frame point
  ``((u - cx) z / fx, (v - cy) z / fy, z)``; pixel centers sit on integer
  coordinates, ``u`` grows to the right, ``v`` grows downward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRotationError

_SMALL_ANGLE = 1e-8


def _skew(w: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


@dataclass(frozen=True)
class Twist:
    """se(3) coordinates: rotation part ``omega`` (radians), translation part ``v``."""

    omega: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=np.float64).reshape(3))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=np.float64).reshape(3))

    @staticmethod
    def zero() -> "Twist":
        return Twist(np.zeros(3), np.zeros(3))

    @staticmethod
    def from_vector(x) -> "Twist":
        x = np.asarray(x, dtype=np.float64).reshape(6)
        return Twist(x[:3], x[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.omega, self.v])


@dataclass(frozen=True)
class PoseSE3:
    """Rigid transform with a 3x3 rotation matrix and a translation vector."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        )
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3)
        )

    @staticmethod
    def identity() -> "PoseSE3":
        return PoseSE3(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m) -> "PoseSE3":
        m = np.asarray(m, dtype=np.float64)
        return PoseSE3(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array (or a single 3-vector) of points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "PoseSE3":
        rt = self.rotation.T
        return PoseSE3(rt, -rt @ self.translation)

    def reorthonormalized(self) -> "PoseSE3":
        """Project the rotation back onto SO(3) (polar decomposition)."""
        u, _, vt = np.linalg.svd(self.rotation)
        r = u @ vt
        if np.linalg.det(r) < 0:
            u[:, -1] = -u[:, -1]
            r = u @ vt
        return PoseSE3(r, self.translation)


def compose(a: PoseSE3, b: PoseSE3) -> PoseSE3:
    """Pose applying ``b`` first, then ``a`` (matrix product ``a @ b``)."""
    return PoseSE3(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def _rotation_exp(omega: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(omega))
    k = _skew(omega)
    k2 = k @ k
    if theta < _SMALL_ANGLE:
        return np.eye(3) + k + 0.5 * k2
    s, c = math.sin(theta), math.cos(theta)
    return np.eye(3) + (s / theta) * k + ((1.0 - c) / theta**2) * k2


def _v_matrix(omega: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(omega))
    k = _skew(omega)
    k2 = k @ k
    if theta < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * k + k2 / 6.0
    t2 = theta * theta
    a = (1.0 - math.cos(theta)) / t2
    b = (theta - math.sin(theta)) / (t2 * theta)
    return np.eye(3) + a * k + b * k2


def exp_map(t: Twist) -> PoseSE3:
    """SE(3) exponential: Rodrigues rotation plus V-matrix translation."""
    vec = t.as_vector()
    if not np.all(np.isfinite(vec)):
        raise ValueError("twist components must be finite")
    return PoseSE3(_rotation_exp(t.omega), _v_matrix(t.omega) @ t.v)


def log_map(p: PoseSE3) -> Twist:
    """Inverse of :func:`exp_map`; rejects rotations with angle within 1e-5
    of pi, where the axis is numerically unrecoverable."""
    r = p.rotation
    cos_theta = min(1.0, max(-1.0, (np.trace(r) - 1.0) / 2.0))
    theta = math.acos(cos_theta)
    if theta >= math.pi - 1e-5:
        raise DegenerateRotationError(
            f"rotation angle {theta:.9f} rad is too close to pi for log_map"
        )
    if theta < _SMALL_ANGLE:
        omega = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    else:
        scale = theta / (2.0 * math.sin(theta))
        omega = scale * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    v = np.linalg.solve(_v_matrix(omega), p.translation)
    return Twist(omega, v)


def chain_poses(relatives: list[PoseSE3]) -> list[PoseSE3]:
    """Absolute poses from adjacent-frame relatives; first pose is identity.

    ``relatives[i]`` is the pose of frame ``i+1`` expressed in frame ``i``
    (camera-to-world), so ``absolutes[i] = absolutes[i-1] @ relatives[i-1]``.
    """
    absolutes = [PoseSE3.identity()]
    for rel in relatives:
        absolutes.append(compose(absolutes[-1], rel))
    return absolutes


def rotation_to_quaternion(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) for a rotation matrix."""
    r = np.asarray(r, dtype=np.float64)
    trace = r[0, 0] + r[1, 1] + r[2, 2]
    if trace > 0.0:
        s = math.sqrt(trace + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array(
            [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        )
    elif r[1, 1] > r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array(
            [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array(
            [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
        )
    return q / np.linalg.norm(q)


def quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    """Rotation matrix for a quaternion (w, x, y, z); normalizes first."""
    q = np.asarray(q, dtype=np.float64).reshape(4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quaternion_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def project(self, points_cam: np.ndarray) -> np.ndarray:
        """Pinhole projection of camera-frame points (N, 3) to pixels (N, 2)."""
        p = np.asarray(points_cam, dtype=np.float64)
        z = p[..., 2]
        return np.stack(
            [self.fx * p[..., 0] / z + self.cx, self.fy * p[..., 1] / z + self.cy], axis=-1
        )


@dataclass(frozen=True)
class ImageRGB:
    """H x W x 3 float image with values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 3:
            raise ValueError("image must be H x W x 3")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DepthMap:
    """H x W grid of positive depths along the camera z axis."""

    values: np.ndarray
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("depth map must be 2-D")
        if v.shape != (self.intrinsics.height, self.intrinsics.width):
            raise ValueError("depth dimensions do not match intrinsics")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("depth values must be finite and positive")
        object.__setattr__(self, "values", v)


@dataclass
class PointCloud:
    """N x 3 positions with optional per-point colors and source pixels."""

    points: np.ndarray
    colors: np.ndarray | None = None
    source_pixels: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point positions must be finite")
        n = len(self.points)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(self.colors) != n:
                raise ValueError("colors length does not match points")
        if self.source_pixels is not None:
            self.source_pixels = np.asarray(self.source_pixels, dtype=np.float64).reshape(-1, 2)
            if len(self.source_pixels) != n:
                raise ValueError("source_pixels length does not match points")

    def __len__(self) -> int:
        return len(self.points)


def lift_depth(
    d: DepthMap,
    pose: PoseSE3 | None = None,
    stride: int = 1,
    image: ImageRGB | None = None,
    exclude: np.ndarray | None = None,
) -> PointCloud:
    """Back-project a depth map to a point cloud in world coordinates.

    ``stride`` subsamples pixels on a regular grid starting at (0, 0).
    ``image`` supplies per-point colors; ``exclude`` is an optional boolean
    H x W mask of pixels to drop (e.g. sky).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    k = d.intrinsics
    if image is not None and image.values.shape[:2] != d.values.shape:
        raise ValueError("image dimensions do not match depth map")
    if exclude is not None and exclude.shape != d.values.shape:
        raise ValueError("exclude mask dimensions do not match depth map")
    vs = np.arange(0, k.height, stride)
    us = np.arange(0, k.width, stride)
    uu, vv = np.meshgrid(us, vs)
    z = d.values[vv, uu]
    x = (uu - k.cx) * z / k.fx
    y = (vv - k.cy) * z / k.fy
    pts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    pix = np.stack([uu, vv], axis=-1).reshape(-1, 2).astype(np.float64)
    colors = None
    if image is not None:
        colors = image.values[vv, uu].reshape(-1, 3)
    if exclude is not None:
        keep = ~exclude[vv, uu].reshape(-1)
        pts = pts[keep]
        pix = pix[keep]
        if colors is not None:
            colors = colors[keep]
    if pose is not None:
        pts = pose.apply(pts)
    return PointCloud(pts, colors=colors, source_pixels=pix)


def transform_points(pose: PoseSE3, pcd: PointCloud) -> PointCloud:
    """Apply a rigid transform to every point; metadata is preserved."""
    return PointCloud(
        pose.apply(pcd.points),
        colors=None if pcd.colors is None else pcd.colors.copy(),
        source_pixels=None if pcd.source_pixels is None else pcd.source_pixels.copy(),
    )


SKY_EPSILON = 1e-6


def compute_sky_mask(d: DepthMap, epsilon: float = SKY_EPSILON) -> np.ndarray:
    """True where depth sits at the saturated maximum (relative tolerance).

    Marked pixels are *excluded* from pose-optimization losses.  A constant
    depth map marks the whole image.
    """
    dmax = float(d.values.max())
    return d.values >= dmax - epsilon * dmax
