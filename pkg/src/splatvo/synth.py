"""Synthetic scenes, trajectories and ground-truth rendering.

Every test and benchmark in the suite drives the pipeline with these
analytically ray-cast scenes: textured rectangles (checker plus a smooth
seeded color wave so photometric losses have gradient everywhere), exact
z-depth, and sky pixels saturated at the far plane the way clamped monocular
depth would be.

Camera: x right, y down, z forward.  All generation is pure in its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraIntrinsics, DepthMap, ImageRGB, PoseSE3

FAR_PLANE = 100.0
SKY_COLOR = np.array([0.6, 0.7, 0.8])


@dataclass
class TexturedRect:
    """Finite textured rectangle: origin plus two edge vectors."""

    origin: np.ndarray
    edge_u: np.ndarray
    edge_v: np.ndarray
    color_a: np.ndarray
    color_b: np.ndarray
    checker: float  # checker cell size in plane-parameter units
    wave_amp: float
    wave_freq: np.ndarray  # (2,) spatial frequencies over (u, v)
    wave_phase: np.ndarray  # (3,) per-channel phase

    def colors_at(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        cu = np.floor(u / self.checker).astype(np.int64)
        cv = np.floor(v / self.checker).astype(np.int64)
        base = np.where(((cu + cv) % 2 == 0)[..., None], self.color_a, self.color_b)
        arg = self.wave_freq[0] * u + self.wave_freq[1] * v
        wave = self.wave_amp * np.sin(arg[..., None] + self.wave_phase)
        return np.clip(base + wave, 0.02, 0.98)


@dataclass
class SyntheticScene:
    kind: str
    seed: int
    rects: list[TexturedRect] = field(default_factory=list)
    has_sky: bool = True
    far_plane: float = FAR_PLANE
    sky_color: np.ndarray = field(default_factory=lambda: SKY_COLOR.copy())


def _rect(rng, origin, edge_u, edge_v, checker) -> TexturedRect:
    hue = rng.uniform(0.25, 0.9, size=3)
    other = rng.uniform(0.1, 0.75, size=3)
    return TexturedRect(
        origin=np.asarray(origin, dtype=np.float64),
        edge_u=np.asarray(edge_u, dtype=np.float64),
        edge_v=np.asarray(edge_v, dtype=np.float64),
        color_a=hue,
        color_b=other,
        checker=checker,
        wave_amp=rng.uniform(0.05, 0.12),
        wave_freq=rng.uniform(1.5, 4.0, size=2),
        wave_phase=rng.uniform(0.0, 2.0 * math.pi, size=3),
    )


def make_scene(kind: str, seed: int) -> SyntheticScene:
    """Deterministic textured geometry for one of the known scene kinds."""
    rng = np.random.default_rng(seed)
    if kind == "planes":
        n = int(rng.integers(2, 5))
        rects = []
        for i in range(n):
            z = 3.0 + 2.0 * i + rng.uniform(-0.5, 0.5)
            cx = rng.uniform(-1.5, 1.5)
            cy = rng.uniform(-1.0, 1.0)
            tilt = rng.uniform(-0.35, 0.35)
            # mostly fronto-parallel, slightly tilted about y
            eu = np.array([math.cos(tilt), 0.0, math.sin(tilt)]) * 4.0
            ev = np.array([0.0, 1.0, 0.0]) * 3.0
            origin = np.array([cx, cy, z]) - 0.5 * eu - 0.5 * ev
            rects.append(_rect(rng, origin, eu, ev, checker=0.125))
        return SyntheticScene(kind=kind, seed=seed, rects=rects, has_sky=True)
    if kind == "box_room":
        c = np.array([0.0, 0.0, 4.0])  # room center; orbit cameras stay inside
        h = 7.0
        rects = []
        axes = np.eye(3)
        for dim in range(3):
            for sign in (-1.0, 1.0):
                u_dim, v_dim = [d for d in range(3) if d != dim]
                origin = c + sign * h * axes[dim] - h * axes[u_dim] - h * axes[v_dim]
                rects.append(
                    _rect(rng, origin, 2 * h * axes[u_dim], 2 * h * axes[v_dim], checker=0.1)
                )
        return SyntheticScene(kind=kind, seed=seed, rects=rects, has_sky=False)
    if kind == "street":
        rects = []
        ground_y = 1.5
        half_w = 6.0
        depth = 120.0
        wall_top = -2.5  # y grows downward; walls span the horizon downward
        ground = _rect(
            rng,
            origin=[-half_w, ground_y, -2.0],
            edge_u=[2 * half_w, 0.0, 0.0],
            edge_v=[0.0, 0.0, depth],
            checker=0.08,
        )
        rects.append(ground)
        for sign in (-1.0, 1.0):
            rects.append(
                _rect(
                    rng,
                    origin=[sign * half_w, wall_top, -2.0],
                    edge_u=[0.0, ground_y - wall_top, 0.0],
                    edge_v=[0.0, 0.0, depth],
                    checker=0.1,
                )
            )
        # a few billboards facing the camera, offset off the lane center
        for i in range(3):
            z = 12.0 + 14.0 * i + rng.uniform(-2.0, 2.0)
            side = -1.0 if i % 2 == 0 else 1.0
            x0 = side * rng.uniform(2.0, 4.0)
            rects.append(
                _rect(
                    rng,
                    origin=[x0 - 1.2, wall_top + 0.5, z],
                    edge_u=[2.4, 0.0, 0.0],
                    edge_v=[0.0, 3.0, 0.0],
                    checker=0.15,
                )
            )
        return SyntheticScene(kind=kind, seed=seed, rects=rects, has_sky=True)
    raise ValueError(f"unknown scene kind {kind!r}")


def render_ground_truth(
    scene: SyntheticScene, pose: PoseSE3, k: CameraIntrinsics
) -> tuple[ImageRGB, DepthMap]:
    """Analytic ray-cast color and exact z-depth; sky pixels get the
    far-plane depth and the constant sky color."""
    us, vs = np.meshgrid(np.arange(k.width), np.arange(k.height))
    dirs_cam = np.stack(
        [(us - k.cx) / k.fx, (vs - k.cy) / k.fy, np.ones_like(us, dtype=np.float64)], axis=-1
    )
    dirs = dirs_cam @ pose.rotation.T  # ray parameter equals camera z-depth
    origin = pose.translation

    depth = np.full((k.height, k.width), scene.far_plane)
    color = np.tile(scene.sky_color, (k.height, k.width, 1))
    for rect in scene.rects:
        n = np.cross(rect.edge_u, rect.edge_v)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((rect.origin - origin) @ n) / denom
        rel = origin + t[..., None] * dirs - rect.origin
        gram = np.array(
            [
                [rect.edge_u @ rect.edge_u, rect.edge_u @ rect.edge_v],
                [rect.edge_u @ rect.edge_v, rect.edge_v @ rect.edge_v],
            ]
        )
        rhs = np.stack([rel @ rect.edge_u, rel @ rect.edge_v], axis=-1)
        uv = rhs @ np.linalg.inv(gram).T
        hit = (
            np.isfinite(t)
            & (t > 1e-9)
            & (t < depth)
            & (uv[..., 0] >= 0.0)
            & (uv[..., 0] <= 1.0)
            & (uv[..., 1] >= 0.0)
            & (uv[..., 1] <= 1.0)
        )
        if not hit.any():
            continue
        cols = rect.colors_at(uv[..., 0], uv[..., 1])
        depth = np.where(hit, t, depth)
        color = np.where(hit[..., None], cols, color)
    return ImageRGB(color), DepthMap(depth, k)


def _look_rotation(z_axis: np.ndarray) -> np.ndarray:
    z = z_axis / np.linalg.norm(z_axis)
    up_ref = np.array([0.0, 1.0, 0.0])
    x = np.cross(up_ref, z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


def make_trajectory(
    kind: str, n_frames: int, magnitude: float, radius: float = 4.0
) -> list[PoseSE3]:
    """Deterministic camera trajectory; the first pose is always identity.

    * ``orbit``: sweep ``magnitude`` degrees around a center ``radius`` ahead
      of the first camera, always looking at that center.
    * ``line_large_steps``: straight +z motion, exactly ``magnitude`` units
      between consecutive frames.
    * ``arc``: forward steps of ``magnitude`` with a gentle constant yaw.
    """
    if n_frames < 2:
        raise ValueError("need at least 2 frames")
    poses = []
    if kind == "orbit":
        center = np.array([0.0, 0.0, radius])
        step = math.radians(magnitude) / n_frames
        for i in range(n_frames):
            th = i * step
            pos = center + radius * np.array([math.sin(th), 0.0, -math.cos(th)])
            poses.append(PoseSE3(_look_rotation(center - pos), pos))
        return poses
    if kind == "line_large_steps":
        for i in range(n_frames):
            poses.append(PoseSE3(np.eye(3), np.array([0.0, 0.0, magnitude * i])))
        return poses
    if kind == "arc":
        yaw_step = math.radians(2.0)
        pose = PoseSE3.identity()
        for i in range(n_frames):
            poses.append(pose)
            c, s = math.cos(yaw_step), math.sin(yaw_step)
            rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
            step_pose = PoseSE3(rot, np.array([0.0, 0.0, magnitude]))
            pose = PoseSE3(
                pose.rotation @ step_pose.rotation,
                pose.rotation @ step_pose.translation + pose.translation,
            )
        return poses
    raise ValueError(f"unknown trajectory kind {kind!r}")


def default_intrinsics(resolution: int = 64, fov_deg: float = 60.0) -> CameraIntrinsics:
    f = resolution / (2.0 * math.tan(math.radians(fov_deg) / 2.0))
    c = (resolution - 1) / 2.0
    return CameraIntrinsics(fx=f, fy=f, cx=c, cy=c, width=resolution, height=resolution)
