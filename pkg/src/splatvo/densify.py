"""Voxel-density-driven progressive scene growth.

A new frame's (already world-transformed) point cloud is compared against the
existing Gaussian centers voxel by voxel; voxels where the frame's point
density exceeds the scene's by more than a threshold ratio receive new points.
Everything here is deterministic: subsampling uses a fixed-stride rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import PointCloud
from .splat.scene import GaussianScene


@dataclass
class DensifyConfig:
    voxel_size: float
    density_ratio_threshold: float = 4.0
    max_points_per_voxel: int = 8

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if self.density_ratio_threshold <= 0:
            raise ValueError("density_ratio_threshold must be positive")
        if self.max_points_per_voxel < 1:
            raise ValueError("max_points_per_voxel must be >= 1")


@dataclass
class VoxelGrid:
    """Occupancy counts keyed by floor-quantized integer coordinates."""

    voxel_size: float
    counts: dict[tuple[int, int, int], int] = field(default_factory=dict)

    def total(self) -> int:
        return sum(self.counts.values())


def bounding_box(points: np.ndarray | PointCloud) -> tuple[np.ndarray, np.ndarray]:
    pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
    if len(pts) == 0:
        raise ValueError("bounding_box of an empty point set")
    return pts.min(axis=0), pts.max(axis=0)


def voxel_keys(points: np.ndarray, voxel_size: float) -> np.ndarray:
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    return np.floor(np.asarray(points, dtype=np.float64) / voxel_size).astype(np.int64)


def voxelize(points: np.ndarray | PointCloud, voxel_size: float) -> VoxelGrid:
    pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
    grid = VoxelGrid(voxel_size=voxel_size)
    if len(pts) == 0:
        return grid
    keys = voxel_keys(pts, voxel_size)
    uniq, counts = np.unique(keys, axis=0, return_counts=True)
    grid.counts = {tuple(k): int(c) for k, c in zip(uniq, counts)}
    return grid


def select_new_points(
    scene: GaussianScene, frame_cloud: PointCloud, cfg: DensifyConfig
) -> PointCloud:
    """Points of ``frame_cloud`` lying in under-covered voxels.

    Scene coverage counts only Gaussian centers inside the frame cloud's
    bounding box.  A frame voxel with point count ``nf`` and scene count
    ``ns`` is selected when ``nf / max(ns, 1)`` strictly exceeds the
    threshold; selected voxels emit at most ``max_points_per_voxel`` points,
    subsampled by a fixed stride over the voxel's points in input order.
    """
    if len(frame_cloud) == 0:
        return PointCloud(np.zeros((0, 3)))
    lo, hi = bounding_box(frame_cloud)
    scene_counts: dict[tuple[int, int, int], int] = {}
    if len(scene):
        centers = scene.means
        inside = np.all((centers >= lo) & (centers <= hi), axis=1)
        scene_counts = voxelize(centers[inside], cfg.voxel_size).counts

    keys = voxel_keys(frame_cloud.points, cfg.voxel_size)
    uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    order = np.argsort(inverse, kind="stable")
    boundaries = np.cumsum(counts)[:-1]
    per_voxel = np.split(order, boundaries)

    selected: list[np.ndarray] = []
    for key, nf, members in zip(uniq, counts, per_voxel):
        ns = scene_counts.get(tuple(key), 0)
        if nf / max(ns, 1) <= cfg.density_ratio_threshold:
            continue
        m = min(int(nf), cfg.max_points_per_voxel)
        pick = np.floor(np.arange(m) * nf / m).astype(np.int64)
        selected.append(members[pick])
    if not selected:
        return PointCloud(np.zeros((0, 3)))
    idx = np.concatenate(selected)
    return PointCloud(
        frame_cloud.points[idx],
        colors=None if frame_cloud.colors is None else frame_cloud.colors[idx],
        source_pixels=None
        if frame_cloud.source_pixels is None
        else frame_cloud.source_pixels[idx],
    )


def grow_scene(scene: GaussianScene, frame_cloud: PointCloud, cfg: DensifyConfig) -> GaussianScene:
    """Append a Gaussian per selected point; existing Gaussians untouched.

    New Gaussians: color from the cloud (mid-gray without one), opacity 0.5,
    isotropic scale voxel_size / 4, identity rotation.
    """
    picked = select_new_points(scene, frame_cloud, cfg)
    n = len(picked)
    if n == 0:
        return scene.copy()
    log_scale = math.log(cfg.voxel_size / 4.0)
    quats = np.zeros((n, 4))
    quats[:, 0] = 1.0
    colors = picked.colors if picked.colors is not None else np.full((n, 3), 0.5)
    addition = GaussianScene(
        means=picked.points,
        log_scales=np.full((n, 3), log_scale),
        quaternions=quats,
        opacity_logits=np.zeros(n),
        colors=colors,
    )
    return scene.extend(addition)
