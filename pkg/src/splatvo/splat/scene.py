"""Gaussian scene representation.

The scene stores its parameters as flat arrays (struct-of-arrays) so the
renderer and the optimizer work on contiguous data; :class:`Gaussian` is a
per-element view for single-ellipsoid APIs.

Parameterization per Gaussian: center ``mu``, per-axis ``log_scale`` (the
covariance is ``R diag(exp(2 log_scale)) R^T`` with ``R`` from the unit
quaternion), opacity as a sigmoid-domain logit, and a degree-0 RGB color.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import PoseSE3, quaternion_multiply, quaternion_to_rotation, rotation_to_quaternion


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def logit(p):
    return np.log(p / (1.0 - p))


@dataclass
class Gaussian:
    mu: np.ndarray
    log_scale: np.ndarray
    rotation_q: np.ndarray
    opacity_logit: float
    color: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64).reshape(3)
        self.log_scale = np.asarray(self.log_scale, dtype=np.float64).reshape(3)
        q = np.asarray(self.rotation_q, dtype=np.float64).reshape(4)
        self.rotation_q = q / np.linalg.norm(q)
        self.opacity_logit = float(self.opacity_logit)
        self.color = np.asarray(self.color, dtype=np.float64).reshape(3)

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))

    def covariance(self) -> np.ndarray:
        r = quaternion_to_rotation(self.rotation_q)
        return r @ np.diag(np.exp(2.0 * self.log_scale)) @ r.T


@dataclass
class GaussianScene:
    """Growable collection of Gaussians stored as parameter arrays."""

    means: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    log_scales: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    quaternions: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    opacity_logits: np.ndarray = field(default_factory=lambda: np.zeros(0))
    colors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    fit_loss_history: list | None = None

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64).reshape(-1, 3)
        n = len(self.means)
        self.log_scales = np.asarray(self.log_scales, dtype=np.float64).reshape(n, 3)
        self.quaternions = np.asarray(self.quaternions, dtype=np.float64).reshape(n, 4)
        self.opacity_logits = np.asarray(self.opacity_logits, dtype=np.float64).reshape(n)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(n, 3)

    def __len__(self) -> int:
        return len(self.means)

    def __getitem__(self, i: int) -> Gaussian:
        return Gaussian(
            self.means[i],
            self.log_scales[i],
            self.quaternions[i],
            self.opacity_logits[i],
            self.colors[i],
        )

    @staticmethod
    def from_gaussians(gaussians: list[Gaussian]) -> "GaussianScene":
        if not gaussians:
            return GaussianScene()
        return GaussianScene(
            means=np.stack([g.mu for g in gaussians]),
            log_scales=np.stack([g.log_scale for g in gaussians]),
            quaternions=np.stack([g.rotation_q for g in gaussians]),
            opacity_logits=np.array([g.opacity_logit for g in gaussians]),
            colors=np.stack([g.color for g in gaussians]),
        )

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    def copy(self) -> "GaussianScene":
        return GaussianScene(
            self.means.copy(),
            self.log_scales.copy(),
            self.quaternions.copy(),
            self.opacity_logits.copy(),
            self.colors.copy(),
        )

    def normalize_quaternions(self) -> None:
        norms = np.linalg.norm(self.quaternions, axis=1, keepdims=True)
        self.quaternions /= norms

    def extend(self, other: "GaussianScene") -> "GaussianScene":
        """New scene with ``other`` appended; existing Gaussians untouched."""
        return GaussianScene(
            np.concatenate([self.means, other.means]),
            np.concatenate([self.log_scales, other.log_scales]),
            np.concatenate([self.quaternions, other.quaternions]),
            np.concatenate([self.opacity_logits, other.opacity_logits]),
            np.concatenate([self.colors, other.colors]),
        )

    def subset(self, keep: np.ndarray) -> "GaussianScene":
        return GaussianScene(
            self.means[keep],
            self.log_scales[keep],
            self.quaternions[keep],
            self.opacity_logits[keep],
            self.colors[keep],
        )

    def transformed(self, pose: PoseSE3) -> "GaussianScene":
        """Scene rigidly moved by ``pose`` (means and orientations)."""
        q_pose = rotation_to_quaternion(pose.rotation)
        quats = np.stack([quaternion_multiply(q_pose, q) for q in self.quaternions]) if len(self) else self.quaternions.copy()
        return GaussianScene(
            pose.apply(self.means),
            self.log_scales.copy(),
            quats,
            self.opacity_logits.copy(),
            self.colors.copy(),
        )


@dataclass
class SceneGradients:
    """Per-parameter gradients matching a scene's array layout."""

    means: np.ndarray
    log_scales: np.ndarray
    quaternions: np.ndarray
    opacity_logits: np.ndarray
    colors: np.ndarray

    @staticmethod
    def zeros(n: int) -> "SceneGradients":
        return SceneGradients(
            np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 4)), np.zeros(n), np.zeros((n, 3))
        )


@dataclass
class RenderOutput:
    color: np.ndarray
    alpha: np.ndarray
    per_gaussian_touch: np.ndarray | None = None
