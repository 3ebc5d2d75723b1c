"""Differentiable CPU splatting: forward render and exact reverse pass."""

from __future__ import annotations

import numpy as np

from ..geometry import CameraIntrinsics, PoseSE3
from . import backend
from .project import (
    ALPHA_MAX,
    COV_DILATION,
    NEAR_PLANE,
    POWER_CUT,
    T_CUTOFF,
    backward_chain,
    project_scene,
)
from .scene import Gaussian, GaussianScene, RenderOutput, SceneGradients


def evaluate_gaussian(g: Gaussian, x) -> float:
    """Unnormalized ellipsoid density exp(-0.5 (x-mu)^T Sigma^-1 (x-mu))."""
    d = np.asarray(x, dtype=np.float64).reshape(3) - g.mu
    y = np.linalg.solve(g.covariance(), d)
    return float(np.exp(-0.5 * d @ y))


def project_gaussian(g: Gaussian, view: PoseSE3, k: CameraIntrinsics):
    """Screen-space mean, dilated 2x2 covariance, and camera depth.

    Returns None (culled) when the center sits behind the near plane.
    """
    t = view.rotation @ g.mu + view.translation
    if t[2] <= NEAR_PLANE:
        return None
    jac = np.array(
        [
            [k.fx / t[2], 0.0, -k.fx * t[0] / t[2] ** 2],
            [0.0, k.fy / t[2], -k.fy * t[1] / t[2] ** 2],
        ]
    )
    cov_cam = view.rotation @ g.covariance() @ view.rotation.T
    cov2d = jac @ cov_cam @ jac.T
    cov2d = 0.5 * (cov2d + cov2d.T) + COV_DILATION * np.eye(2)
    mean2d = np.array([k.fx * t[0] / t[2] + k.cx, k.fy * t[1] / t[2] + k.cy])
    return mean2d, cov2d, float(t[2])


def render(
    scene: GaussianScene,
    view: PoseSE3,
    k: CameraIntrinsics,
    backend_name: str | None = None,
) -> RenderOutput:
    """Front-to-back alpha compositing over a black background."""
    proj = project_scene(scene, view, k)
    kernels = backend.get_kernels(backend_name)
    color, alpha, _, touch_sorted = kernels.composite_forward(
        proj.means2d,
        proj.conics,
        proj.opacities,
        proj.colors,
        proj.bboxes,
        k.height,
        k.width,
        T_CUTOFF,
        ALPHA_MAX,
        POWER_CUT,
    )
    touch = np.zeros(len(scene), dtype=np.int64)
    touch[proj.indices] = touch_sorted
    return RenderOutput(color=color, alpha=alpha, per_gaussian_touch=touch)


def render_backward(
    scene: GaussianScene,
    view: PoseSE3,
    k: CameraIntrinsics,
    output_gradient: np.ndarray,
    mask: np.ndarray | None = None,
    backend_name: str | None = None,
) -> tuple[SceneGradients, np.ndarray]:
    """Gradients of sum(output_gradient * rendered_color) for every Gaussian
    parameter and for the view twist (left perturbation ``exp(d) @ view``).

    ``mask`` pixels marked True contribute zero gradient.
    """
    grad = np.asarray(output_gradient, dtype=np.float64)
    if grad.shape != (k.height, k.width, 3):
        raise ValueError(
            f"output_gradient shape {grad.shape} does not match {(k.height, k.width, 3)}"
        )
    if mask is not None:
        mask = np.asarray(mask)
        if mask.shape != (k.height, k.width):
            raise ValueError(f"mask shape {mask.shape} does not match image")
        grad = np.where(mask[:, :, None], 0.0, grad)
    proj = project_scene(scene, view, k)
    kernels = backend.get_kernels(backend_name)
    d_means2d, d_conics, d_opac, d_colors = kernels.composite_backward(
        proj.means2d,
        proj.conics,
        proj.opacities,
        proj.colors,
        proj.bboxes,
        np.ascontiguousarray(grad),
        T_CUTOFF,
        ALPHA_MAX,
        POWER_CUT,
    )
    return backward_chain(scene, proj, k, d_means2d, d_conics, d_opac, d_colors)
