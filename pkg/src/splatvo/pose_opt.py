"""Two-step per-frame camera tracking.

For each adjacent frame pair: overfit a Gaussian set to the first frame
(centers frozen, everything else free), coarse-initialize the relative pose
by registering the lifted clouds, then refine the pose by minimizing the
sky-masked L1 error of rendering those Gaussians into the second frame.
Relative poses chain into the trajectory with the first frame at identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from . import gicp
from .errors import SplatVoError
from .geometry import (
    CameraIntrinsics,
    DepthMap,
    ImageRGB,
    PointCloud,
    PoseSE3,
    Twist,
    chain_poses,
    compose,
    compute_sky_mask,
    exp_map,
    lift_depth,
    log_map,
)
from .losses import l1_loss, rgb_loss
from .splat import GaussianScene, render, render_backward


@dataclass
class OptimizerConfig:
    fit_iterations: int = 300
    refine_iterations: int = 200
    test_fit_iterations: int = 200
    lift_stride: int = 2
    lr_means: float = 1e-3
    lr_log_scales: float = 5e-3
    lr_quaternions: float = 1e-3
    lr_opacities: float = 5e-2
    lr_colors: float = 2.5e-2
    lr_twist_rot: float = 1e-3
    lr_twist_trans: float = 1e-3
    twist_decay_at: float = 0.7  # fraction of iterations, then translation lr x0.1
    twist_decay_factor: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    rgb_lambda: float = 0.2
    convergence_window: int = 60  # stop when best loss stalls this long (0 = never)

    def __post_init__(self):
        if self.fit_iterations < 0 or self.refine_iterations < 0:
            raise ValueError("iteration counts must be >= 0")
        for name in ("lr_means", "lr_log_scales", "lr_quaternions", "lr_opacities",
                     "lr_colors", "lr_twist_rot", "lr_twist_trans"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class FramePair:
    image_t: ImageRGB
    image_t1: ImageRGB
    depth_t: DepthMap
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        shape = (self.intrinsics.height, self.intrinsics.width)
        if self.image_t.values.shape[:2] != shape or self.image_t1.values.shape[:2] != shape:
            raise ValueError("frame pair dimensions do not match intrinsics")
        if self.depth_t.values.shape != shape:
            raise ValueError("depth dimensions do not match intrinsics")


class Adam:
    """Per-array first-order moment optimizer (decay 0.9 / 0.999)."""

    def __init__(self, lrs: dict[str, float], beta1=0.9, beta2=0.999, eps=1e-8):
        self.lrs = dict(lrs)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr_scale: dict[str, float] | None = None):
        """Returns update arrays to *add* to each parameter."""
        self.t += 1
        out = {}
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            mhat = self.m[name] / (1 - self.beta1**self.t)
            vhat = self.v[name] / (1 - self.beta2**self.t)
            lr = self.lrs[name] * (1.0 if lr_scale is None else lr_scale.get(name, 1.0))
            out[name] = -lr * mhat / (np.sqrt(vhat) + self.eps)
        return out


def init_scene_from_cloud(cloud: PointCloud, fallback_color=0.5) -> GaussianScene:
    """Gaussians at the cloud points: isotropic scale from nearest-neighbor
    spacing, opacity 0.5, identity rotation, colors from the cloud."""
    n = len(cloud)
    if n == 0:
        return GaussianScene()
    if n >= 2:
        tree = cKDTree(cloud.points)
        dist, _ = tree.query(cloud.points, k=2)
        spacing = np.maximum(dist[:, 1], 1e-6)
    else:
        spacing = np.ones(1)
    quats = np.zeros((n, 4))
    quats[:, 0] = 1.0
    colors = cloud.colors if cloud.colors is not None else np.full((n, 3), fallback_color)
    return GaussianScene(
        means=cloud.points.copy(),
        log_scales=np.log(spacing)[:, None] * np.ones((1, 3)),
        quaternions=quats,
        opacity_logits=np.zeros(n),
        colors=np.clip(colors, 0.0, 1.0),
    )


_SCENE_GROUPS = ("log_scales", "quaternions", "opacity_logits", "colors")


def optimize_scene(
    scene: GaussianScene,
    targets: list[tuple[ImageRGB, PoseSE3]],
    k: CameraIntrinsics,
    cfg: OptimizerConfig,
    iterations: int,
    optimize_means: bool = False,
) -> list[float]:
    """Adam loop over Gaussian parameters against one or more target views
    (round-robin when several).  Mutates ``scene``; returns the loss trace."""
    groups = _SCENE_GROUPS + (("means",) if optimize_means else ())
    lrs = {
        "means": cfg.lr_means,
        "log_scales": cfg.lr_log_scales,
        "quaternions": cfg.lr_quaternions,
        "opacity_logits": cfg.lr_opacities,
        "colors": cfg.lr_colors,
    }
    adam = Adam({g: lrs[g] for g in groups}, cfg.beta1, cfg.beta2, cfg.adam_eps)
    history: list[float] = []
    for it in range(iterations):
        image, pose = targets[it % len(targets)]
        view = pose.inverse()
        out = render(scene, view, k)
        loss, grad_img = rgb_loss(out.color, image.values, cfg.rgb_lambda)
        history.append(loss)
        grads, _ = render_backward(scene, view, k, grad_img)
        updates = adam.step({g: getattr(grads, g) for g in groups})
        for g, upd in updates.items():
            getattr(scene, g)[...] += upd
        scene.normalize_quaternions()
        np.clip(scene.colors, 0.0, 1.0, out=scene.colors)
    return history


def fit_frame_gaussians(
    image: ImageRGB, depth: DepthMap, cfg: OptimizerConfig
) -> GaussianScene:
    """Overfit a Gaussian set to a single frame under the identity pose.

    Centers stay frozen at the lifted depth points; rotation, scale, color
    and opacity are optimized with the weighted L1 + D-SSIM loss.  The loss
    trace is recorded on the returned scene.
    """
    cloud = lift_depth(depth, stride=cfg.lift_stride, image=image)
    scene = init_scene_from_cloud(cloud)
    history = optimize_scene(
        scene, [(image, PoseSE3.identity())], depth.intrinsics, cfg,
        cfg.fit_iterations, optimize_means=False,
    )
    scene.fit_loss_history = history
    return scene


def view_twist_grad_to_pose_twist_grad(grad6: np.ndarray, view: PoseSE3) -> np.ndarray:
    """Convert a view-transform left-perturbation gradient into the gradient
    for the camera pose's left perturbation (pose = view^-1)."""
    r = view.rotation
    t = view.translation
    g_omega, g_v = grad6[:3], grad6[3:]
    out = np.empty(6)
    out[:3] = -r.T @ (g_omega - np.cross(t, g_v))
    out[3:] = -r.T @ g_v
    return out


def _optimize_pose(
    scene: GaussianScene,
    target: np.ndarray,
    k: CameraIntrinsics,
    init: PoseSE3,
    cfg: OptimizerConfig,
    iterations: int,
    mask: np.ndarray | None,
    lam: float,
) -> tuple[PoseSE3, list[float]]:
    """Shared pose-only optimization: best-loss iterate over a twist walk."""

    def loss_at(pose: PoseSE3):
        out = render(scene, pose.inverse(), k)
        if lam == 0.0:
            return l1_loss(out.color, target, mask)
        return rgb_loss(out.color, target, lam, mask)

    pose = init
    val, grad_img = loss_at(pose)
    best_loss, best_pose = val, pose
    history = [val]
    adam = Adam(
        {"rot": cfg.lr_twist_rot, "trans": cfg.lr_twist_trans},
        cfg.beta1, cfg.beta2, cfg.adam_eps,
    )
    since_best = 0
    for it in range(iterations):
        view = pose.inverse()
        _, view_twist = render_backward(scene, view, k, grad_img, mask=mask)
        pose_twist = view_twist_grad_to_pose_twist_grad(view_twist, view)
        decay = cfg.twist_decay_factor if it >= cfg.twist_decay_at * iterations else 1.0
        upd = adam.step(
            {"rot": pose_twist[:3], "trans": pose_twist[3:]}, {"trans": decay}
        )
        step = Twist(upd["rot"], upd["trans"])
        pose = compose(exp_map(step), pose).reorthonormalized()
        val, grad_img = loss_at(pose)
        history.append(val)
        if val < best_loss:
            best_loss, best_pose = val, pose
            since_best = 0
        else:
            since_best += 1
            if cfg.convergence_window and since_best >= cfg.convergence_window:
                break
    return best_pose, history


def estimate_relative_pose(
    g_t: GaussianScene,
    pair: FramePair,
    init: PoseSE3,
    sky: np.ndarray | None,
    cfg: OptimizerConfig,
) -> PoseSE3:
    """Refine the relative camera pose of frame t+1 in frame t's coordinates
    by minimizing the sky-masked L1 rendering error against image t+1.

    Returns the best-loss iterate, never worse than ``init``.
    """
    pose, _ = _optimize_pose(
        g_t, pair.image_t1.values, pair.intrinsics, init, cfg,
        cfg.refine_iterations, mask=sky, lam=0.0,
    )
    return pose


def fit_test_pose(
    scene: GaussianScene,
    test_image: ImageRGB,
    intrinsics: CameraIntrinsics,
    init: PoseSE3,
    cfg: OptimizerConfig,
) -> PoseSE3:
    """Camera-only fit of a frozen scene to a held-out view."""
    if len(scene) == 0:
        raise ValueError("cannot fit a test pose against an empty scene")
    pose, _ = _optimize_pose(
        scene, test_image.values, intrinsics, init, cfg,
        cfg.test_fit_iterations, mask=None, lam=cfg.rgb_lambda,
    )
    return pose


@dataclass
class TrackingConfig:
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    gicp: gicp.GicpConfig = field(default_factory=gicp.GicpConfig)
    use_gicp: bool = True
    use_sky_mask: bool = True
    gicp_stride: int = 2
    sky_epsilon: float = 1e-6


@dataclass
class PairDiagnostics:
    pair_index: int
    gicp_used: bool
    gicp_converged: bool
    gicp_rot: np.ndarray
    gicp_trans: np.ndarray
    init_loss: float
    final_loss: float
    iterations: int

    def as_line(self) -> str:
        fmt = lambda v: ",".join(f"{x:.9g}" for x in v)
        return (
            f"pair={self.pair_index} gicp_used={int(self.gicp_used)} "
            f"gicp_converged={int(self.gicp_converged)} gicp_rot={fmt(self.gicp_rot)} "
            f"gicp_trans={fmt(self.gicp_trans)} init_loss={self.init_loss:.9g} "
            f"final_loss={self.final_loss:.9g} iters={self.iterations}"
        )


def track_sequence(
    frames: list[tuple[ImageRGB, DepthMap]],
    intrinsics: CameraIntrinsics,
    cfg: TrackingConfig,
) -> tuple[list[PoseSE3], list[PairDiagnostics]]:
    """Estimate camera poses for a frame sequence (first frame = identity).

    Per adjacent pair: sky mask, single-frame Gaussian fit, cloud lifting and
    registration for the pose init, then photometric refinement.  A failing
    pair aborts with the frame index attached.
    """
    if len(frames) < 2:
        raise ValueError("need at least 2 frames")
    relatives: list[PoseSE3] = []
    diags: list[PairDiagnostics] = []
    for t in range(len(frames) - 1):
        image_t, depth_t = frames[t]
        image_t1, depth_t1 = frames[t + 1]
        try:
            sky_t = (
                compute_sky_mask(depth_t, cfg.sky_epsilon) if cfg.use_sky_mask else None
            )
            g_t = fit_frame_gaussians(image_t, depth_t, cfg.optimizer)
            init = PoseSE3.identity()
            converged = False
            if cfg.use_gicp:
                exclude_t = sky_t if cfg.use_sky_mask else None
                exclude_t1 = (
                    compute_sky_mask(depth_t1, cfg.sky_epsilon) if cfg.use_sky_mask else None
                )
                cloud_t = lift_depth(depth_t, stride=cfg.gicp_stride, exclude=exclude_t)
                cloud_t1 = lift_depth(depth_t1, stride=cfg.gicp_stride, exclude=exclude_t1)
                result = gicp.register(cloud_t1, cloud_t, cfg.gicp)
                init = result.transform
                converged = result.converged
            pair = FramePair(image_t, image_t1, depth_t, intrinsics)
            init_out = render(g_t, init.inverse(), intrinsics)
            init_loss = l1_loss(init_out.color, image_t1.values, sky_t)[0]
            rel, history = _optimize_pose(
                g_t, image_t1.values, intrinsics, init, cfg.optimizer,
                cfg.optimizer.refine_iterations, mask=sky_t, lam=0.0,
            )
        except SplatVoError as exc:
            raise type(exc)(f"frame pair {t}->{t + 1}: {exc}") from exc
        twist = _safe_log(init)
        relatives.append(rel)
        diags.append(
            PairDiagnostics(
                pair_index=t,
                gicp_used=cfg.use_gicp,
                gicp_converged=converged,
                gicp_rot=twist.omega,
                gicp_trans=twist.v,
                init_loss=init_loss,
                final_loss=min(history),
                iterations=len(history) - 1,
            )
        )
    return chain_poses(relatives), diags


def _safe_log(pose: PoseSE3) -> Twist:
    try:
        return log_map(pose)
    except SplatVoError:
        return Twist(np.full(3, np.nan), pose.translation)
