"""Generalized-ICP registration (plane-to-plane) for coarse pose initialization.

Per-point covariances come from the k-nearest-neighbor scatter with
eigenvalues regularized to (1, 1, plane_epsilon); the registration minimizes
the Mahalanobis point-pair distance with Gauss-Newton over a twist increment,
applying Levenberg-style damping and step backtracking so the per-iteration
cost never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InsufficientPointsError, RegistrationError
from .geometry import PointCloud, PoseSE3, Twist, compose, exp_map

_ILL_CONDITIONED = 1e8


@dataclass
class GicpConfig:
    k_neighbors: int = 20
    max_iterations: int = 50
    rotation_epsilon: float = 1e-4
    translation_epsilon: float = 1e-4
    max_correspondence_distance: float | None = None  # None: 20% of target bbox diagonal
    plane_epsilon: float = 1e-3
    max_source_points: int = 20000

    def __post_init__(self):
        if self.k_neighbors < 4:
            raise ValueError("k_neighbors must be >= 4")
        if self.rotation_epsilon <= 0 or self.translation_epsilon <= 0:
            raise ValueError("epsilons must be positive")
        if self.max_correspondence_distance is not None and self.max_correspondence_distance <= 0:
            raise ValueError("max_correspondence_distance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class RegistrationResult:
    transform: PoseSE3
    converged: bool
    iterations: int
    final_cost: float
    inlier_fraction: float
    # (cost before step, cost after step) per iteration, fixed correspondences
    step_costs: list[tuple[float, float]] = field(default_factory=list)


def estimate_covariances(pcd: PointCloud, k: int, plane_epsilon: float) -> np.ndarray:
    """Regularized neighborhood covariances, one 3x3 matrix per point."""
    pts = pcd.points if isinstance(pcd, PointCloud) else np.asarray(pcd, dtype=np.float64)
    n = len(pts)
    if n < k:
        raise InsufficientPointsError(f"need at least k={k} points, got {n}")
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k)
    neigh = pts[idx]  # (n, k, 3)
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    w, v = np.linalg.eigh(cov)  # ascending eigenvalues
    reg = np.array([plane_epsilon, 1.0, 1.0])
    return np.einsum("nij,j,nkj->nik", v, reg, v)


def _skew_batch(q: np.ndarray) -> np.ndarray:
    out = np.zeros((len(q), 3, 3))
    out[:, 0, 1] = -q[:, 2]
    out[:, 0, 2] = q[:, 1]
    out[:, 1, 0] = q[:, 2]
    out[:, 1, 2] = -q[:, 0]
    out[:, 2, 0] = -q[:, 1]
    out[:, 2, 1] = q[:, 0]
    return out


def register(
    source: PointCloud,
    target: PointCloud,
    config: GicpConfig | None = None,
    init: PoseSE3 | None = None,
) -> RegistrationResult:
    """Estimate the source-to-target rigid transform.

    Returns the best transform found even when not converged; raises
    RegistrationError (carrying the last estimate) only when an iteration
    finds no correspondences at all.
    """
    config = config or GicpConfig()
    init = init or PoseSE3.identity()
    src_all = source.points
    tgt = target.points
    if len(src_all) < config.k_neighbors or len(tgt) < config.k_neighbors:
        raise InsufficientPointsError(
            f"both clouds need >= {config.k_neighbors} points "
            f"(got {len(src_all)} and {len(tgt)})"
        )
    if len(src_all) > config.max_source_points:
        step = int(np.ceil(len(src_all) / config.max_source_points))
        src = src_all[::step]
    else:
        src = src_all

    cov_src = estimate_covariances(PointCloud(src), config.k_neighbors, config.plane_epsilon)
    cov_tgt = estimate_covariances(target, config.k_neighbors, config.plane_epsilon)
    tree = cKDTree(tgt)
    mcd = config.max_correspondence_distance
    if mcd is None:
        extent = tgt.max(axis=0) - tgt.min(axis=0)
        mcd = 0.2 * float(np.linalg.norm(extent))

    pose = init
    converged = False
    step_costs: list[tuple[float, float]] = []
    iterations = 0
    n_inlier = 0

    for iterations in range(1, config.max_iterations + 1):
        src_tf = pose.apply(src)
        dist, nn = tree.query(src_tf, k=1, distance_upper_bound=mcd)
        valid = np.isfinite(dist)
        n_inlier = int(valid.sum())
        if n_inlier == 0:
            raise RegistrationError(
                "no correspondences within max_correspondence_distance", last_estimate=pose
            )
        q = src_tf[valid]
        r = tgt[nn[valid]] - q
        rot = pose.rotation
        m_inv = cov_tgt[nn[valid]] + np.einsum("ij,njk,lk->nil", rot, cov_src[valid], rot)
        weights = np.linalg.inv(m_inv)

        cost_pre = float(np.einsum("ni,nij,nj->", r, weights, r)) / n_inlier

        jac = np.zeros((n_inlier, 3, 6))
        jac[:, :, :3] = -_skew_batch(q)
        jac[:, :, 3:] = np.eye(3)
        wj = np.einsum("nij,njk->nik", weights, jac)
        h = np.einsum("nji,njk->ik", jac, wj)
        g = np.einsum("nij,ni->j", wj, r)

        lam = 0.0
        if np.linalg.cond(h) > _ILL_CONDITIONED:
            lam = 1e-6
        accepted = None
        for _ in range(9):
            h_damped = h + lam * np.diag(np.diag(h)) if lam > 0 else h
            try:
                xi = np.linalg.solve(h_damped, g)
            except np.linalg.LinAlgError:
                lam = max(lam, 1e-6) * 10.0
                continue
            step = exp_map(Twist(xi[:3], xi[3:]))
            cand_pose = compose(step, pose).reorthonormalized()
            r_new = tgt[nn[valid]] - cand_pose.apply(src[valid])
            cost_post = float(np.einsum("ni,nij,nj->", r_new, weights, r_new)) / n_inlier
            if cost_post <= cost_pre:
                accepted = (xi, cand_pose, cost_post)
                break
            lam = max(lam, 1e-6) * 10.0
        if accepted is None:
            # no decreasing step found; keep the current estimate
            break
        xi, pose, cost_post = accepted
        step_costs.append((cost_pre, cost_post))
        if (
            np.linalg.norm(xi[:3]) < config.rotation_epsilon
            and np.linalg.norm(xi[3:]) < config.translation_epsilon
        ):
            converged = True
            break

    src_tf = pose.apply(src)
    dist, nn = tree.query(src_tf, k=1, distance_upper_bound=mcd)
    valid = np.isfinite(dist)
    final_cost = np.inf
    if valid.any():
        q = src_tf[valid]
        r = tgt[nn[valid]] - q
        rot = pose.rotation
        m_inv = cov_tgt[nn[valid]] + np.einsum("ij,njk,lk->nil", rot, cov_src[valid], rot)
        weights = np.linalg.inv(m_inv)
        final_cost = float(np.einsum("ni,nij,nj->", r, weights, r)) / int(valid.sum())

    return RegistrationResult(
        transform=pose,
        converged=converged,
        iterations=iterations,
        final_cost=final_cost,
        inlier_fraction=float(valid.sum()) / len(src),
        step_costs=step_costs,
    )
