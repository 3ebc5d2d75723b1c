"""Projection of 3D Gaussians to screen space, with the exact reverse pass.

Forward: camera-space mean ``t = M mu + t_w`` (``M``, ``t_w`` from the view
transform, i.e. the inverse of the camera pose), pinhole projection for the
2D mean, and the linearized covariance ``cov2d = J M Sigma M^T J^T + dil*I``
with ``J`` the projection Jacobian at ``t``.  Gaussians behind the near
plane or whose screen-space support misses the image are culled; survivors
are sorted by camera depth (stable, so equal depths keep input order).

The support radius comes from the compositing kernels' power cutoff: pixels
with ``0.5 d^T cov2d^{-1} d > POWER_CUT`` contribute below 1e-13 and are
skipped, so a bounding box at ``sqrt(2 * POWER_CUT * var)`` loses nothing
measurable and keeps analytic gradients consistent with finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import CameraIntrinsics, PoseSE3
from .scene import GaussianScene, SceneGradients

NEAR_PLANE = 0.01
COV_DILATION = 0.3
POWER_CUT = 30.0
T_CUTOFF = 1e-4
ALPHA_MAX = 0.99


@dataclass
class ProjectedScene:
    """Depth-sorted screen-space Gaussians plus intermediates for backward."""

    indices: np.ndarray        # (M,) original gaussian index per sorted entry
    means2d: np.ndarray        # (M, 2)
    conics: np.ndarray         # (M, 3) inverse-cov entries (a, b, c)
    opacities: np.ndarray      # (M,)
    colors: np.ndarray         # (M, 3)
    bboxes: np.ndarray         # (M, 4) int32 inclusive x0, x1, y0, y1
    depths: np.ndarray         # (M,)
    t_cam: np.ndarray          # (M, 3)
    cov2d: np.ndarray          # (M, 2, 2) dilated
    jac: np.ndarray            # (M, 2, 3)
    cov_cam: np.ndarray        # (M, 3, 3) M Sigma M^T
    cov_world: np.ndarray      # (M, 3, 3) Sigma
    rot_mats: np.ndarray       # (M, 3, 3) from unit quaternions
    unit_quats: np.ndarray     # (M, 4)
    quat_norms: np.ndarray     # (M,)
    scales_sq: np.ndarray      # (M, 3) exp(2 log_scale)
    view_rot: np.ndarray       # (3, 3)
    view_trans: np.ndarray     # (3,)


def _quat_rotmats(quats: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    norms = np.linalg.norm(quats, axis=1)
    q = quats / norms[:, None]
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    r = np.empty((len(q), 3, 3))
    r[:, 0, 0] = 1 - 2 * (y * y + z * z)
    r[:, 0, 1] = 2 * (x * y - w * z)
    r[:, 0, 2] = 2 * (x * z + w * y)
    r[:, 1, 0] = 2 * (x * y + w * z)
    r[:, 1, 1] = 1 - 2 * (x * x + z * z)
    r[:, 1, 2] = 2 * (y * z - w * x)
    r[:, 2, 0] = 2 * (x * z - w * y)
    r[:, 2, 1] = 2 * (y * z + w * x)
    r[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return r, q, norms


def project_scene(scene: GaussianScene, view: PoseSE3, k: CameraIntrinsics) -> ProjectedScene:
    n = len(scene)
    m_rot = view.rotation
    t_w = view.translation
    empty = lambda: ProjectedScene(
        np.zeros(0, dtype=np.int64),
        np.zeros((0, 2)), np.zeros((0, 3)), np.zeros(0), np.zeros((0, 3)),
        np.zeros((0, 4), dtype=np.int32), np.zeros(0), np.zeros((0, 3)),
        np.zeros((0, 2, 2)), np.zeros((0, 2, 3)), np.zeros((0, 3, 3)),
        np.zeros((0, 3, 3)), np.zeros((0, 3, 3)), np.zeros((0, 4)), np.zeros(0),
        np.zeros((0, 3)), m_rot, t_w,
    )
    if n == 0:
        return empty()

    t_cam = scene.means @ m_rot.T + t_w
    keep = t_cam[:, 2] > NEAR_PLANE
    idx = np.nonzero(keep)[0]
    if len(idx) == 0:
        return empty()
    t_cam = t_cam[idx]

    rot_mats, unit_quats, quat_norms = _quat_rotmats(scene.quaternions[idx])
    scales_sq = np.exp(2.0 * scene.log_scales[idx])
    # Sigma = R diag(s^2) R^T
    cov_world = np.einsum("nij,nj,nkj->nik", rot_mats, scales_sq, rot_mats)
    cov_cam = np.einsum("ij,njk,lk->nil", m_rot, cov_world, m_rot)

    tx, ty, tz = t_cam[:, 0], t_cam[:, 1], t_cam[:, 2]
    jac = np.zeros((len(idx), 2, 3))
    jac[:, 0, 0] = k.fx / tz
    jac[:, 0, 2] = -k.fx * tx / tz**2
    jac[:, 1, 1] = k.fy / tz
    jac[:, 1, 2] = -k.fy * ty / tz**2
    cov2d = np.einsum("nij,njk,nlk->nil", jac, cov_cam, jac)
    cov2d[:, 0, 0] += COV_DILATION
    cov2d[:, 1, 1] += COV_DILATION
    # enforce exact symmetry against accumulated rounding
    off = 0.5 * (cov2d[:, 0, 1] + cov2d[:, 1, 0])
    cov2d[:, 0, 1] = off
    cov2d[:, 1, 0] = off

    means2d = np.stack([k.fx * tx / tz + k.cx, k.fy * ty / tz + k.cy], axis=-1)

    rx = np.sqrt(2.0 * POWER_CUT * cov2d[:, 0, 0])
    ry = np.sqrt(2.0 * POWER_CUT * cov2d[:, 1, 1])
    x0 = np.maximum(0, np.ceil(means2d[:, 0] - rx)).astype(np.int32)
    x1 = np.minimum(k.width - 1, np.floor(means2d[:, 0] + rx)).astype(np.int32)
    y0 = np.maximum(0, np.ceil(means2d[:, 1] - ry)).astype(np.int32)
    y1 = np.minimum(k.height - 1, np.floor(means2d[:, 1] + ry)).astype(np.int32)
    on_screen = (x0 <= x1) & (y0 <= y1)
    if not np.any(on_screen):
        return empty()

    sel = np.nonzero(on_screen)[0]
    order = sel[np.argsort(tz[sel], kind="stable")]

    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
    conics = np.stack(
        [cov2d[:, 1, 1] / det, -cov2d[:, 0, 1] / det, cov2d[:, 0, 0] / det], axis=-1
    )
    opac = 1.0 / (1.0 + np.exp(-scene.opacity_logits[idx]))
    bboxes = np.stack([x0, x1, y0, y1], axis=-1)

    return ProjectedScene(
        indices=idx[order],
        means2d=np.ascontiguousarray(means2d[order]),
        conics=np.ascontiguousarray(conics[order]),
        opacities=np.ascontiguousarray(opac[order]),
        colors=np.ascontiguousarray(scene.colors[idx[order]]),
        bboxes=np.ascontiguousarray(bboxes[order]),
        depths=np.ascontiguousarray(tz[order]),
        t_cam=np.ascontiguousarray(t_cam[order]),
        cov2d=np.ascontiguousarray(cov2d[order]),
        jac=np.ascontiguousarray(jac[order]),
        cov_cam=np.ascontiguousarray(cov_cam[order]),
        cov_world=np.ascontiguousarray(cov_world[order]),
        rot_mats=np.ascontiguousarray(rot_mats[order]),
        unit_quats=np.ascontiguousarray(unit_quats[order]),
        quat_norms=np.ascontiguousarray(quat_norms[order]),
        scales_sq=np.ascontiguousarray(scales_sq[order]),
        view_rot=m_rot,
        view_trans=t_w,
    )


def _rotmat_quat_grads(dr: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Chain dL/dR -> dL/d(unit quaternion), batched."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    g = np.empty((len(q), 4))
    g[:, 0] = 2.0 * (
        -z * dr[:, 0, 1] + y * dr[:, 0, 2]
        + z * dr[:, 1, 0] - x * dr[:, 1, 2]
        - y * dr[:, 2, 0] + x * dr[:, 2, 1]
    )
    g[:, 1] = 2.0 * (
        y * dr[:, 0, 1] + z * dr[:, 0, 2]
        + y * dr[:, 1, 0] - 2 * x * dr[:, 1, 1] - w * dr[:, 1, 2]
        + z * dr[:, 2, 0] + w * dr[:, 2, 1] - 2 * x * dr[:, 2, 2]
    )
    g[:, 2] = 2.0 * (
        -2 * y * dr[:, 0, 0] + x * dr[:, 0, 1] + w * dr[:, 0, 2]
        + x * dr[:, 1, 0] + z * dr[:, 1, 2]
        - w * dr[:, 2, 0] + z * dr[:, 2, 1] - 2 * y * dr[:, 2, 2]
    )
    g[:, 3] = 2.0 * (
        -2 * z * dr[:, 0, 0] - w * dr[:, 0, 1] + x * dr[:, 0, 2]
        + w * dr[:, 1, 0] - 2 * z * dr[:, 1, 1] + y * dr[:, 1, 2]
        + x * dr[:, 2, 0] + y * dr[:, 2, 1]
    )
    return g


def backward_chain(
    scene: GaussianScene,
    proj: ProjectedScene,
    k: CameraIntrinsics,
    d_means2d: np.ndarray,
    d_conics: np.ndarray,
    d_opacities: np.ndarray,
    d_colors: np.ndarray,
) -> tuple[SceneGradients, np.ndarray]:
    """Pull screen-space gradients back to Gaussian parameters and the view
    twist (left-perturbation of the view transform)."""
    grads = SceneGradients.zeros(len(scene))
    twist = np.zeros(6)
    m = len(proj.indices)
    if m == 0:
        return grads, twist

    mr = proj.view_rot
    # inverse of cov2d as full matrices (from stored conics)
    a_full = np.empty((m, 2, 2))
    a_full[:, 0, 0] = proj.conics[:, 0]
    a_full[:, 0, 1] = proj.conics[:, 1]
    a_full[:, 1, 0] = proj.conics[:, 1]
    a_full[:, 1, 1] = proj.conics[:, 2]
    g_conic = np.empty((m, 2, 2))
    g_conic[:, 0, 0] = d_conics[:, 0]
    g_conic[:, 0, 1] = 0.5 * d_conics[:, 1]
    g_conic[:, 1, 0] = 0.5 * d_conics[:, 1]
    g_conic[:, 1, 1] = d_conics[:, 2]
    # d(inverse): dL/dCov = -A G A
    d_cov2d = -np.einsum("nij,njk,nkl->nil", a_full, g_conic, a_full)

    # cov2d = J V J^T (+ const dilation)
    d_jac = 2.0 * np.einsum("nij,njk,nkl->nil", d_cov2d, proj.jac, proj.cov_cam)
    d_cov_cam = np.einsum("nji,njk,nkl->nil", proj.jac, d_cov2d, proj.jac)

    # V = M Sigma M^T
    d_sigma = np.einsum("ji,njk,kl->nil", mr, d_cov_cam, mr)
    d_mrot = 2.0 * np.einsum("nij,jk,nkl->nil", d_cov_cam, mr, proj.cov_world)

    # projection mean + Jacobian entries -> camera point
    tx, ty, tz = proj.t_cam[:, 0], proj.t_cam[:, 1], proj.t_cam[:, 2]
    d_tcam = np.zeros((m, 3))
    d_tcam[:, 0] = d_means2d[:, 0] * k.fx / tz - d_jac[:, 0, 2] * k.fx / tz**2
    d_tcam[:, 1] = d_means2d[:, 1] * k.fy / tz - d_jac[:, 1, 2] * k.fy / tz**2
    d_tcam[:, 2] = (
        -d_means2d[:, 0] * k.fx * tx / tz**2
        - d_means2d[:, 1] * k.fy * ty / tz**2
        - d_jac[:, 0, 0] * k.fx / tz**2
        - d_jac[:, 1, 1] * k.fy / tz**2
        + d_jac[:, 0, 2] * 2.0 * k.fx * tx / tz**3
        + d_jac[:, 1, 2] * 2.0 * k.fy * ty / tz**3
    )

    # t_cam = M mu + t_w
    d_mu = d_tcam @ mr
    mu_kept = scene.means[proj.indices]
    d_mrot_total = d_mrot.sum(axis=0) + d_tcam.T @ mu_kept
    d_tw_total = d_tcam.sum(axis=0)

    # Sigma = R diag(s^2) R^T
    d_rot = 2.0 * np.einsum("nij,njk,nk->nik", d_sigma, proj.rot_mats, proj.scales_sq)
    rtpr_diag = np.einsum("nji,njk,nki->ni", proj.rot_mats, d_sigma, proj.rot_mats)
    d_log_scales = 2.0 * proj.scales_sq * rtpr_diag

    d_qunit = _rotmat_quat_grads(d_rot, proj.unit_quats)
    # through quaternion normalization
    dot = np.einsum("ni,ni->n", d_qunit, proj.unit_quats)
    d_quat = (d_qunit - dot[:, None] * proj.unit_quats) / proj.quat_norms[:, None]

    o = proj.opacities
    d_logits = d_opacities * o * (1.0 - o)

    np.add.at(grads.means, proj.indices, d_mu)
    np.add.at(grads.log_scales, proj.indices, d_log_scales)
    np.add.at(grads.quaternions, proj.indices, d_quat)
    np.add.at(grads.opacity_logits, proj.indices, d_logits)
    np.add.at(grads.colors, proj.indices, d_colors)

    # view twist: W(delta) = exp(delta) W, evaluated at delta = 0
    c = d_mrot_total @ mr.T
    twist[0] = c[2, 1] - c[1, 2]
    twist[1] = c[0, 2] - c[2, 0]
    twist[2] = c[1, 0] - c[0, 1]
    twist[0:3] += np.cross(proj.view_trans, d_tw_total)
    twist[3:6] = d_tw_total
    return grads, twist
