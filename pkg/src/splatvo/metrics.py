"""Trajectory metrics (ATE, RPE) with similarity alignment, and image
metrics (PSNR, SSIM)."""

from __future__ import annotations

import json
import math

import numpy as np

from .geometry import PoseSE3, compose
from .losses import dssim_loss


def _translations(poses: list[PoseSE3]) -> np.ndarray:
    return np.stack([p.translation for p in poses])


def align_trajectories(est: list[PoseSE3], gt: list[PoseSE3]) -> tuple[float, PoseSE3]:
    """Closed-form Sim(3) fit of est onto gt translations (Umeyama).

    Returns (scale, rigid transform): ``scale * R @ t_est + t`` approximates
    the ground-truth translations in the least-squares sense.
    """
    if len(est) != len(gt):
        raise ValueError(f"trajectory lengths differ: {len(est)} vs {len(gt)}")
    if len(est) < 3:
        raise ValueError("alignment needs at least 3 poses")
    x = _translations(est)
    y = _translations(gt)
    mx = x.mean(axis=0)
    my = y.mean(axis=0)
    xc = x - mx
    yc = y - my
    cov = yc.T @ xc / len(x)
    u, d, vt = np.linalg.svd(cov)
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2, 2] = -1.0
    rot = u @ s @ vt
    var_x = (xc**2).sum() / len(x)
    scale = float(np.trace(np.diag(d) @ s) / var_x)
    trans = my - scale * rot @ mx
    return scale, PoseSE3(rot, trans)


def ate(est: list[PoseSE3], gt: list[PoseSE3]) -> float:
    """RMSE of translation residuals after similarity alignment.

    With fewer than 3 poses (where the rotation is underdetermined) only the
    centroids are aligned.
    """
    if len(est) != len(gt):
        raise ValueError(f"trajectory lengths differ: {len(est)} vs {len(gt)}")
    if len(est) < 2:
        raise ValueError("ATE needs at least 2 poses")
    x = _translations(est)
    y = _translations(gt)
    if len(est) >= 3:
        scale, xf = align_trajectories(est, gt)
        aligned = scale * x @ xf.rotation.T + xf.translation
    else:
        aligned = x - x.mean(axis=0) + y.mean(axis=0)
    res = aligned - y
    return float(np.sqrt((res**2).sum(axis=1).mean()))


def _rotation_angle_deg(r: np.ndarray) -> float:
    c = (np.trace(r) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def rpe(est: list[PoseSE3], gt: list[PoseSE3], delta: int = 1) -> tuple[float, float]:
    """Relative pose error over frame step ``delta``.

    Returns (rpe_t, rpe_r): RMSE of relative-motion translation residuals
    (scene units, est translations pre-scaled by the alignment scale) and
    RMSE of relative rotation errors in degrees.
    """
    if len(est) != len(gt):
        raise ValueError(f"trajectory lengths differ: {len(est)} vs {len(gt)}")
    if len(est) < delta + 1:
        raise ValueError(f"need at least {delta + 1} poses for delta={delta}")
    scale = align_trajectories(est, gt)[0] if len(est) >= 3 else 1.0
    est_s = [PoseSE3(p.rotation, scale * p.translation) for p in est]
    t_errs = []
    r_errs = []
    for i in range(len(est) - delta):
        rel_gt = compose(gt[i].inverse(), gt[i + delta])
        rel_est = compose(est_s[i].inverse(), est_s[i + delta])
        err = compose(rel_gt.inverse(), rel_est)
        t_errs.append(np.linalg.norm(err.translation))
        r_errs.append(_rotation_angle_deg(err.rotation))
    rpe_t = float(np.sqrt(np.mean(np.square(t_errs))))
    rpe_r = float(np.sqrt(np.mean(np.square(r_errs))))
    return rpe_t, rpe_r


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(1 / MSE) on [0, 1] images; +inf when identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity; shares its kernel with the D-SSIM loss."""
    return 1.0 - dssim_loss(a, b)[0]


# ---------------------------------------------------------------------------
# report formatting


def format_report(sections: dict[str, dict[str, float]]) -> str:
    """Key: value lines grouped by metric section."""
    lines = []
    for section, entries in sections.items():
        lines.append(f"[{section}]")
        for key, val in entries.items():
            if isinstance(val, float):
                lines.append(f"{key}: {val:.6g}")
            else:
                lines.append(f"{key}: {val}")
        lines.append("")
    return "\n".join(lines)


def report_json(sections: dict[str, dict[str, float]]) -> str:
    def clean(v):
        if isinstance(v, float) and math.isinf(v):
            return "inf"
        return v

    return json.dumps(
        {s: {k: clean(v) for k, v in d.items()} for s, d in sections.items()}, indent=2
    )
