"""Pure-numpy compositing kernels (fallback backend).

Same per-pixel semantics as the numba kernels: Gaussians arrive depth-sorted
and are composited front-to-back; a pixel stops accumulating once its
transmittance drops below ``t_cutoff``; pairs with Mahalanobis power below
``-power_cut`` are skipped.  The gaussian loop is the outer loop here, which
is order-equivalent because transmittance never increases.
"""

from __future__ import annotations

import numpy as np


def composite_forward(means2d, conics, opacities, colors, bboxes, height, width,
                      t_cutoff, alpha_max, power_cut):
    color = np.zeros((height, width, 3))
    trans = np.ones((height, width))
    touch = np.zeros(len(means2d), dtype=np.int64)
    for i in range(len(means2d)):
        x0, x1, y0, y1 = bboxes[i]
        dx = np.arange(x0, x1 + 1, dtype=np.float64)[None, :] - means2d[i, 0]
        dy = np.arange(y0, y1 + 1, dtype=np.float64)[:, None] - means2d[i, 1]
        a, b, c = conics[i]
        power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
        sub_t = trans[y0:y1 + 1, x0:x1 + 1]
        valid = (sub_t >= t_cutoff) & (power >= -power_cut)
        alpha = np.minimum(alpha_max, opacities[i] * np.exp(power))
        w = np.where(valid, sub_t * alpha, 0.0)
        color[y0:y1 + 1, x0:x1 + 1] += w[:, :, None] * colors[i]
        trans[y0:y1 + 1, x0:x1 + 1] = np.where(valid, sub_t * (1.0 - alpha), sub_t)
        touch[i] = int(valid.sum())
    return color, 1.0 - trans, trans, touch


def composite_backward(means2d, conics, opacities, colors, bboxes, grad_color,
                       t_cutoff, alpha_max, power_cut):
    height, width = grad_color.shape[:2]
    n = len(means2d)
    d_means2d = np.zeros((n, 2))
    d_conics = np.zeros((n, 3))
    d_opac = np.zeros(n)
    d_colors = np.zeros((n, 3))

    # forward replay, keeping per-gaussian g and validity for the reverse walk
    trans = np.ones((height, width))
    gs: list[np.ndarray] = []
    valids: list[np.ndarray] = []
    for i in range(n):
        x0, x1, y0, y1 = bboxes[i]
        dx = np.arange(x0, x1 + 1, dtype=np.float64)[None, :] - means2d[i, 0]
        dy = np.arange(y0, y1 + 1, dtype=np.float64)[:, None] - means2d[i, 1]
        a, b, c = conics[i]
        power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
        sub_t = trans[y0:y1 + 1, x0:x1 + 1]
        valid = (sub_t >= t_cutoff) & (power >= -power_cut)
        g = np.exp(power)
        alpha = np.minimum(alpha_max, opacities[i] * g)
        trans[y0:y1 + 1, x0:x1 + 1] = np.where(valid, sub_t * (1.0 - alpha), sub_t)
        gs.append(g)
        valids.append(valid)

    t_after = trans
    suffix = np.zeros((height, width, 3))
    for i in range(n - 1, -1, -1):
        x0, x1, y0, y1 = bboxes[i]
        g = gs[i]
        valid = valids[i]
        o = opacities[i]
        raw = o * g
        alpha = np.minimum(alpha_max, raw)
        sub_ta = t_after[y0:y1 + 1, x0:x1 + 1]
        t_before = np.where(valid, sub_ta / (1.0 - alpha), sub_ta)
        sub_grad = grad_color[y0:y1 + 1, x0:x1 + 1, :]
        sub_suffix = suffix[y0:y1 + 1, x0:x1 + 1, :]

        d_alpha = sub_grad @ colors[i] * t_before - np.einsum(
            "hwc,hwc->hw", sub_grad, sub_suffix
        ) / (1.0 - alpha)
        w = np.where(valid, alpha * t_before, 0.0)
        d_colors[i] = np.einsum("hwc,hw->c", sub_grad, w)
        live = valid & (raw < alpha_max)
        d_g = np.where(live, o * d_alpha, 0.0)
        d_opac[i] = np.sum(np.where(live, g * d_alpha, 0.0))

        dx = np.arange(x0, x1 + 1, dtype=np.float64)[None, :] - means2d[i, 0]
        dy = np.arange(y0, y1 + 1, dtype=np.float64)[:, None] - means2d[i, 1]
        a, b, c = conics[i]
        gl = d_g * g
        d_means2d[i, 0] = np.sum(gl * (a * dx + b * dy))
        d_means2d[i, 1] = np.sum(gl * (b * dx + c * dy))
        d_conics[i, 0] = np.sum(-0.5 * gl * dx * dx)
        d_conics[i, 1] = np.sum(-gl * dx * dy)
        d_conics[i, 2] = np.sum(-0.5 * gl * dy * dy)

        sub_suffix += w[:, :, None] * colors[i]
        t_after[y0:y1 + 1, x0:x1 + 1] = t_before
    return d_means2d, d_conics, d_opac, d_colors
