"""Numba-compiled compositing kernels (default backend).

Serial per-pixel loops: each pixel walks the depth-sorted Gaussians whose
bounding box covers its row, composites front-to-back, and stops once its
transmittance falls below ``t_cutoff``.  Serial execution keeps runs
bit-deterministic.  Semantics must stay in lockstep with kernels_numpy.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def composite_forward(means2d, conics, opacities, colors, bboxes, height, width,
                      t_cutoff, alpha_max, power_cut):
    n = len(means2d)
    color = np.zeros((height, width, 3))
    alpha_img = np.zeros((height, width))
    trans_img = np.ones((height, width))
    touch = np.zeros(n, dtype=np.int64)
    rowlist = np.empty(n, dtype=np.int64)
    for py in range(height):
        cnt = 0
        for i in range(n):
            if bboxes[i, 2] <= py and py <= bboxes[i, 3]:
                rowlist[cnt] = i
                cnt += 1
        for px in range(width):
            t = 1.0
            c0 = 0.0
            c1 = 0.0
            c2 = 0.0
            for j in range(cnt):
                if t < t_cutoff:
                    break
                i = rowlist[j]
                if px < bboxes[i, 0] or px > bboxes[i, 1]:
                    continue
                dx = px - means2d[i, 0]
                dy = py - means2d[i, 1]
                power = -0.5 * (conics[i, 0] * dx * dx + conics[i, 2] * dy * dy) \
                    - conics[i, 1] * dx * dy
                if power < -power_cut:
                    continue
                alpha = opacities[i] * math.exp(power)
                if alpha > alpha_max:
                    alpha = alpha_max
                w = t * alpha
                c0 += w * colors[i, 0]
                c1 += w * colors[i, 1]
                c2 += w * colors[i, 2]
                t *= 1.0 - alpha
                touch[i] += 1
            color[py, px, 0] = c0
            color[py, px, 1] = c1
            color[py, px, 2] = c2
            alpha_img[py, px] = 1.0 - t
            trans_img[py, px] = t
    return color, alpha_img, trans_img, touch


@njit(cache=True)
def composite_backward(means2d, conics, opacities, colors, bboxes, grad_color,
                       t_cutoff, alpha_max, power_cut):
    height, width = grad_color.shape[:2]
    n = len(means2d)
    d_means2d = np.zeros((n, 2))
    d_conics = np.zeros((n, 3))
    d_opac = np.zeros(n)
    d_colors = np.zeros((n, 3))
    rowlist = np.empty(n, dtype=np.int64)
    g_scr = np.empty(n)
    for py in range(height):
        cnt = 0
        for i in range(n):
            if bboxes[i, 2] <= py and py <= bboxes[i, 3]:
                rowlist[cnt] = i
                cnt += 1
        for px in range(width):
            # forward replay recording each entered pair's gaussian value
            t = 1.0
            n_ent = 0
            for j in range(cnt):
                if t < t_cutoff:
                    break
                n_ent = j + 1
                i = rowlist[j]
                if px < bboxes[i, 0] or px > bboxes[i, 1]:
                    g_scr[j] = -1.0
                    continue
                dx = px - means2d[i, 0]
                dy = py - means2d[i, 1]
                power = -0.5 * (conics[i, 0] * dx * dx + conics[i, 2] * dy * dy) \
                    - conics[i, 1] * dx * dy
                if power < -power_cut:
                    g_scr[j] = -1.0
                    continue
                g = math.exp(power)
                g_scr[j] = g
                alpha = opacities[i] * g
                if alpha > alpha_max:
                    alpha = alpha_max
                t *= 1.0 - alpha

            gr0 = grad_color[py, px, 0]
            gr1 = grad_color[py, px, 1]
            gr2 = grad_color[py, px, 2]
            if gr0 == 0.0 and gr1 == 0.0 and gr2 == 0.0:
                continue
            s0 = 0.0
            s1 = 0.0
            s2 = 0.0
            t_after = t
            for j in range(n_ent - 1, -1, -1):
                g = g_scr[j]
                if g < 0.0:
                    continue
                i = rowlist[j]
                o = opacities[i]
                raw = o * g
                clamped = raw > alpha_max
                alpha = alpha_max if clamped else raw
                t_before = t_after / (1.0 - alpha)
                one_m = 1.0 - alpha
                d_alpha = gr0 * (colors[i, 0] * t_before - s0 / one_m) \
                    + gr1 * (colors[i, 1] * t_before - s1 / one_m) \
                    + gr2 * (colors[i, 2] * t_before - s2 / one_m)
                w = alpha * t_before
                d_colors[i, 0] += gr0 * w
                d_colors[i, 1] += gr1 * w
                d_colors[i, 2] += gr2 * w
                if not clamped:
                    d_opac[i] += g * d_alpha
                    gl = o * d_alpha * g
                    dx = px - means2d[i, 0]
                    dy = py - means2d[i, 1]
                    d_means2d[i, 0] += gl * (conics[i, 0] * dx + conics[i, 1] * dy)
                    d_means2d[i, 1] += gl * (conics[i, 1] * dx + conics[i, 2] * dy)
                    d_conics[i, 0] += -0.5 * gl * dx * dx
                    d_conics[i, 1] += -gl * dx * dy
                    d_conics[i, 2] += -0.5 * gl * dy * dy
                s0 += colors[i, 0] * w
                s1 += colors[i, 1] * w
                s2 += colors[i, 2] * w
                t_after = t_before
    return d_means2d, d_conics, d_opac, d_colors
