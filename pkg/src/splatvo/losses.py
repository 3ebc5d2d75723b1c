"""Photometric objectives with analytic image-space gradients.

All functions take H x W x 3 float arrays in [0, 1] and return
``(value, gradient_wrt_first_argument)``.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

from .errors import DegenerateMaskError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError("images must be H x W x 3")
    return a, b


def l1_loss(a, b, mask: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Mean absolute difference over unmasked pixels and channels.

    ``mask`` pixels marked True are excluded from both the value and the
    gradient; their image values are never read.
    """
    a, b = _check_pair(a, b)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape[:2]:
            raise ValueError(f"mask shape {mask.shape} does not match image {a.shape[:2]}")
        if mask.all():
            raise DegenerateMaskError("every pixel is masked")
        keep = ~mask
        count = int(keep.sum()) * 3
        diff = np.where(keep[:, :, None], a - b, 0.0)
    else:
        count = a.size
        diff = a - b
    value = float(np.abs(diff).sum() / count)
    grad = np.sign(diff) / count
    return value, grad


def _window1d() -> np.ndarray:
    half = (SSIM_WINDOW - 1) / 2.0
    x = np.arange(SSIM_WINDOW) - half
    w = np.exp(-(x**2) / (2.0 * SSIM_SIGMA**2))
    return w / w.sum()


_W1D = _window1d()
_PAD = (SSIM_WINDOW - 1) // 2


def _filt(img2d: np.ndarray) -> np.ndarray:
    """Valid-mode correlation with the separable gaussian window."""
    out = correlate1d(img2d, _W1D, axis=0, mode="constant")
    out = correlate1d(out, _W1D, axis=1, mode="constant")
    return out[_PAD:-_PAD, _PAD:-_PAD]


def _spread(field: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Adjoint of :func:`_filt`: scatter window-position values to pixels."""
    full = np.zeros(shape)
    full[_PAD:-_PAD, _PAD:-_PAD] = field
    out = correlate1d(full, _W1D, axis=0, mode="constant")
    return correlate1d(out, _W1D, axis=1, mode="constant")


def dssim_loss(a, b) -> tuple[float, np.ndarray]:
    """Structural dissimilarity 1 - mean(SSIM), 11x11 gaussian window
    (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2, channels averaged."""
    a, b = _check_pair(a, b)
    h, w = a.shape[:2]
    if min(h, w) < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    grad = np.zeros_like(a)
    total = 0.0
    npos = (h - SSIM_WINDOW + 1) * (w - SSIM_WINDOW + 1)
    for ch in range(3):
        x = a[:, :, ch]
        y = b[:, :, ch]
        mu_x = _filt(x)
        mu_y = _filt(y)
        e_xx = _filt(x * x)
        e_yy = _filt(y * y)
        e_xy = _filt(x * y)
        var_x = e_xx - mu_x**2
        var_y = e_yy - mu_y**2
        cov = e_xy - mu_x * mu_y
        a1 = 2.0 * mu_x * mu_y + SSIM_C1
        a2 = 2.0 * cov + SSIM_C2
        b1 = mu_x**2 + mu_y**2 + SSIM_C1
        b2 = var_x + var_y + SSIM_C2
        d = b1 * b2
        s = (a1 * a2) / d
        total += s.mean()
        # partials w.r.t. the window statistics mu_x, E[xx], E[xy]
        ds_dmu = (2.0 * mu_y * (a2 - a1)) / d - s * (2.0 * mu_x * (b2 - b1)) / d
        ds_dexx = -s / b2
        ds_dexy = 2.0 * a1 / d
        scale = -1.0 / (npos * 3.0)
        grad[:, :, ch] = scale * (
            _spread(ds_dmu, (h, w))
            + 2.0 * x * _spread(ds_dexx, (h, w))
            + y * _spread(ds_dexy, (h, w))
        )
    return 1.0 - total / 3.0, grad


def rgb_loss(a, b, lam: float, mask: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Weighted photometric loss (1 - lam) * L1 + lam * D-SSIM.

    The mask applies to the L1 term only; the D-SSIM term is windowed and is
    always evaluated on the full image.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must be in [0, 1]")
    if lam == 0.0:
        return l1_loss(a, b, mask)
    if lam == 1.0:
        return dssim_loss(a, b)
    l1_val, l1_grad = l1_loss(a, b, mask)
    ds_val, ds_grad = dssim_loss(a, b)
    return (1.0 - lam) * l1_val + lam * ds_val, (1.0 - lam) * l1_grad + lam * ds_grad
