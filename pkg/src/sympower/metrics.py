"""Reconstruction quality metrics: MSE, PSNR, SSIM and SI-SNR."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ShapeMismatch, TooSmall, ZeroTarget
from .tensor import Signal

DB_CAP = 200.0
SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


@dataclass(frozen=True)
class QualityReport:
    mse: float
    psnr: float
    ssim: Optional[float] = None
    si_snr: Optional[float] = None


def _pair(pred, truth):
    p = pred.array if isinstance(pred, Signal) else np.asarray(pred, dtype=np.float64)
    t = truth.array if isinstance(truth, Signal) else np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeMismatch(f"prediction shape {p.shape} != truth shape {t.shape}")
    return p, t


def mse(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return float(np.mean((p - t) ** 2))


def psnr_from_mse(err: float, peak: float = 1.0) -> float:
    if err <= 0.0:
        return DB_CAP
    return min(10.0 * math.log10(peak * peak / err), DB_CAP)


def psnr(pred, truth, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 200 dB for identical inputs."""
    if not peak > 0:
        raise ValueError("peak must be positive")
    return psnr_from_mse(mse(pred, truth), peak)


def _gaussian_taps(size=SSIM_WIN, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2.0
    w = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return w / w.sum()


def _filter2(img, taps):
    out = correlate1d(img, taps, axis=0, mode="reflect")
    return correlate1d(out, taps, axis=1, mode="reflect")


def _ssim_channel(x, y, data_range):
    taps = _gaussian_taps()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx, my = _filter2(x, taps), _filter2(y, taps)
    sxx = _filter2(x * x, taps) - mx * mx
    syy = _filter2(y * y, taps) - my * my
    sxy = _filter2(x * y, taps) - mx * my
    num = (2.0 * mx * my + c1) * (2.0 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    pad = (SSIM_WIN - 1) // 2
    return float(np.mean((num / den)[pad:-pad, pad:-pad]))


def ssim(pred, truth, data_range: float = 1.0) -> float:
    """Mean structural similarity over an 11x11 Gaussian window (sigma 1.5).

    Accepts ``(H, W)`` or ``(H, W, C)``; channels are averaged. The border
    strip where the window does not fit is excluded from the mean.
    """
    p, t = _pair(pred, truth)
    if p.ndim == 2:
        p, t = p[..., None], t[..., None]
    if p.ndim != 3:
        raise ShapeMismatch(f"SSIM needs a 2D image, got shape {p.shape}")
    if min(p.shape[:2]) < SSIM_WIN:
        raise TooSmall(f"SSIM needs sides >= {SSIM_WIN}, got {p.shape[:2]}")
    return float(np.mean([_ssim_channel(p[..., c], t[..., c], data_range)
                          for c in range(p.shape[2])]))


def si_snr(pred, truth) -> float:
    """Scale-invariant SNR in dB, capped at 200 dB."""
    p, t = _pair(pred, truth)
    p = p.reshape(-1) - p.mean()
    t = t.reshape(-1) - t.mean()
    energy = float(t @ t)
    if energy == 0.0:
        raise ZeroTarget("target is all zero after mean removal")
    target = (float(p @ t) / energy) * t
    noise = p - target
    ns, nn = float(target @ target), float(noise @ noise)
    if nn <= ns * 1e-20:
        return DB_CAP
    if ns == 0.0:
        return -DB_CAP
    return min(10.0 * math.log10(ns / nn), DB_CAP)


def quality(pred, truth, peak: float = 1.0, image: bool = False, audio: bool = False) -> QualityReport:
    """All applicable metrics for one reconstruction."""
    err = mse(pred, truth)
    s = ssim(pred, truth, data_range=peak) if image else None
    snr = si_snr(pred, truth) if audio else None
    return QualityReport(mse=err, psnr=psnr_from_mse(err, peak), ssim=s, si_snr=snr)
