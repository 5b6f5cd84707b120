"""PSNR, SSIM, and column-mean profiles.

Pixels are stored in [0, 1] but metrics are computed on the 0-255 scale so
that the 255^2 peak in the PSNR definition is meaningful. PSNR of identical
images is reported as ``math.inf`` (the "identical" flag); CSV writers render
it as the string ``identical``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .imaging import check_image

SSIM_WINDOW = 8
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2


def _check_pair(f: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    f = check_image(f, "reference image")
    g = check_image(g, "test image")
    if f.shape != g.shape:
        raise ValueError(f"image dimensions differ: {f.shape} vs {g.shape}")
    return f, g


def mse(f: np.ndarray, g: np.ndarray) -> float:
    """Mean squared error on the 0-255 scale."""
    f, g = _check_pair(f, g)
    diff = (f - g) * 255.0
    return float(np.mean(diff * diff))


def psnr(f: np.ndarray, g: np.ndarray) -> float:
    """10*log10(255^2 / MSE) in dB; inf when the images are identical."""
    err = mse(f, g)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / err)


def _window_sums(a: np.ndarray, win: int) -> np.ndarray:
    """Sums over every win x win sliding window (stride 1), via integral image."""
    n, m = a.shape
    c = np.zeros((n + 1, m + 1))
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=c[1:, 1:])
    return c[win:, win:] - c[:-win, win:] - c[win:, :-win] + c[:-win, :-win]


def ssim(
    f: np.ndarray,
    g: np.ndarray,
    window: int = SSIM_WINDOW,
    c1: float = SSIM_C1,
    c2: float = SSIM_C2,
) -> float:
    """Mean local SSIM over sliding windows with uniform weights.

    Luminance, contrast, and structure are combined in the usual single
    formula per window; moments use population normalization (1/N).
    """
    f, g = _check_pair(f, g)
    n, m = f.shape
    if window < 2:
        raise ValueError(f"SSIM window must be >= 2, got {window}")
    if n < window or m < window:
        raise ValueError(f"image {n}x{m} smaller than the {window}x{window} SSIM window")
    f = f * 255.0
    g = g * 255.0
    count = float(window * window)
    mu_f = _window_sums(f, window) / count
    mu_g = _window_sums(g, window) / count
    var_f = _window_sums(f * f, window) / count - mu_f * mu_f
    var_g = _window_sums(g * g, window) / count - mu_g * mu_g
    cov = _window_sums(f * g, window) / count - mu_f * mu_g
    ssim_map = ((2.0 * mu_f * mu_g + c1) * (2.0 * cov + c2)) / (
        (mu_f * mu_f + mu_g * mu_g + c1) * (var_f + var_g + c2)
    )
    return float(np.mean(ssim_map))


@dataclass(frozen=True)
class ColumnProfile:
    """Per-column mean pixel value; flat profiles mean no residual stripes."""

    means: np.ndarray

    @property
    def m(self) -> int:
        return self.means.shape[0]


def column_profile(img: np.ndarray) -> ColumnProfile:
    """Arithmetic mean of each column."""
    arr = check_image(img)
    return ColumnProfile(means=arr.mean(axis=0))


@dataclass
class MetricsReport:
    """Per-image PSNR/SSIM plus the noise settings they were measured under."""

    names: list[str]
    psnr: list[float]
    ssim: list[float]
    beta: float | None = None
    mode: str | None = None
    ssim_window: int = SSIM_WINDOW
    ssim_c1: float = SSIM_C1
    ssim_c2: float = SSIM_C2

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr)) if self.psnr else math.nan

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim)) if self.ssim else math.nan


def evaluate_pairs(
    clean: list[np.ndarray],
    test: list[np.ndarray],
    names: list[str] | None = None,
    beta: float | None = None,
    mode: str | None = None,
) -> MetricsReport:
    """PSNR/SSIM of each (clean, test) pair, in order."""
    if len(clean) != len(test):
        raise ValueError(f"{len(clean)} reference images vs {len(test)} test images")
    if names is None:
        names = [str(i) for i in range(len(clean))]
    report = MetricsReport(names=list(names), psnr=[], ssim=[], beta=beta, mode=mode)
    for f, g in zip(clean, test):
        report.psnr.append(psnr(f, g))
        report.ssim.append(ssim(f, g))
    return report
