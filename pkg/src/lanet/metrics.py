"""Full-reference quality metrics (PSNR, SSIM) and the evaluation report."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import convolve2d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) in dB; identical inputs return math.inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    err = float(np.mean((a - b) ** 2))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def luminance(img: np.ndarray) -> np.ndarray:
    """Mean over RGB; 2-D images pass through."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return img.mean(axis=2)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Structural similarity on luminance.

    11x11 Gaussian window (sigma 1.5), C1 = (0.01*peak)^2, C2 = (0.03*peak)^2,
    sample statistics from valid windows only, mean over windows.
    """
    la = luminance(a)
    lb = luminance(b)
    if la.shape != lb.shape:
        raise ValueError(f"shape mismatch: {la.shape} vs {lb.shape}")
    if min(la.shape) < SSIM_WINDOW:
        raise ValueError(
            f"image {la.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    k = _gaussian_window()
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu_a = convolve2d(la, k, mode="valid")
    mu_b = convolve2d(lb, k, mode="valid")
    var_a = convolve2d(la * la, k, mode="valid") - mu_a**2
    var_b = convolve2d(lb * lb, k, mode="valid") - mu_b**2
    cov = convolve2d(la * lb, k, mode="valid") - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float((num / den).mean())


@dataclass
class ImageScore:
    name: str
    psnr: float
    ssim: float


@dataclass
class MetricReport:
    per_image: list[ImageScore]
    psnr: float
    ssim: float

    @classmethod
    def from_scores(cls, scores: list[ImageScore]) -> "MetricReport":
        if not scores:
            raise ValueError("cannot aggregate an empty score list")
        return cls(
            per_image=scores,
            psnr=float(np.mean([s.psnr for s in scores])),
            ssim=float(np.mean([s.ssim for s in scores])),
        )


def write_metric_csv(path: str | Path, report: MetricReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "psnr", "ssim"])
        for s in report.per_image:
            writer.writerow([s.name, repr(s.psnr), repr(s.ssim)])
