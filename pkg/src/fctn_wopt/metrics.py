"""Recovery metrics: relative error, MSE/PSNR and global-statistics SSIM."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeMismatchError

K1 = 0.01
K2 = 0.03
PSNR_TABLE_CAP = 99.0


def _pair(truth, estimate):
    a = np.asarray(truth, dtype=np.float64)
    b = np.asarray(estimate, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{a.shape} vs {b.shape}")
    return a, b


def rel_error(truth, estimate) -> float:
    """``||truth - estimate||_F / ||estimate||_F``; ``inf`` when the estimate is zero."""
    a, b = _pair(truth, estimate)
    den = np.linalg.norm(b)
    num = np.linalg.norm(a - b)
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return float(num / den)


def mse(truth, estimate) -> float:
    a, b = _pair(truth, estimate)
    d = (a - b).ravel()
    return float(np.dot(d, d) / d.size)


def psnr_from_mse(m: float, peak: float = 255.0) -> float:
    if m == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / m)


def psnr(truth, estimate, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    return psnr_from_mse(mse(truth, estimate), peak)


def cap_psnr(value: float) -> float:
    """Clamp an unbounded PSNR for tabular output."""
    return min(value, PSNR_TABLE_CAP)


def ssim(truth_slice, estimate_slice, dynamic_range: float = 255.0) -> float:
    """SSIM of two 2-D slices using whole-slice means, variances and covariance."""
    x, y = _pair(truth_slice, estimate_slice)
    if x.ndim != 2:
        raise ShapeMismatchError(f"ssim expects 2-D slices, got {x.ndim}-D")
    c1 = (K1 * dynamic_range) ** 2
    c2 = (K2 * dynamic_range) ** 2
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    n = x.size
    vx = np.dot(dx.ravel(), dx.ravel()) / n
    vy = np.dot(dy.ravel(), dy.ravel()) / n
    cov = np.dot(dx.ravel(), dy.ravel()) / n
    num = (2 * mx * my + c1) * (2 * cov + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(num / den)


def slices(x: np.ndarray) -> list[np.ndarray]:
    """2-D slices over the leading two modes (a vector becomes one column slice)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return [x[:, None]]
    flat = x.reshape(x.shape[0], x.shape[1], -1)
    return [flat[:, :, j] for j in range(flat.shape[2])]


def ssim_tensor(truth, estimate, dynamic_range: float = 255.0) -> tuple[float, list[float]]:
    """Mean SSIM over leading-two-mode slices, plus the per-slice values."""
    a, b = _pair(truth, estimate)
    per = [ssim(s, t, dynamic_range) for s, t in zip(slices(a), slices(b))]
    return float(np.mean(per)), per


@dataclass
class MetricReport:
    rel_error: float
    mse: float
    psnr: float
    ssim: float
    ssim_per_slice: list[float] = field(default_factory=list)

    def to_dict(self, cap: bool = False) -> dict:
        d = {"rel_error": self.rel_error, "mse": self.mse,
             "psnr": cap_psnr(self.psnr) if cap else self.psnr, "ssim": self.ssim}
        if len(self.ssim_per_slice) > 1:
            d["ssim_per_slice"] = list(self.ssim_per_slice)
        return d


def evaluate(truth, estimate, peak: float = 255.0, dynamic_range: float | None = None) -> MetricReport:
    m = mse(truth, estimate)
    s, per = ssim_tensor(truth, estimate, peak if dynamic_range is None else dynamic_range)
    return MetricReport(rel_error(truth, estimate), m, psnr_from_mse(m, peak), s, per)
