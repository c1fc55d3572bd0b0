"""Evaluation metrics between reconstructed and ground-truth volumes in [0,1]:
MAE, MSE, cosine similarity, PSNR (dB, peak 1, capped at 100), and volumetric
SSIM over uniform 7^3 windows. Plus CSV report aggregation over a dataset.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 7
SSIM_C1 = (0.01 * 1.0) ** 2
SSIM_C2 = (0.03 * 1.0) ** 2


def _check_shapes(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("metric inputs differ in shape: %s vs %s"
                         % (a.shape, b.shape))
    return a, b


def mae(a, b) -> float:
    a, b = _check_shapes(a, b)
    return float(np.abs(a - b).mean())


def mse(a, b) -> float:
    a, b = _check_shapes(a, b)
    return float(((a - b) ** 2).mean())


def cosine_similarity(a, b) -> float:
    a, b = _check_shapes(a, b)
    na = np.linalg.norm(a.ravel())
    nb = np.linalg.norm(b.ravel())
    if na == 0.0 or nb == 0.0:
        warnings.warn("cosine similarity of a zero-norm volume defined as 0")
        return 0.0
    return float(a.ravel() @ b.ravel() / (na * nb))


def psnr(a, b, peak: float = 1.0) -> float:
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP_DB
    return float(min(10.0 * np.log10(peak * peak / err), PSNR_CAP_DB))


def ssim3d(a, b) -> float:
    """Mean structural similarity over all fully-contained 7^3 windows."""
    a, b = _check_shapes(a, b)
    if a.ndim != 3:
        raise ValueError("ssim3d expects 3D volumes, got shape %s" % (a.shape,))
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError("volume extent %s smaller than the %s^3 SSIM window"
                         % (a.shape, SSIM_WINDOW))
    m = SSIM_WINDOW // 2
    core = (slice(m, -m),) * 3

    def wmean(x):
        return uniform_filter(x, size=SSIM_WINDOW)[core]

    mu_a, mu_b = wmean(a), wmean(b)
    var_a = wmean(a * a) - mu_a ** 2
    var_b = wmean(b * b) - mu_b ** 2
    cov = wmean(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float((num / den).mean())


METRIC_NAMES = ("mae", "mse", "cosine", "psnr_db", "ssim")


def compute_all(pred, target) -> dict:
    return {
        "mae": mae(pred, target),
        "mse": mse(pred, target),
        "cosine": cosine_similarity(pred, target),
        "psnr_db": psnr(pred, target),
        "ssim": ssim3d(pred, target),
    }


@dataclass
class MetricReport:
    """Per-sample metric rows plus mean/std aggregation."""
    rows: list = field(default_factory=list)       # (sample_id, dict)
    skipped: list = field(default_factory=list)    # sample ids without a pair

    def add(self, sample_id: str, values: dict):
        self.rows.append((sample_id, values))

    def mean(self) -> dict:
        return {k: float(np.mean([v[k] for _, v in self.rows])) for k in METRIC_NAMES}

    def std(self) -> dict:
        return {k: float(np.std([v[k] for _, v in self.rows])) for k in METRIC_NAMES}

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            f.write("# ssim: volumetric, uniform 7^3 window\n")
            writer = csv.writer(f)
            writer.writerow(("sample_id",) + METRIC_NAMES)
            for sample_id, values in self.rows:
                writer.writerow([sample_id] + ["%.6f" % values[k] for k in METRIC_NAMES])
            if self.rows:
                writer.writerow(["mean"] + ["%.6f" % self.mean()[k] for k in METRIC_NAMES])
                writer.writerow(["std"] + ["%.6f" % self.std()[k] for k in METRIC_NAMES])
            for sid in self.skipped:
                writer.writerow([sid, "skipped: missing pair file"])
