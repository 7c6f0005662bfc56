"""Reinhard color transfer in the l-alpha-beta opponent color space.

Implements the classic statistics-matching transfer: convert RGB through LMS
into the log-space opponent axes, shift/scale each channel to reference
statistics, and convert back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import check_rgb_image

_RGB_TO_LMS = np.array(
    [
        [0.3811, 0.5783, 0.0402],
        [0.1967, 0.7244, 0.0782],
        [0.0241, 0.1288, 0.8444],
    ]
)
# exact inverse rather than the rounded published matrix, so the conversion
# round-trips to within quantization
_LMS_TO_RGB = np.linalg.inv(_RGB_TO_LMS)
_S3, _S6, _S2 = np.sqrt(3.0), np.sqrt(6.0), np.sqrt(2.0)
_LOGLMS_TO_LAB = np.array(
    [
        [1.0 / _S3, 1.0 / _S3, 1.0 / _S3],
        [1.0 / _S6, 1.0 / _S6, -2.0 / _S6],
        [1.0 / _S2, -1.0 / _S2, 0.0],
    ]
)
_LAB_TO_LOGLMS = np.array(
    [
        [_S3 / 3.0, _S6 / 6.0, _S2 / 2.0],
        [_S3 / 3.0, _S6 / 6.0, -_S2 / 2.0],
        [_S3 / 3.0, -_S6 / 3.0, 0.0],
    ]
)
# Keeps log10 finite on pure-black pixels; any nonzero byte stays well above it.
_LMS_FLOOR = 1e-6


@dataclass(frozen=True)
class ColorStats:
    """Per-channel mean and standard deviation in l-alpha-beta space."""

    mean: tuple[float, float, float]
    std: tuple[float, float, float]

    def __post_init__(self):
        if any(s <= 0 for s in self.std):
            raise ValueError(f"std components must be > 0, got {self.std}")


def rgb_to_lab(image) -> np.ndarray:
    """Convert a byte RGB image to float l-alpha-beta, shape (H, W, 3)."""
    rgb = check_rgb_image(image).astype(np.float64) / 255.0
    lms = rgb @ _RGB_TO_LMS.T
    log_lms = np.log10(np.maximum(lms, _LMS_FLOOR))
    return log_lms @ _LOGLMS_TO_LAB.T


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    """Convert l-alpha-beta back to byte RGB, clamping to [0, 255]."""
    log_lms = np.asarray(lab, dtype=np.float64) @ _LAB_TO_LOGLMS.T
    lms = np.power(10.0, log_lms)
    rgb = np.clip(lms @ _LMS_TO_RGB.T, 0.0, 1.0)
    return np.floor(rgb * 255.0 + 0.5).astype(np.uint8)


def lab_stats(image) -> ColorStats:
    """Channel statistics of an image in l-alpha-beta space."""
    lab = rgb_to_lab(image).reshape(-1, 3)
    mean = lab.mean(axis=0)
    std = lab.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return ColorStats(mean=tuple(float(v) for v in mean), std=tuple(float(v) for v in std))


def reinhard_normalize(image, reference: ColorStats) -> np.ndarray:
    """Match an image's l-alpha-beta channel statistics to ``reference``.

    A constant source channel (std ~ 0) is shifted but not scaled.
    """
    lab = rgb_to_lab(image)
    flat = lab.reshape(-1, 3)
    src_mean = flat.mean(axis=0)
    src_std = flat.std(axis=0)
    src_std = np.where(src_std > 1e-12, src_std, 1.0)
    ref_mean = np.asarray(reference.mean, dtype=np.float64)
    ref_std = np.asarray(reference.std, dtype=np.float64)
    out = (lab - src_mean) * (ref_std / src_std) + ref_mean
    return lab_to_rgb(out)


class ReinhardNormalizer(TransformerMixin, BaseEstimator):
    """Stain normalizer: fit on a reference image, transform tiles to match it.

    Parameters
    ----------
    reference_stats : ColorStats, optional
        Precomputed target statistics; when given, fit is a no-op.
    """

    def __init__(self, reference_stats: ColorStats | None = None):
        self.reference_stats = reference_stats

    def fit(self, X, y=None):
        if self.reference_stats is not None:
            self.target_stats_ = self.reference_stats
        else:
            self.target_stats_ = lab_stats(X)
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "target_stats_"):
            raise RuntimeError("ReinhardNormalizer must be fit before transform")
        return reinhard_normalize(X, self.target_stats_)
