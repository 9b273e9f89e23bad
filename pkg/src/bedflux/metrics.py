"""Reconstruction-quality statistics: MAPE, Pearson correlation, histogram densities."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import AllExcluded, ConfigError, DegenerateSamples, ShapeMismatch, ZeroVariance

DEFAULT_MAPE_EPSILON = 1e-6
MIN_PDF_BINS = 16


class MapeResult(NamedTuple):
    percent: float
    excluded: int


@dataclass(frozen=True)
class PdfEstimate:
    bin_edges: np.ndarray
    densities: np.ndarray

    def integral(self) -> float:
        """Total probability mass, ``sum(density * bin width)``."""
        return float(np.sum(self.densities * np.diff(self.bin_edges)))


def mape(truth, pred, epsilon: float = DEFAULT_MAPE_EPSILON) -> MapeResult:
    """Mean absolute percentage error, skipping entries with ``|truth| < epsilon``."""
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.shape != pred.shape:
        raise ShapeMismatch(f"truth {truth.shape} and prediction {pred.shape} differ in shape")
    if epsilon < 0:
        raise ConfigError("epsilon must be >= 0")
    keep = np.abs(truth) >= epsilon
    if epsilon == 0:
        keep &= truth != 0
    excluded = int(truth.size - np.count_nonzero(keep))
    if not keep.any():
        raise AllExcluded(f"all {truth.size} entries are below epsilon={epsilon}")
    err = np.abs(pred[keep] - truth[keep]) / np.abs(truth[keep])
    return MapeResult(float(100.0 * err.mean()), excluded)


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeMismatch(f"arrays of length {a.size} and {b.size}")
    if a.size < 2:
        raise ConfigError("pearson needs at least two samples")
    da = a - a.mean()
    db = b - b.mean()
    na = np.sqrt(np.dot(da, da))
    nb = np.sqrt(np.dot(db, db))
    if na == 0 or nb == 0:
        raise ZeroVariance("correlation undefined for a constant sequence")
    r = float(np.dot(da, db) / (na * nb))
    return min(1.0, max(-1.0, r))


def freedman_diaconis_bins(samples, floor: int = MIN_PDF_BINS) -> int:
    """Freedman-Diaconis bin count, at least ``floor`` and at most ``max(floor, n)``.

    The cap guards against a tiny interquartile range with a long tail, where
    the raw rule asks for far more bins than there are samples.
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    q75, q25 = np.percentile(samples, [75, 25])
    iqr = q75 - q25
    span = samples.max() - samples.min()
    if iqr <= 0 or span <= 0:
        return floor
    width = 2.0 * iqr / np.cbrt(samples.size)
    return max(floor, min(int(np.ceil(span / width)), samples.size))


def pdf_estimate(samples, bins: int | None = None) -> PdfEstimate:
    """Equal-width histogram density over ``[min, max]``.

    ``bins=None`` uses the Freedman-Diaconis rule with a floor of 16 bins.
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size < 2 or samples.min() == samples.max():
        raise DegenerateSamples("need at least two distinct samples")
    if bins is None:
        bins = freedman_diaconis_bins(samples)
    if bins < 2:
        raise ConfigError(f"bins must be >= 2, got {bins}")
    dens, edges = np.histogram(samples, bins=int(bins), range=(samples.min(), samples.max()), density=True)
    return PdfEstimate(bin_edges=edges, densities=dens)
