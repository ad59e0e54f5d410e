"""Evaluation metrics: PSNR, sparsification curves, Spearman correlation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

SPARSIFICATION_FRACTIONS = np.arange(20) * 0.05


def psnr(est, ref, peak=1.0):
    """10 log10(peak^2 / MSE); returns +inf when the images are identical."""
    est = np.asarray(est, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if est.shape != ref.shape:
        raise ValueError("image shapes differ")
    mse = float(np.mean((est - ref) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


@dataclass(frozen=True)
class SparsificationCurve:
    """Mean error over retained sites vs. removal fraction, normalized at 0."""

    fractions: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.fractions, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if f.shape != v.shape or f.ndim != 1 or f.size == 0:
            raise ValueError("fractions and values must be matching 1-D arrays")
        if f[0] != 0.0 or np.any(np.diff(f) <= 0) or f[-1] >= 1.0:
            raise ValueError("fractions must be strictly increasing in [0, 1)")
        if v[0] != 1.0:
            raise ValueError("curve must be normalized to 1 at fraction 0")
        object.__setattr__(self, "fractions", f)
        object.__setattr__(self, "values", v)

    def auc(self):
        return float(np.trapezoid(self.values, self.fractions))


def sparsification_curve(errors, uncertainties, fractions=SPARSIFICATION_FRACTIONS):
    """Remove the most-uncertain fraction of sites and average the rest.

    Sites are ordered by descending uncertainty with ties broken stably by
    site index; the number removed at fraction f is floor(f * n). Values are
    normalized by the fraction-0 mean.
    """
    errors = np.asarray(errors, dtype=float)
    uncertainties = np.asarray(uncertainties, dtype=float)
    if errors.size == 0:
        raise ValueError("empty input")
    if errors.shape != uncertainties.shape or errors.ndim != 1:
        raise ValueError("errors and uncertainties must be matching 1-D arrays")
    order = np.argsort(-uncertainties, kind="stable")
    ranked = errors[order]
    n = errors.size
    tail_means = np.concatenate([np.cumsum(ranked[::-1])[::-1] / np.arange(n, 0, -1), [0.0]])
    base = float(tail_means[0])
    if base == 0.0:
        raise ValueError("all-zero errors: curve undefined")
    values = []
    for f in fractions:
        removed = min(int(np.floor(f * n + 1e-9)), n)
        values.append(tail_means[removed] / base)
    return SparsificationCurve(np.asarray(fractions, dtype=float), np.asarray(values))


def sparsification_auc(errors, uncertainties, fractions=SPARSIFICATION_FRACTIONS):
    """Trapezoidal area under the sparsification curve (0 for all-zero errors)."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("empty input")
    if not np.any(errors):
        return 0.0
    return sparsification_curve(errors, uncertainties, fractions).auc()


def spearman_cc(a, b, *, return_degenerate=False):
    """Spearman rank correlation with average ranks for ties.

    Zero rank variance in either argument makes the coefficient undefined;
    0.0 is returned then, with the degenerate flag set when requested.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("inputs must be matching 1-D arrays of length >= 2")
    ra = rankdata(a)
    rb = rankdata(b)
    da = ra - ra.mean()
    db = rb - rb.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        return (0.0, True) if return_degenerate else 0.0
    cc = float(np.clip(float(da @ db) / denom, -1.0, 1.0))
    return (cc, False) if return_degenerate else cc
