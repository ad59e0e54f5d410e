"""Poisson-Gaussian denoising energy model.

Observation model: y_l ~ N(x_l, v(x_l)) with intensity-dependent variance
v(x_l) = beta1 * x_l + beta2. The energy is a weighted sum of the Gaussian
data term 0.5 (x - y)^2 / v(x) and a robust smoothness term over horizontal
and vertical forward differences.

The variance is floored at `variance_floor` before use: sampled states can
leave [0, 1] and would otherwise drive v(x) to zero or below. On the floored
branch the variance is a constant, so gradient and linearization switch to
the fixed-variance Gaussian form there (keeping A x + b exact everywhere).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .energy import (
    FORWARD_DIFF_H,
    FORWARD_DIFF_V,
    EnergyModel,
    LinearizedGradient,
    SmoothnessTerm,
)
from .linops import SparseSymMatrix
from .penalties import GeneralizedCharbonnier

STENCILS = (FORWARD_DIFF_H, FORWARD_DIFF_V)


@dataclass(frozen=True)
class PoissonGaussianParams:
    beta1: float
    beta2: float
    lambda_data: float
    lambda_smooth: float
    penalty: GeneralizedCharbonnier
    variance_floor: float | None = None

    def __post_init__(self):
        if self.beta1 < 0 or self.beta2 < 0:
            raise ValueError("noise parameters must be nonnegative")
        if self.beta1 == 0 and self.beta2 == 0:
            raise ValueError("beta1 and beta2 must not both be zero")
        if self.lambda_data < 0 or self.lambda_smooth < 0:
            raise ValueError("term weights must be nonnegative")
        if self.variance_floor is None:
            object.__setattr__(self, "variance_floor", self.beta2)
        if not self.variance_floor > 0:
            raise ValueError("variance floor must be positive (set one when beta2 = 0)")


def add_noise(clean, beta1, beta2, rng):
    """Simulate the sensor: y = clip(x + sqrt(max(beta1 x + beta2, 0)) n, 0, 1)."""
    clean = np.asarray(clean, dtype=float)
    if beta1 < 0 or beta2 < 0:
        raise ValueError("noise parameters must be nonnegative")
    if clean.min() < 0 or clean.max() > 1:
        raise ValueError("clean image must lie in [0, 1]")
    scale = np.sqrt(np.maximum(beta1 * clean + beta2, 0.0))
    return np.clip(clean + scale * rng.standard_normal(clean.shape), 0.0, 1.0)


def _variance(x, params):
    """Floored variance and the mask of pixels on the smooth (unfloored) branch."""
    raw = params.beta1 * x + params.beta2
    smooth = raw >= params.variance_floor
    return np.maximum(raw, params.variance_floor), smooth


def data_energy(x, y, params):
    """Unweighted data term 0.5 sum (x - y)^2 / v(x)."""
    v, _ = _variance(np.asarray(x, dtype=float), params)
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return 0.5 * float(np.sum(d * d / v))

def data_grad(x, y, params):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v, smooth = _variance(x, params)
    d = x - y
    g = d / v
    g -= np.where(smooth, params.beta1 * d * d / (2.0 * v * v), 0.0)
    return g


def data_linearize(x, y, params):
    """Diagonal linearization of the data term, exact at x.

    On the smooth branch the diagonal is (beta1 x / 2 + beta2 + beta1 y) / v^2
    and the offset -(y / v + beta1 y^2 / (2 v^2)); on the floored branch both
    reduce to the fixed-variance Gaussian 1/v and -y/v.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("estimate and observation shapes differ")
    v, smooth_mask = _variance(x, params)
    v2 = v * v
    diag = np.where(
        smooth_mask,
        (params.beta1 * x / 2.0 + params.beta2 + params.beta1 * y) / v2,
        1.0 / v,
    )
    offset = np.where(
        smooth_mask,
        -(y / v + params.beta1 * y * y / (2.0 * v2)),
        -y / v,
    )
    return LinearizedGradient(SparseSymMatrix.from_diagonal(diag), offset, x)


class DenoiseModel(EnergyModel):
    """Full Poisson-Gaussian denoising energy over a flattened image state."""

    def __init__(self, noisy, params: PoissonGaussianParams):
        noisy = np.asarray(noisy, dtype=float)
        if noisy.ndim != 2:
            raise ValueError("observation must be a 2-D image")
        self.height, self.width = noisy.shape
        self.noisy = noisy
        self.y = noisy.ravel()
        self.params = params
        self.smoothness = SmoothnessTerm(STENCILS, params.penalty,
                                         self.height, self.width)
        self.dim = self.y.size
        # Diagonal entries stay nonnegative for observations in [0, 1] as
        # long as the floor is at least beta2, so the PSD guarantee holds.
        self.psd_guaranteed = True

    def _check(self, x):
        x = np.asarray(x, dtype=float).ravel()
        if x.shape != (self.dim,):
            raise ValueError(f"state length {x.size} does not match image size {self.dim}")
        return x

    def energy(self, x):
        x = self._check(x)
        return (self.params.lambda_data * data_energy(x, self.y, self.params)
                + self.params.lambda_smooth * self.smoothness.energy(x))

    def grad(self, x):
        x = self._check(x)
        return (self.params.lambda_data * data_grad(x, self.y, self.params)
                + self.params.lambda_smooth * self.smoothness.grad(x))

    def data_linearize(self, x):
        return data_linearize(self._check(x), self.y, self.params)

    def linearize(self, x):
        x = self._check(x)
        lin_d = data_linearize(x, self.y, self.params)
        a = sp.diags_array(self.params.lambda_data * lin_d.matrix.diag, format="csr")
        if self.params.lambda_smooth != 0:
            a = a + self.smoothness.linearize_matrix(x).csr * self.params.lambda_smooth
        return LinearizedGradient(SparseSymMatrix(a, validate=False),
                                  self.params.lambda_data * lin_d.offset, x)


def _paired(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"estimate shape {x.shape} does not match observation {y.shape}")
    return x, y


def energy(x, y, params):
    """Energy of a 2-D estimate against a 2-D observation."""
    x, y = _paired(x, y)
    return DenoiseModel(y, params).energy(x.ravel())


def grad(x, y, params):
    """Exact gradient, returned with the image shape."""
    x, y = _paired(x, y)
    return DenoiseModel(y, params).grad(x.ravel()).reshape(x.shape)


def linearize(x, y, params):
    """Full-energy linearization of a 2-D estimate (flattened state)."""
    x, y = _paired(x, y)
    return DenoiseModel(y, params).linearize(x.ravel())
