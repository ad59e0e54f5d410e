"""Locally-optimal-projection point cloud smoothing.

The energy attracts each estimate point toward the noisy input points and
(optionally) repels it from the other current estimates, both weighted by a
Gaussian kernel h(r) = exp(-16 r^2 / h0^2) evaluated at the *current*
estimate positions C:

    E(X, P, C) = sum_ij |x_i - p_j| h(|c_i - p_j|)
               - lambda sum_{i, i' != i} |x_i - c_i'| h(|c_i - c_i'|)

Because the kernel arguments are frozen at C, the gradient admits a diagonal
linearization (one scalar per point, shared by its three coordinates). The
solver runs a fixed-point loop: freeze C at the current mean, take a single
mean-field update, repeat.

State layout follows the package convention of plane stacking:
(x coords..., y coords..., z coords...), length 3N.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

from .energy import EnergyModel, LinearizedGradient
from .linops import SparseSymMatrix
from .meanfield import SviglConfig, Trace, VariationalGaussian, run


@dataclass(frozen=True)
class LopParams:
    bandwidth: float
    repulsion: float = 0.0
    eps: float | None = None
    outer_iterations: int = 10
    samples: int = 5
    sigma0: float = 1e-3

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.repulsion < 0:
            raise ValueError("repulsion weight must be nonnegative")
        if self.eps is None:
            object.__setattr__(self, "eps", 1e-6 * self.bandwidth)
        if not self.eps > 0:
            raise ValueError("distance floor eps must be positive")
        if self.outer_iterations < 0 or self.samples < 1:
            raise ValueError("outer_iterations must be >= 0 and samples >= 1")


def kernel(r, bandwidth):
    r = np.asarray(r, dtype=float)
    return np.exp(-16.0 * r * r / bandwidth**2)


def state_to_points(state):
    state = np.asarray(state, dtype=float)
    return state.reshape(3, state.size // 3).T


def points_to_state(points):
    return np.asarray(points, dtype=float).T.ravel()


def _as_points(p):
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] == 0:
        raise ValueError("point cloud must be a nonempty (N, 3) array")
    if not np.all(np.isfinite(p)):
        raise ValueError("point coordinates must be finite")
    return p


def project_init(points, seeds, params: LopParams):
    """Kernel-weighted mean of the inputs around each seed (L2 projection).

    Weights are normalized in shifted log space, so remote seeds degrade
    gracefully to the nearest-point limit instead of underflowing to 0/0.
    """
    points = _as_points(points)
    seeds = _as_points(seeds)
    exponent = -16.0 * cdist(seeds, points, "sqeuclidean") / params.bandwidth**2
    w = np.exp(exponent - exponent.max(axis=1, keepdims=True))
    return (w @ points) / w.sum(axis=1)[:, None]


def _pair_weights(x, p, c, params):
    """Kernel-over-floored-distance weights for attraction and repulsion."""
    w_attr = kernel(cdist(c, p), params.bandwidth) / np.maximum(cdist(x, p), params.eps)
    w_rep = None
    if params.repulsion > 0:
        h_cc = kernel(cdist(c, c), params.bandwidth)
        np.fill_diagonal(h_cc, 0.0)
        w_rep = h_cc / np.maximum(cdist(x, c), params.eps)
    return w_attr, w_rep


def energy(x_state, p, c, params: LopParams):
    """Energy value (no distance floor; plain pairwise distances)."""
    x = state_to_points(x_state)
    p = _as_points(p)
    c = _as_points(c)
    total = float(np.sum(cdist(x, p) * kernel(cdist(c, p), params.bandwidth)))
    if params.repulsion > 0:
        h_cc = kernel(cdist(c, c), params.bandwidth)
        np.fill_diagonal(h_cc, 0.0)
        total -= params.repulsion * float(np.sum(cdist(x, c) * h_cc))
    return total


def grad(x_state, p, c, params: LopParams):
    """Gradient with floored pair distances (matches the linearization)."""
    x = state_to_points(x_state)
    p = _as_points(p)
    c = _as_points(c)
    w_attr, w_rep = _pair_weights(x, p, c, params)
    g = x * w_attr.sum(axis=1)[:, None] - w_attr @ p
    if w_rep is not None:
        g -= params.repulsion * (x * w_rep.sum(axis=1)[:, None] - w_rep @ c)
    return points_to_state(g)


def linearize(x_state, p, c, params: LopParams):
    """Diagonal linearization: one scalar per point, replicated per coordinate.

    The per-point diagonal sum(h/dist) - lambda sum(h/dist) can turn zero or
    negative when repulsion dominates, which would break the solver, so it is
    floored at eps (the floored entries lose gradient exactness).
    """
    x_state = np.asarray(x_state, dtype=float)
    x = state_to_points(x_state)
    p = _as_points(p)
    c = _as_points(c)
    w_attr, w_rep = _pair_weights(x, p, c, params)
    a = w_attr.sum(axis=1)
    b = -(w_attr @ p)
    if w_rep is not None:
        a = a - params.repulsion * w_rep.sum(axis=1)
        b = b + params.repulsion * (w_rep @ c)
    a = np.maximum(a, params.eps)
    return LinearizedGradient(SparseSymMatrix.from_diagonal(np.tile(a, 3)),
                              points_to_state(b), x_state)


class LopModel(EnergyModel):
    """LOP energy with the input cloud and current estimates frozen."""

    def __init__(self, p, c, params: LopParams):
        self.p = _as_points(p)
        self.c = _as_points(c)
        self.params = params
        self.dim = 3 * self.c.shape[0]
        self.psd_guaranteed = False

    def energy(self, x):
        return energy(x, self.p, self.c, self.params)

    def grad(self, x):
        return grad(x, self.p, self.c, self.params)

    def linearize(self, x):
        return linearize(x, self.p, self.c, self.params)


def run_lop(p, seeds, params: LopParams, config: SviglConfig | None = None, *,
            clock=time.perf_counter):
    """Fixed-point smoothing loop with one mean-field update per iteration.

    Each of `params.outer_iterations` steps freezes C at the current mean,
    performs exactly one mean-field update on the frozen model, and moves C.
    Returns the final (mu, sigma) over the 3N-dimensional state and the trace.
    """
    p = _as_points(p)
    x0 = project_init(p, seeds, params)
    if config is None:
        config = SviglConfig(iterations=1, sample_count=params.samples)
    else:
        config = replace(config, iterations=1)
    theta = VariationalGaussian(points_to_state(x0), np.full(3 * x0.shape[0], params.sigma0))
    trace = Trace()
    start = clock()
    for t in range(params.outer_iterations):
        model = LopModel(p, state_to_points(theta.mu), params)
        step_config = replace(config, seed=config.seed + t)
        base = clock() - start
        theta, inner = run(theta, model, step_config, clock=clock)
        trace.extend(inner, offset=t, seconds_offset=base)
    return theta, trace
