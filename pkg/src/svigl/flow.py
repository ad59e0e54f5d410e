"""Brightness-constancy optical flow energy model.

The data term is plain brightness constancy; gradient-constancy likelihoods
(EpicFlow-style energies) are deliberately out of scope, as are match-based
initializers and coarse-to-fine pyramids.

The flow state stacks the horizontal components of all pixels first, then the
vertical components: x = (u_1..u_L, v_1..v_L). The data term penalizes the
Taylor-expanded brightness residual

    I_t + I_x (u - u0) + I_y (v - v0)

around an expansion flow x0, with image quantities sampled from the second
frame at the x0-warped positions. Warps landing outside the image are masked
out and contribute nothing. The smoothness term couples both channels through
the Euclidean norm of the per-pixel derivative responses.

Inference runs an outer relinearization loop (recompute the warp at the
current mean, rerun the inner optimizer, move the expansion point), which is
the usual way to get beyond the validity radius of a single Taylor expansion.
No coarse-to-fine pyramid is used, so motions should stay in the low
single-digit pixel range.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from . import baselines
from .energy import (
    FORWARD_DIFF_H,
    FORWARD_DIFF_V,
    EnergyModel,
    LinearizedGradient,
    SmoothnessTerm,
)
from .linops import SparseSymMatrix
from .meanfield import SviglConfig, Trace, VariationalGaussian, run
from .penalties import GeneralizedCharbonnier

STENCILS = (FORWARD_DIFF_H, FORWARD_DIFF_V)

SIGMA_INIT = 1e-3


@dataclass(frozen=True)
class FlowField:
    """Dense flow as a stacked state vector of length 2 * width * height."""

    width: int
    height: int
    state: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "state", np.asarray(self.state, dtype=float))
        if self.state.shape != (2 * self.width * self.height,):
            raise ValueError("state length does not match 2 * width * height")
        if not np.all(np.isfinite(self.state)):
            raise ValueError("flow must be finite")

    @classmethod
    def zeros(cls, width, height):
        return cls(width, height, np.zeros(2 * width * height))

    @classmethod
    def from_uv(cls, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if u.shape != v.shape or u.ndim != 2:
            raise ValueError("u and v must be 2-D arrays of equal shape")
        h, w = u.shape
        return cls(w, h, np.concatenate([u.ravel(), v.ravel()]))

    @property
    def pixels(self):
        return self.width * self.height

    @property
    def u(self):
        return self.state[: self.pixels].reshape(self.height, self.width)

    @property
    def v(self):
        return self.state[self.pixels :].reshape(self.height, self.width)


@dataclass(frozen=True)
class WarpData:
    """Warped temporal/spatial derivatives; invalid pixels are zeroed out."""

    i_t: np.ndarray
    i_x: np.ndarray
    i_y: np.ndarray
    valid: np.ndarray


@dataclass(frozen=True)
class FlowParams:
    lambda_data: float
    lambda_smooth: float
    rho_data: GeneralizedCharbonnier
    rho_smooth: GeneralizedCharbonnier
    outer_iterations: int = 3

    def __post_init__(self):
        if self.lambda_data < 0 or self.lambda_smooth < 0:
            raise ValueError("term weights must be nonnegative")
        if self.outer_iterations < 1:
            raise ValueError("outer_iterations must be >= 1")


def _bilinear(img, rr, cc):
    h, w = img.shape
    rr = np.clip(rr, 0.0, h - 1.0)
    cc = np.clip(cc, 0.0, w - 1.0)
    r0 = np.floor(rr).astype(int)
    c0 = np.floor(cc).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = rr - r0
    fc = cc - c0
    return ((1 - fr) * (1 - fc) * img[r0, c0]
            + (1 - fr) * fc * img[r0, c1]
            + fr * (1 - fc) * img[r1, c0]
            + fr * fc * img[r1, c1])


def warp_derivatives(i1, i2, flow0: FlowField):
    """Temporal and spatial derivatives of i2 sampled at the flow0 warp.

    Spatial derivatives are central differences of i2 on the grid, sampled
    bilinearly at pixel + flow0. Pixels whose warp leaves the image are
    flagged invalid and their derivative entries zeroed.
    """
    i1 = np.asarray(i1, dtype=float)
    i2 = np.asarray(i2, dtype=float)
    h, w = i1.shape
    if i2.shape != (h, w) or (flow0.height, flow0.width) != (h, w):
        raise ValueError("image and flow shapes differ")
    rr, cc = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float),
                         indexing="ij")
    pr = rr + flow0.v
    pc = cc + flow0.u
    valid = (pr >= 0) & (pr <= h - 1) & (pc >= 0) & (pc <= w - 1)
    gy, gx = np.gradient(i2)
    i_t = np.where(valid, _bilinear(i2, pr, pc) - i1, 0.0)
    i_x = np.where(valid, _bilinear(gx, pr, pc), 0.0)
    i_y = np.where(valid, _bilinear(gy, pr, pc), 0.0)
    return WarpData(i_t=i_t, i_x=i_x, i_y=i_y, valid=valid)


def _residual(x, warp, x0):
    ell = warp.i_t.size
    du = (x[:ell] - x0[:ell]).reshape(warp.i_t.shape)
    dv = (x[ell:] - x0[ell:]).reshape(warp.i_t.shape)
    return warp.i_t + warp.i_x * du + warp.i_y * dv


def data_energy(x, warp, x0, rho_d):
    return float(np.sum(rho_d.rho(_residual(x, warp, x0))))


def data_grad(x, warp, x0, rho_d):
    rp = rho_d.rho_prime(_residual(x, warp, x0))
    return np.concatenate([(rp * warp.i_x).ravel(), (rp * warp.i_y).ravel()])


def data_linearize(warp, x, x0, rho_d):
    """Per-pixel 2x2 block linearization of the data term, exact at x.

    Each block is weight * g g^T with g = (I_x, I_y), hence PSD; the offset
    is (weight * I_x I_t, weight * I_y I_t) - A x0.
    """
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    wgt = rho_d.weight(_residual(x, warp, x0)).ravel()
    ix = warp.i_x.ravel()
    iy = warp.i_y.ravel()
    auu = wgt * ix * ix
    avv = wgt * iy * iy
    auv = wgt * ix * iy
    a = sp.block_array(
        [[sp.diags_array(auu), sp.diags_array(auv)],
         [sp.diags_array(auv), sp.diags_array(avv)]],
        format="csr",
    )
    it = warp.i_t.ravel()
    b = np.concatenate([wgt * ix * it, wgt * iy * it]) - a @ x0
    return LinearizedGradient(SparseSymMatrix(a, validate=False), b, x)


def flow_energy(x, warp, x0, params: FlowParams):
    h, w = warp.i_t.shape
    smooth = SmoothnessTerm(STENCILS, params.rho_smooth, h, w, channels=2, coupled=True)
    return (params.lambda_data * data_energy(x, warp, x0, params.rho_data)
            + params.lambda_smooth * smooth.energy(x))


def flow_linearize(x, warp, x0, params: FlowParams):
    h, w = warp.i_t.shape
    smooth = SmoothnessTerm(STENCILS, params.rho_smooth, h, w, channels=2, coupled=True)
    lin_d = data_linearize(warp, x, x0, params.rho_data)
    a = lin_d.matrix.csr * params.lambda_data
    if params.lambda_smooth != 0:
        a = a + smooth.linearize_matrix(x).csr * params.lambda_smooth
    return LinearizedGradient(SparseSymMatrix(a, validate=False),
                              params.lambda_data * lin_d.offset, np.asarray(x, dtype=float))


class FlowModel(EnergyModel):
    """Flow energy with the warp and expansion point frozen."""

    def __init__(self, warp: WarpData, x0, params: FlowParams):
        self.warp = warp
        self.x0 = np.asarray(x0, dtype=float)
        self.params = params
        self.height, self.width = warp.i_t.shape
        self.dim = 2 * self.height * self.width
        if self.x0.shape != (self.dim,):
            raise ValueError("expansion point length does not match warp shape")
        self.smoothness = SmoothnessTerm(STENCILS, params.rho_smooth,
                                         self.height, self.width,
                                         channels=2, coupled=True)
        self.psd_guaranteed = True

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"state length {x.size} does not match {self.dim}")
        return x

    def energy(self, x):
        x = self._check(x)
        return (self.params.lambda_data * data_energy(x, self.warp, self.x0, self.params.rho_data)
                + self.params.lambda_smooth * self.smoothness.energy(x))

    def grad(self, x):
        x = self._check(x)
        return (self.params.lambda_data * data_grad(x, self.warp, self.x0, self.params.rho_data)
                + self.params.lambda_smooth * self.smoothness.grad(x))

    def linearize(self, x):
        x = self._check(x)
        lin_d = data_linearize(self.warp, x, self.x0, self.params.rho_data)
        a = lin_d.matrix.csr * self.params.lambda_data
        if self.params.lambda_smooth != 0:
            a = a + self.smoothness.linearize_matrix(x).csr * self.params.lambda_smooth
        return LinearizedGradient(SparseSymMatrix(a, validate=False),
                                  self.params.lambda_data * lin_d.offset, x)


def svigl_inner(config: SviglConfig, *, sigma_init=SIGMA_INIT):
    """Inner loop: mean-field inference, seeded differently per outer call."""
    call = [0]

    def inner(model, start, clock=time.perf_counter):
        if isinstance(start, VariationalGaussian):
            theta0 = start
        else:
            theta0 = VariationalGaussian(np.asarray(start, dtype=float),
                                         np.full(model.dim, sigma_init))
        cfg = replace(config, seed=config.seed + call[0])
        call[0] += 1
        return run(theta0, model, cfg, clock=clock)

    return inner


def first_order_inner(schedule, seed, *, sigma_init=SIGMA_INIT):
    """Inner loop: first-order SVI (SGD or Adam), reseeded per outer call."""
    call = [0]

    def inner(model, start, clock=time.perf_counter):
        if isinstance(start, VariationalGaussian):
            theta0 = start
        else:
            theta0 = VariationalGaussian(np.asarray(start, dtype=float),
                                         np.full(model.dim, sigma_init))
        call[0] += 1
        return baselines.svi_first_order(theta0, model, schedule, seed + call[0] - 1,
                                         clock=clock)

    return inner


def gl_inner(iterations, *, sor_iterations=100, sor_omega=1.95):
    """Inner loop: MAP estimation by iterated gradient linearization."""

    def inner(model, start, clock=time.perf_counter):
        x0 = start.mu if isinstance(start, VariationalGaussian) else np.asarray(start, dtype=float)
        return baselines.gl_map(x0, model, iterations,
                                sor_iterations=sor_iterations, sor_omega=sor_omega,
                                clock=clock)

    return inner


def infer(i1, i2, init: FlowField, params: FlowParams, inner, *,
          clock=time.perf_counter):
    """Outer relinearization loop around an inner optimizer.

    Each outer iteration rewarps at the current mean flow, runs `inner` on
    the frozen model, and moves the expansion point to the new mean. Returns
    the inner result of the last outer iteration (a FlowField for MAP inners,
    a VariationalGaussian for mean-field inners) and the concatenated trace.
    """
    width, height = init.width, init.height
    current = init.state.copy()
    carry = None
    trace = Trace()
    offset = 0
    start = clock()
    result = None
    for _ in range(params.outer_iterations):
        warp = warp_derivatives(i1, i2, FlowField(width, height, current))
        model = FlowModel(warp, current, params)
        base = clock() - start
        result, inner_trace = inner(model, carry if carry is not None else current,
                                    clock=clock)
        trace.extend(inner_trace, offset=offset, seconds_offset=base)
        offset += len(inner_trace)
        carry = result
        current = result.mu if isinstance(result, VariationalGaussian) else result
    if isinstance(result, VariationalGaussian):
        return result, trace
    return FlowField(width, height, current), trace


def aepe(est: FlowField, gt: FlowField):
    """Average endpoint error: mean Euclidean distance between flow vectors."""
    if (est.width, est.height) != (gt.width, gt.height):
        raise ValueError("flow field shapes differ")
    du = est.u - gt.u
    dv = est.v - gt.v
    return float(np.mean(np.sqrt(du * du + dv * dv)))
