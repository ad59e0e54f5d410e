"""Gaussian mean-field variational optimizer driven by gradient linearizations.

One iteration: draw reparameterized samples x_i = mu + sigma * z_i, linearize
the energy gradient at each sample, average the pieces into a 2L x 2L block
system over (mu, sigma), and solve it with warm-started SOR. The entropy of
the Gaussian enters the scale rows through a second-order expansion of
log(sigma) around the current iterate, contributing 2/sigma_t^2 on the
diagonal and -3/sigma_t to the offset (the expansion is exact at sigma_t, so
the stacked system reproduces the stochastic KL gradient there).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .energy import LinearizedGradient
from .linops import BlockSystem, NonFiniteError, SparseSymMatrix, sor_solve

LOG_2PI_E = math.log(2.0 * math.pi) + 1.0

SIGMA_MIN = 1e-12


@dataclass(frozen=True)
class VariationalGaussian:
    """Fully factorized Gaussian with per-coordinate mean and scale."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 1:
            raise ValueError("mu and sigma must be 1-D vectors of equal length")
        if not np.all(np.isfinite(self.mu)) or not np.all(np.isfinite(self.sigma)):
            raise ValueError("parameters must be finite")
        if not np.all(self.sigma > 0):
            raise ValueError("sigma must be strictly positive")

    @property
    def dim(self):
        return self.mu.size

    def as_vector(self):
        """Stacked parameter vector (mu..., sigma...) of length 2L."""
        return np.concatenate([self.mu, self.sigma])


@dataclass(frozen=True)
class SampleSet:
    """Base draws z and the corresponding states mu + sigma * z."""

    z: np.ndarray
    states: np.ndarray
    antithetic: bool = False
    standardized: bool = False

    @property
    def count(self):
        return self.z.shape[0]

    @property
    def dim(self):
        return self.z.shape[1]


@dataclass(frozen=True)
class SviglConfig:
    iterations: int = 100
    sample_count: int = 10
    alpha: float = 1.0
    sor_iterations: int = 100
    sor_omega: float = 1.95
    seed: int = 0
    antithetic: bool = False
    standardize: bool = False
    taylor_half: bool = False
    exact_solve: bool = False
    final_kl_samples: int = 0

    def __post_init__(self):
        # alpha = 0 is the degenerate identity blend; kept legal so the
        # no-op case is expressible.
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 < self.sor_omega < 2.0:
            raise ValueError(f"sor_omega must lie in (0, 2), got {self.sor_omega}")
        if self.iterations < 0 or self.sample_count < 1:
            raise ValueError("iterations must be >= 0 and sample_count >= 1")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    objective: float
    seconds: float
    mu_mean: float | None = None
    sigma_mean: float | None = None


@dataclass
class Trace:
    """Per-iteration objective/time records with monotone iteration indices."""

    records: list = field(default_factory=list)

    def append(self, record: TraceRecord):
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError("iteration indices must be strictly increasing")
        self.records.append(record)

    def extend(self, other: "Trace", offset=0, seconds_offset=0.0):
        for r in other.records:
            self.append(TraceRecord(r.iteration + offset, r.objective,
                                    r.seconds + seconds_offset,
                                    r.mu_mean, r.sigma_mean))

    @property
    def final(self):
        return self.records[-1]

    def objectives(self):
        return np.array([r.objective for r in self.records])

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def draw_samples(theta, count, rng, *, antithetic=False, standardize=False):
    """Draw `count` reparameterized samples from theta.

    Antithetic draws come in adjacent (+z, -z) pairs (count must be even);
    standardization recenters and rescales each coordinate so that over the
    set mean(z) = 0 and mean(z^2) = 1 (count must be >= 2).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    dim = theta.dim
    if antithetic:
        if count % 2:
            raise ValueError("antithetic sampling requires an even count")
        base = rng.standard_normal((count // 2, dim))
        z = np.empty((count, dim))
        z[0::2] = base
        z[1::2] = -base
    else:
        z = rng.standard_normal((count, dim))
    if standardize:
        if count < 2:
            raise ValueError("standardization requires count >= 2")
        centered = z - z.mean(axis=0)
        rms = np.sqrt(np.mean(centered * centered, axis=0))
        if np.any(rms == 0):
            raise ValueError("degenerate draw: zero variance in some coordinate")
        z = centered / rms
    states = theta.mu + theta.sigma * z
    return SampleSet(z=z, states=states, antithetic=antithetic, standardized=standardize)


def _linearization(provider, state):
    lin = provider(state)
    if isinstance(lin, LinearizedGradient):
        return lin.matrix.csr, lin.offset
    a, b = lin
    if isinstance(a, SparseSymMatrix):
        a = a.csr
    return a, np.asarray(b, dtype=float)


def assemble_system(samples, linearize, sigma_t, *, taylor_half=False):
    """Average per-sample linearizations into the stacked (mu, sigma) system.

    Blocks (D(v) = diagonal matrix of v, means over samples i):
        a_mm = mean A_i             a_ms = mean A_i D(z_i)
        a_sm = mean D(z_i) A_i      a_ss = mean D(z_i) A_i D(z_i) + D(k/sigma_t^2)
        b_m  = mean b_i             b_s  = mean z_i * b_i - m/sigma_t
    with (k, m) = (2, 3) for the log expansion used here, or (1, 2) when
    `taylor_half` selects the textbook half coefficient.
    """
    sigma_t = np.asarray(sigma_t, dtype=float)
    if not np.all(sigma_t > 0):
        raise ValueError("sigma_t must be strictly positive")
    count, dim = samples.z.shape
    if sigma_t.shape != (dim,):
        raise ValueError("sigma_t length does not match sample dimension")

    b_m = np.zeros(dim)
    b_s = np.zeros(dim)
    pattern = None  # (indptr, indices) shared by every sample so far
    acc = None  # data-array accumulators while the pattern is shared
    blocks = None  # sparse-matrix accumulators once patterns diverge
    for i in range(count):
        a, b = _linearization(linearize, samples.states[i])
        if not np.all(np.isfinite(a.data)) or not np.all(np.isfinite(b)):
            raise NonFiniteError(f"non-finite linearization at sample {i}")
        z = samples.z[i]
        col = z[a.indices]
        row = np.repeat(z, np.diff(a.indptr))
        if blocks is None and pattern is not None and (
            a.indptr is pattern[0] or np.array_equal(a.indptr, pattern[0])
        ) and (a.indices is pattern[1] or np.array_equal(a.indices, pattern[1])):
            acc[0] += a.data
            acc[1] += a.data * col
            acc[2] += a.data * row
            acc[3] += a.data * col * row
        elif blocks is None and pattern is None:
            pattern = (a.indptr, a.indices)
            acc = [a.data.copy(), a.data * col, a.data * row, a.data * col * row]
        else:
            if blocks is None:
                blocks = [
                    sp.csr_array((d, pattern[1].copy(), pattern[0].copy()),
                                 shape=(dim, dim)) for d in acc
                ]
                pattern = acc = None
            scaled = a.copy()
            blocks[0] = blocks[0] + a
            scaled.data = a.data * col
            blocks[1] = blocks[1] + scaled
            scaled = a.copy()
            scaled.data = a.data * row
            blocks[2] = blocks[2] + scaled
            scaled = a.copy()
            scaled.data = a.data * col * row
            blocks[3] = blocks[3] + scaled
        b_m += b
        b_s += z * b
    if blocks is None:
        blocks = [
            sp.csr_array((d, pattern[1], pattern[0]), shape=(dim, dim)) for d in acc
        ]
    inv = 1.0 / count
    quad_coef, lin_coef = (1.0, 2.0) if taylor_half else (2.0, 3.0)
    a_ss = blocks[3] * inv + sp.diags_array(quad_coef / sigma_t**2, format="csr")
    return BlockSystem(
        a_mm=SparseSymMatrix(blocks[0] * inv, validate=False),
        a_ms=blocks[1] * inv,
        a_sm=blocks[2] * inv,
        a_ss=SparseSymMatrix(a_ss, validate=False),
        b_m=b_m * inv,
        b_s=b_s * inv - lin_coef / sigma_t,
    )


def svigl_step(theta, system, config):
    """Solve the stacked system for the root of the linearized KL gradient.

    The solve is warm-started at the current parameters; the result is
    blended as (1 - alpha) theta + alpha theta_hat, after which sigma is
    replaced by its absolute value (exact zeros are raised to a tiny floor
    to keep the positivity invariant).
    """
    ell = system.dim
    if theta.dim != ell:
        raise ValueError("theta dimension does not match system")
    theta_vec = theta.as_vector()
    rhs = -system.b
    if config.exact_solve:
        solution = np.linalg.solve(system.full_matrix().to_dense(), rhs)
    else:
        solution = sor_solve(system, rhs, theta_vec,
                             config.sor_iterations, config.sor_omega)
    blended = (1.0 - config.alpha) * theta_vec + config.alpha * solution
    mu = blended[:ell]
    sigma = np.abs(blended[ell:])
    sigma = np.where(sigma == 0.0, SIGMA_MIN, sigma)
    return VariationalGaussian(mu, sigma)


def kl_unnormalized(theta, model, samples):
    """Sampled KL divergence up to the constant log partition function.

    mean_i E(x_i) - sum_l log sigma_l - (L/2) log(2 pi e).
    """
    total = 0.0
    for state in samples.states:
        e = model.energy(state)
        if not np.isfinite(e):
            raise NonFiniteError("non-finite energy in KL estimate")
        total += e
    return (total / samples.count
            - float(np.sum(np.log(theta.sigma)))
            - 0.5 * theta.dim * LOG_2PI_E)


def run(theta0, model, config, *, clock=time.perf_counter):
    """T iterations of draw / linearize / assemble / solve.

    The trace reuses each iteration's own samples for its KL estimate, so no
    extra energy evaluations occur; `final_kl_samples > 0` appends one extra
    fresh-sample estimate at the final parameters.
    """
    if theta0.dim != model.dim:
        raise ValueError("theta0 dimension does not match model")
    rng = np.random.default_rng(config.seed)
    theta = theta0
    trace = Trace()
    start = clock()
    for t in range(config.iterations):
        samples = draw_samples(theta, config.sample_count, rng,
                               antithetic=config.antithetic,
                               standardize=config.standardize)
        try:
            kl = kl_unnormalized(theta, model, samples)
        except NonFiniteError as exc:
            raise NonFiniteError(f"{exc} (iteration {t})") from exc
        system = assemble_system(samples, model.linearize, theta.sigma,
                                 taylor_half=config.taylor_half)
        theta = svigl_step(theta, system, config)
        trace.append(TraceRecord(t, kl, clock() - start,
                                 float(np.mean(theta.mu)), float(np.mean(theta.sigma))))
    if config.final_kl_samples > 0:
        samples = draw_samples(theta, config.final_kl_samples, rng,
                               antithetic=config.antithetic,
                               standardize=config.standardize)
        trace.append(TraceRecord(config.iterations,
                                 kl_unnormalized(theta, model, samples),
                                 clock() - start,
                                 float(np.mean(theta.mu)), float(np.mean(theta.sigma))))
    return theta, trace


def entropy_uncertainty(theta, channels):
    """Per-site marginal entropy over channel groups.

    Channels are stacked plane by plane (all of channel 0, then channel 1,
    ...), matching the state layout used by the multi-channel models. Each
    site contributes sum_ch (log sigma + 0.5 log(2 pi e)).
    """
    if channels < 1 or theta.dim % channels:
        raise ValueError("dimension must be divisible by channels")
    sites = theta.dim // channels
    sig = theta.sigma.reshape(channels, sites)
    return np.sum(np.log(sig), axis=0) + channels * 0.5 * LOG_2PI_E
