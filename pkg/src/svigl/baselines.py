"""Comparison optimizers: first-order SVI (SGD / Adam), MAP by iterated
gradient linearization, and the diagonal Laplace approximation.

The first-order methods use the plain reparameterized KL gradient with the
exact entropy gradient 1/sigma (no expansion of the logarithm): they have no
linear system to assemble, so there is no reason to approximate the entropy.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .linops import NonFiniteError, sor_solve
from .meanfield import Trace, TraceRecord, VariationalGaussian, draw_samples, kl_unnormalized

SIGMA_CLAMP = 1e-12


@dataclass(frozen=True)
class OptimizerSchedule:
    """First-order optimizer settings.

    SGD divides the initial step size by ten after each third of the
    iteration budget; Adam keeps a constant step size with the standard
    moment decays.
    """

    kind: str
    step_size: float
    iterations: int
    sample_count: int
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    antithetic: bool = False
    standardize: bool = False

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if not self.step_size > 0:
            raise ValueError("step size must be positive")
        if self.iterations < 0 or self.sample_count < 1:
            raise ValueError("iterations must be >= 0 and sample_count >= 1")

    def sgd_step_size(self, t):
        return self.step_size / 10.0 ** min(2, (3 * t) // self.iterations)


def reparam_grad(theta, samples, model):
    """Monte-Carlo KL gradient (g_mu, g_sigma) from reparameterized samples.

    g_mu = mean_i grad E(x_i); g_sigma = mean_i z_i * grad E(x_i) - 1/sigma.
    """
    g_mu = np.zeros(theta.dim)
    g_sigma = np.zeros(theta.dim)
    for i in range(samples.count):
        g = model.grad(samples.states[i])
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite energy gradient at sample {i}")
        g_mu += g
        g_sigma += samples.z[i] * g
    g_mu /= samples.count
    g_sigma = g_sigma / samples.count - 1.0 / theta.sigma
    return g_mu, g_sigma


def svi_first_order(theta0, model, schedule: OptimizerSchedule, seed, *,
                    clock=time.perf_counter):
    """Stochastic variational inference with SGD or Adam updates.

    Sigma is clamped to >= 1e-12 after every step; the trace records the KL
    estimate of each iteration's own samples before the step is applied.
    """
    rng = np.random.default_rng(seed)
    theta = theta0
    ell = theta.dim
    m = np.zeros(2 * ell)
    v = np.zeros(2 * ell)
    trace = Trace()
    start = clock()
    for t in range(schedule.iterations):
        samples = draw_samples(theta, schedule.sample_count, rng,
                               antithetic=schedule.antithetic,
                               standardize=schedule.standardize)
        kl = kl_unnormalized(theta, model, samples)
        g_mu, g_sigma = reparam_grad(theta, samples, model)
        g = np.concatenate([g_mu, g_sigma])
        vec = theta.as_vector()
        if schedule.kind == "sgd":
            vec = vec - schedule.sgd_step_size(t) * g
        else:
            m = schedule.beta1 * m + (1.0 - schedule.beta1) * g
            v = schedule.beta2 * v + (1.0 - schedule.beta2) * g * g
            m_hat = m / (1.0 - schedule.beta1 ** (t + 1))
            v_hat = v / (1.0 - schedule.beta2 ** (t + 1))
            vec = vec - schedule.step_size * m_hat / (np.sqrt(v_hat) + schedule.epsilon)
        sigma = np.maximum(vec[ell:], SIGMA_CLAMP)
        theta = VariationalGaussian(vec[:ell], sigma)
        trace.append(TraceRecord(t, kl, clock() - start,
                                 float(np.mean(theta.mu)), float(np.mean(theta.sigma))))
    return theta, trace


def gl_map(x0, model, iterations, *, sor_iterations=100, sor_omega=1.95,
           clock=time.perf_counter):
    """MAP estimation: relinearize the gradient and solve for its root.

    Each iteration solves A(x_t) x = -b(x_t) with SOR warm-started at x_t.
    The trace records the energy of each new iterate.
    """
    x = np.asarray(x0, dtype=float).copy()
    trace = Trace()
    start = clock()
    for t in range(iterations):
        lin = model.linearize(x)
        x = sor_solve(lin.matrix, -lin.offset, x, sor_iterations, sor_omega)
        e = model.energy(x)
        if not np.isfinite(e):
            raise NonFiniteError(f"non-finite energy at iteration {t}")
        trace.append(TraceRecord(t, e, clock() - start))
    return x, trace


def laplace_diag(x_map, model):
    """Diagonal Laplace fit at a mode: sigma_l = diag(A(x_map))_l^(-1/2)."""
    x_map = np.asarray(x_map, dtype=float)
    diag = model.linearize(x_map).matrix.diag
    bad = np.flatnonzero(diag <= 0)
    if bad.size:
        raise ValueError(
            f"non-positive curvature diagonal at index {bad[0]}; "
            "the diagonal Laplace approximation is undefined there")
    return VariationalGaussian(x_map, 1.0 / np.sqrt(diag))
