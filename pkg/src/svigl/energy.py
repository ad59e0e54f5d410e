"""Energy-model interface and shared filter-based smoothness machinery.

An energy model exposes three things: the scalar energy, its exact gradient,
and a linearization (A, b) of that gradient that is exact at the expansion
point. The optimizer layers interact with models only through these.

The smoothness helpers build the robust filter terms
sum_j sum_l rho((f_j * x)_l) shared by the image models. Filter rows whose
stencil would reach outside the image are dropped entirely, so a constant
image always has zero smoothness energy and gradient.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linops import SparseSymMatrix
from .penalties import GeneralizedCharbonnier


@dataclass(frozen=True)
class LinearizedGradient:
    """Gradient linearization grad E(x) ~= matrix @ x + offset, exact at `point`."""

    matrix: SparseSymMatrix
    offset: np.ndarray
    point: np.ndarray

    def __post_init__(self):
        n = self.matrix.n
        if self.offset.shape != (n,) or self.point.shape != (n,):
            raise ValueError("offset/point length does not match matrix dimension")

    def gradient_at_point(self):
        return self.matrix.matvec(self.point) + self.offset


class EnergyModel(abc.ABC):
    """Contract shared by all energy models.

    `grad` must be the exact gradient of `energy` and `linearize` must
    reproduce it at the linearization point: A(x) x + b(x) == grad(x).
    When `psd_guaranteed` is true, A(x) is positive semi-definite for every
    valid state.
    """

    dim: int
    psd_guaranteed: bool = False

    @abc.abstractmethod
    def energy(self, x) -> float: ...

    @abc.abstractmethod
    def grad(self, x) -> np.ndarray: ...

    @abc.abstractmethod
    def linearize(self, x) -> LinearizedGradient: ...


class QuadraticModel(EnergyModel):
    """E(x) = 0.5 (x - center)^T Q (x - center) for symmetric Q.

    The linearization A = Q, b = -Q center is global, which makes this the
    standard sanity target: gradient-linearization solvers converge on it in
    a single step.
    """

    def __init__(self, q, center):
        self.q = q if isinstance(q, SparseSymMatrix) else SparseSymMatrix(q)
        self.center = np.asarray(center, dtype=float)
        if self.center.shape != (self.q.n,):
            raise ValueError("center length does not match matrix dimension")
        self.dim = self.q.n
        self.psd_guaranteed = True

    def energy(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return 0.5 * float(d @ self.q.matvec(d))

    def grad(self, x):
        return self.q.matvec(np.asarray(x, dtype=float) - self.center)

    def linearize(self, x):
        x = np.asarray(x, dtype=float)
        return LinearizedGradient(self.q, -self.q.matvec(self.center), x)


@dataclass(frozen=True)
class FilterStencil:
    """Linear filter given as taps (row offset, col offset, coefficient)."""

    taps: tuple

    def matrix(self, height, width):
        """Convolution matrix of shape (L, L), L = height * width.

        Row l applies the stencil anchored at pixel l; rows where any tap
        would leave the image are left empty (zero row).
        """
        lin = np.arange(height * width).reshape(height, width)
        rr, cc = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
        ok = np.ones((height, width), dtype=bool)
        for dr, dc, _ in self.taps:
            ok &= (rr + dr >= 0) & (rr + dr < height) & (cc + dc >= 0) & (cc + dc < width)
        rows, cols, vals = [], [], []
        for dr, dc, coef in self.taps:
            if not np.isfinite(coef):
                raise ValueError("stencil coefficients must be finite")
            rows.append(lin[ok])
            cols.append(lin[rr[ok] + dr, cc[ok] + dc])
            vals.append(np.full(int(ok.sum()), float(coef)))
        n = height * width
        m = sp.coo_array(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        ).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return m


FORWARD_DIFF_H = FilterStencil(taps=((0, 0, -1.0), (0, 1, 1.0)))
FORWARD_DIFF_V = FilterStencil(taps=((0, 0, -1.0), (1, 0, 1.0)))


def _row_scaled(f, w):
    out = f.copy()
    out.data = out.data * np.repeat(w, np.diff(f.indptr))
    return out


class SmoothnessTerm:
    """Robust filter-based smoothness over a (possibly multi-channel) image.

    The state vector stacks channels plane by plane: (ch0 pixels..., ch1
    pixels...). With ``coupled=True`` one penalty is applied per pixel to the
    Euclidean norm of the filter response across channels, and the resulting
    half-quadratic weight is shared by all channels; otherwise the penalty is
    applied to each scalar response independently.
    """

    def __init__(self, stencils, penalty: GeneralizedCharbonnier, height, width,
                 channels=1, coupled=False):
        self.penalty = penalty
        self.height = int(height)
        self.width = int(width)
        self.channels = int(channels)
        self.coupled = bool(coupled)
        self.pixels = self.height * self.width
        self.dim = self.pixels * self.channels
        self.filters = [s.matrix(self.height, self.width) for s in stencils]
        self.filters_t = [sp.csr_array(f.T) for f in self.filters]

    def _channel_responses(self, x, f):
        x = x.reshape(self.channels, self.pixels)
        return np.stack([f @ x[ch] for ch in range(self.channels)])

    def energy(self, x):
        x = np.asarray(x, dtype=float)
        total = 0.0
        for f in self.filters:
            r = self._channel_responses(x, f)
            if self.coupled:
                total += float(np.sum(self.penalty.rho(np.sqrt(np.sum(r * r, axis=0)))))
            else:
                total += float(np.sum(self.penalty.rho(r)))
        return total

    def grad(self, x):
        """Exact gradient sum_j F_j^T rho'(F_j x) (per-channel stacking)."""
        x = np.asarray(x, dtype=float)
        g = np.zeros((self.channels, self.pixels))
        for f, ft in zip(self.filters, self.filters_t):
            r = self._channel_responses(x, f)
            if self.coupled:
                w = self.penalty.weight(np.sqrt(np.sum(r * r, axis=0)))
                for ch in range(self.channels):
                    g[ch] += ft @ (w * r[ch])
            else:
                for ch in range(self.channels):
                    g[ch] += ft @ self.penalty.rho_prime(r[ch])
        return g.ravel()

    def weights(self, x):
        """Half-quadratic weight vector per filter (shared across channels
        when coupled, else shape (channels, pixels))."""
        x = np.asarray(x, dtype=float)
        out = []
        for f in self.filters:
            r = self._channel_responses(x, f)
            if self.coupled:
                out.append(self.penalty.weight(np.sqrt(np.sum(r * r, axis=0))))
            else:
                out.append(self.penalty.weight(r))
        return out

    def linearize_matrix(self, x):
        """sum_j F_j^T D(w_j) F_j as a SparseSymMatrix over the full state."""
        blocks = [None] * self.channels
        for f, ft, w in zip(self.filters, self.filters_t, self.weights(x)):
            for ch in range(self.channels):
                w_ch = w if self.coupled else w[ch]
                contrib = ft @ _row_scaled(f, w_ch)
                blocks[ch] = contrib if blocks[ch] is None else blocks[ch] + contrib
        if self.channels == 1:
            return SparseSymMatrix(blocks[0], validate=False)
        return SparseSymMatrix(sp.block_diag(blocks, format="csr"), validate=False)


def smoothness_energy(x, stencils, penalty, height, width, channels=1, coupled=False):
    return SmoothnessTerm(stencils, penalty, height, width, channels, coupled).energy(x)


def smoothness_grad(x, stencils, penalty, height, width, channels=1, coupled=False):
    return SmoothnessTerm(stencils, penalty, height, width, channels, coupled).grad(x)


def smoothness_linearize(x, stencils, penalty, height, width, channels=1, coupled=False):
    term = SmoothnessTerm(stencils, penalty, height, width, channels, coupled)
    return term.linearize_matrix(np.asarray(x, dtype=float))


def grad_check(model, x, h):
    """Max relative gap between model.grad and central differences of energy.

    Returns max_i |grad_i - cd_i| / (1 + |grad_i|).
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    x = np.asarray(x, dtype=float)
    g = model.grad(x)
    worst = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cd = (model.energy(x + e) - model.energy(x - e)) / (2.0 * h)
        worst = max(worst, abs(g[i] - cd) / (1.0 + abs(g[i])))
    return worst
