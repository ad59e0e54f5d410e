"""Sparse symmetric matrices, block systems, SOR solves, and PSD probing.

All solver-facing matrices in this package are held as CSR with a cached
diagonal. The SOR sweep is a strict forward Gauss-Seidel pass (ascending row
index) with over-relaxation applied inside the sweep, compiled with numba.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from numba import njit

SYMMETRY_RTOL = 1e-10


class ZeroDiagonalError(ValueError):
    """A diagonal entry required by the solver is exactly zero."""

    def __init__(self, index):
        self.index = index
        super().__init__(f"zero diagonal entry at index {index}")


class NonFiniteError(FloatingPointError):
    """A non-finite value appeared during an iterative sweep."""


def _as_csr(a):
    """Coerce matrices of any supported flavor to a canonical square csr_array."""
    if isinstance(a, SparseSymMatrix):
        return a.csr
    if isinstance(a, BlockSystem):
        return a.full_matrix().csr
    if isinstance(a, np.ndarray):
        a = sp.csr_array(a)
    elif sp.issparse(a):
        a = sp.csr_array(a)
    else:
        raise TypeError(f"unsupported matrix type {type(a).__name__}")
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    a.sum_duplicates()
    a.sort_indices()
    return a


class SparseSymMatrix:
    """Square symmetric sparse matrix (CSR) with a cached dense diagonal.

    The symmetry invariant is |a_ij - a_ji| <= 1e-10 * max(1, |a_ij|) for
    every stored off-diagonal entry, checked entry-wise at construction
    unless ``validate=False``.
    """

    __slots__ = ("csr", "n", "diag")

    def __init__(self, matrix, *, validate=True):
        csr = _as_csr(matrix)
        if validate:
            if not np.all(np.isfinite(csr.data)):
                raise ValueError("matrix contains non-finite values")
            _check_symmetry(csr)
        self.csr = csr
        self.n = csr.shape[0]
        self.diag = csr.diagonal()

    @classmethod
    def identity(cls, n):
        return cls(sp.eye_array(n, format="csr"), validate=False)

    @classmethod
    def from_diagonal(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(sp.diags_array(values, format="csr"), validate=False)

    @classmethod
    def from_coo(cls, n, rows, cols, values):
        m = sp.coo_array((values, (rows, cols)), shape=(n, n))
        return cls(m)

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise ValueError(f"vector length {v.shape} does not match dimension {self.n}")
        return self.csr @ v

    def to_dense(self):
        return self.csr.toarray()

    def scaled(self, alpha):
        """Scale all entries; nonnegative alpha preserves the PSD property."""
        return SparseSymMatrix(self.csr * float(alpha), validate=False)

    def __add__(self, other):
        if isinstance(other, SparseSymMatrix):
            other = other.csr
        return SparseSymMatrix(self.csr + other, validate=False)

    def validate(self):
        """Re-run the finiteness and entry-wise symmetry checks."""
        if not np.all(np.isfinite(self.csr.data)):
            raise ValueError("matrix contains non-finite values")
        _check_symmetry(self.csr)


def _check_symmetry(csr):
    t = sp.csr_array(csr.T)
    t.sum_duplicates()
    t.sort_indices()
    same_pattern = np.array_equal(csr.indptr, t.indptr) and np.array_equal(
        csr.indices, t.indices
    )
    if not same_pattern:
        raise ValueError("sparsity pattern is not symmetric")
    bad = np.abs(csr.data - t.data) > SYMMETRY_RTOL * np.maximum(1.0, np.abs(csr.data))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ValueError(
            f"symmetry violated: entry value {csr.data[k]!r} vs transposed {t.data[k]!r}"
        )


class BlockSystem:
    """2x2 block layout [[a_mm, a_ms], [a_sm, a_ss]] with offsets (b_m, b_s).

    The mean components occupy indices 0..L-1 of the stacked system and the
    scale components L..2L-1. a_ms / a_sm are general sparse blocks that are
    transposes of one another when every contributing matrix is symmetric.
    """

    __slots__ = ("a_mm", "a_ms", "a_sm", "a_ss", "b_m", "b_s", "_full")

    def __init__(self, a_mm, a_ms, a_sm, a_ss, b_m, b_s):
        self.a_mm = a_mm if isinstance(a_mm, SparseSymMatrix) else SparseSymMatrix(a_mm)
        self.a_ss = a_ss if isinstance(a_ss, SparseSymMatrix) else SparseSymMatrix(a_ss)
        self.a_ms = _as_csr(a_ms)
        self.a_sm = _as_csr(a_sm)
        self.b_m = np.asarray(b_m, dtype=float)
        self.b_s = np.asarray(b_s, dtype=float)
        ell = self.a_mm.n
        for name, block in (("a_ms", self.a_ms), ("a_sm", self.a_sm)):
            if block.shape != (ell, ell):
                raise ValueError(f"{name} has shape {block.shape}, expected {(ell, ell)}")
        if self.a_ss.n != ell or self.b_m.shape != (ell,) or self.b_s.shape != (ell,):
            raise ValueError("block dimensions are inconsistent")
        self._full = None

    @property
    def dim(self):
        """Per-block dimension L; the stacked system has size 2L."""
        return self.a_mm.n

    @property
    def b(self):
        """Stacked offset vector (b_m, b_s) of length 2L."""
        return np.concatenate([self.b_m, self.b_s])

    def full_matrix(self):
        """Assemble (and cache) the stacked 2L x 2L matrix."""
        if self._full is None:
            m = sp.block_array(
                [[self.a_mm.csr, self.a_ms], [self.a_sm, self.a_ss.csr]], format="csr"
            )
            self._full = SparseSymMatrix(m)
        return self._full

    def matvec(self, v):
        return self.full_matrix().matvec(v)


def matvec(a, v):
    """Exact sparse matrix-vector product for any supported matrix flavor."""
    if isinstance(a, (SparseSymMatrix, BlockSystem)):
        return a.matvec(v)
    csr = _as_csr(a)
    v = np.asarray(v, dtype=float)
    if v.shape != (csr.shape[0],):
        raise ValueError(f"vector length {v.shape} does not match dimension {csr.shape[0]}")
    return csr @ v


@njit(cache=True)
def _sor_forward(indptr, indices, data, diag, rhs, x, omega, sweeps):
    n = x.shape[0]
    for s in range(sweeps):
        for i in range(n):
            acc = rhs[i]
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j != i:
                    acc -= data[k] * x[j]
            x[i] = (1.0 - omega) * x[i] + omega * acc / diag[i]
        for i in range(n):
            if not np.isfinite(x[i]):
                return s * n + i
    return -1


def sor_solve(a, rhs, x0, iterations, omega, *, return_residual=False):
    """Run exactly `iterations` forward SOR sweeps on a x = rhs from x0.

    Rows are relaxed in ascending index order and each update is visible to
    later rows within the same sweep. No convergence check is performed; the
    iterate after the final sweep is returned (optionally with the final
    residual 2-norm for diagnostics).
    """
    csr = _as_csr(a)
    n = csr.shape[0]
    rhs = np.asarray(rhs, dtype=float)
    x = np.array(x0, dtype=float, copy=True)
    if rhs.shape != (n,) or x.shape != (n,):
        raise ValueError("rhs/x0 length does not match matrix dimension")
    if not 0.0 < omega < 2.0:
        raise ValueError(f"relaxation factor must lie in (0, 2), got {omega}")
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    diag = csr.diagonal()
    zero = np.flatnonzero(diag == 0.0)
    if zero.size:
        raise ZeroDiagonalError(int(zero[0]))
    if iterations > 0:
        code = _sor_forward(
            csr.indptr, csr.indices, csr.data, diag, rhs, x, float(omega), int(iterations)
        )
        if code >= 0:
            sweep, row = divmod(code, n)
            raise NonFiniteError(
                f"non-finite iterate at row {row} after sweep {sweep + 1}"
            )
    if return_residual:
        return x, float(np.linalg.norm(csr @ x - rhs))
    return x


def psd_probe(a, trials, rng, *, tol=1e-8):
    """Randomized PSD check: v^T A v >= -tol * ||v||^2 for sampled normal v."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    csr = _as_csr(a)
    n = csr.shape[0]
    for _ in range(trials):
        v = rng.standard_normal(n)
        if v @ (csr @ v) < -tol * (v @ v):
            return False
    return True
