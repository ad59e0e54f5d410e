"""Generalized Charbonnier robust penalty.

The family is parameterized by an exponent ``a`` in (0, 2] and a scale
``c > 0``. At a = 2 it is the quadratic w^2 / (2 c^2); smaller exponents give
heavier tails. The derivative admits the multiplicative split
rho'(w) = weight(w) * w with weight(w) >= 0, which is what makes the
half-quadratic / linearized-gradient construction positive semi-definite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GeneralizedCharbonnier:
    """Robust penalty rho with exponent `a` in (0, 2] and scale `c` > 0."""

    a: float
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"scale c must be positive, got {self.c}")
        if not 0.0 < self.a <= 2.0:
            raise ValueError(f"exponent a must lie in (0, 2], got {self.a}")

    @property
    def _m(self):
        return max(1.0, 2.0 - self.a)

    def rho(self, w):
        """Penalty value, anchored so rho(0) = 0.

        Exact antiderivative of `rho_prime`:
        rho(w) = (m/a) * [((w/c)^2 / m + 1)^(a/2) - 1] with m = max(1, 2-a).
        """
        w = np.asarray(w, dtype=float)
        m = self._m
        s = (w / self.c) ** 2 / m
        return (m / self.a) * ((s + 1.0) ** (self.a / 2.0) - 1.0)

    def rho_prime(self, w):
        """Derivative rho'(w) = w/c^2 * ((w/c)^2 / max(1, 2-a) + 1)^(a/2 - 1)."""
        w = np.asarray(w, dtype=float)
        s = (w / self.c) ** 2 / self._m
        return w / self.c**2 * (s + 1.0) ** (self.a / 2.0 - 1.0)

    def weight(self, w):
        """Half-quadratic weight rho'(w)/w, with the exact limit 1/c^2 at w = 0.

        Evaluated through w^2 only, so no division by w occurs and the result
        is nonnegative for every finite w.
        """
        w = np.asarray(w, dtype=float)
        s = (w / self.c) ** 2 / self._m
        return (s + 1.0) ** (self.a / 2.0 - 1.0) / self.c**2
