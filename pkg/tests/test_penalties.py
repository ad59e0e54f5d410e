import numpy as np
import pytest
from scipy.integrate import quad

from svigl.penalties import GeneralizedCharbonnier

EXPONENTS = (0.5, 0.8, 1.0, 1.3, 1.5, 2.0)


class TestRho:
    def test_quadratic_case(self):
        p = GeneralizedCharbonnier(a=2.0, c=1.0)
        assert p.rho(2.0) == pytest.approx(2.0, abs=1e-12)

    def test_anchored_at_zero(self):
        for a in EXPONENTS:
            assert GeneralizedCharbonnier(a, 0.3).rho(0.0) == 0.0

    def test_quadrature_oracle(self):
        """rho equals the numerical integral of rho' from 0."""
        cases = [(1.0, 0.1, 0.3), (0.5, 0.05, 0.2), (1.5, 0.2, 0.7), (2.0, 1.0, 1.4)]
        for a, c, w in cases:
            p = GeneralizedCharbonnier(a, c)
            integral, err = quad(lambda t: float(p.rho_prime(t)), 0.0, w)
            assert float(p.rho(w)) == pytest.approx(integral, abs=max(1e-10, 10 * err))

    def test_derivative_matches_rho_prime(self):
        h = 1e-6
        for a in EXPONENTS:
            p = GeneralizedCharbonnier(a, 0.25)
            for w in (-0.4, -0.05, 0.02, 0.3, 1.1):
                cd = (p.rho(w + h) - p.rho(w - h)) / (2 * h)
                assert cd == pytest.approx(float(p.rho_prime(w)), abs=1e-6)


class TestRhoPrime:
    def test_quadratic_case(self):
        assert GeneralizedCharbonnier(2.0, 1.0).rho_prime(3.0) == pytest.approx(3.0)

    def test_odd(self):
        rng = np.random.default_rng(0)
        for a in EXPONENTS:
            p = GeneralizedCharbonnier(a, 0.1)
            w = rng.uniform(0.0, 2.0, size=50)
            np.testing.assert_allclose(p.rho_prime(-w), -p.rho_prime(w), atol=1e-15)
        assert GeneralizedCharbonnier(1.0, 0.1).rho_prime(0.0) == 0.0

    def test_finite_difference_oracle(self):
        p = GeneralizedCharbonnier(0.8, 0.05)
        h = 1e-6
        cd = (p.rho(0.1 + h) - p.rho(0.1 - h)) / (2 * h)
        assert float(p.rho_prime(0.1)) == pytest.approx(cd, abs=1e-6)


class TestWeight:
    def test_constant_for_quadratic(self):
        p = GeneralizedCharbonnier(2.0, 2.0)
        for w in (0.0, -1.0, 3.7):
            assert p.weight(w) == pytest.approx(0.25)

    def test_zero_limit(self):
        assert GeneralizedCharbonnier(1.0, 0.1).weight(0.0) == pytest.approx(100.0)

    def test_direct_evaluation(self):
        # rho'(1) = 1 * (1 + 1)^(-1/2) for a = 1, c = 1, cross-checked
        # against rho_prime.
        p = GeneralizedCharbonnier(1.0, 1.0)
        assert float(p.weight(1.0)) == pytest.approx(2.0 ** -0.5, abs=1e-12)
        assert float(p.weight(1.0)) == pytest.approx(float(p.rho_prime(1.0)), abs=1e-15)

    def test_weight_times_w_is_rho_prime(self):
        w = np.linspace(-3.0, 3.0, 201)
        for a in EXPONENTS:
            p = GeneralizedCharbonnier(a, 0.3)
            np.testing.assert_allclose(p.weight(w) * w, p.rho_prime(w), atol=1e-14)

    def test_nonnegative_on_dense_grid(self):
        w = np.concatenate([np.linspace(-50.0, 50.0, 2001), [0.0]])
        for a in EXPONENTS:
            assert np.all(GeneralizedCharbonnier(a, 0.05).weight(w) >= 0.0)


class TestValidation:
    def test_scale_must_be_positive(self):
        with pytest.raises(ValueError):
            GeneralizedCharbonnier(1.0, 0.0)

    def test_exponent_range(self):
        for a in (0.0, -0.5, 2.5):
            with pytest.raises(ValueError):
                GeneralizedCharbonnier(a, 1.0)
