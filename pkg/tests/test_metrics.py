import math

import numpy as np
import pytest

from svigl.metrics import (
    SPARSIFICATION_FRACTIONS,
    psnr,
    sparsification_auc,
    sparsification_curve,
    spearman_cc,
)


def brute_force_sparsification(errors, uncertainties, fractions):
    """Independent loop-based reference: stable descending-uncertainty sort,
    floor(f n) removals, normalization at fraction 0, trapezoid area."""
    n = len(errors)
    order = sorted(range(n), key=lambda i: (-uncertainties[i], i))
    ranked = [errors[i] for i in order]
    base = sum(errors) / n
    values = []
    for f in fractions:
        removed = min(int(math.floor(f * n + 1e-9)), n)
        kept = ranked[removed:]
        values.append((sum(kept) / len(kept)) / base if kept else 0.0)
    area = 0.0
    for k in range(1, len(fractions)):
        area += 0.5 * (values[k] + values[k - 1]) * (fractions[k] - fractions[k - 1])
    return values, area


def brute_force_spearman(a, b):
    """Average ranks by explicit tie grouping, then the Pearson formula."""

    def ranks(v):
        order = sorted(range(len(v)), key=lambda i: v[i])
        out = [0.0] * len(v)
        i = 0
        while i < len(v):
            j = i
            while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
                j += 1
            avg = (i + j) / 2.0 + 1.0
            for k in range(i, j + 1):
                out[order[k]] = avg
            i = j + 1
        return out

    ra = ranks(list(a))
    rb = ranks(list(b))
    ma = sum(ra) / len(ra)
    mb = sum(rb) / len(rb)
    num = sum((x - ma) * (y - mb) for x, y in zip(ra, rb))
    den = math.sqrt(sum((x - ma) ** 2 for x in ra) * sum((y - mb) ** 2 for y in rb))
    return num / den if den else 0.0


class TestPsnr:
    def test_identical_images(self):
        img = np.random.default_rng(0).uniform(size=(5, 5))
        assert psnr(img, img) == math.inf

    def test_uniform_error_closed_form(self):
        ref = np.zeros((10, 10))
        est = np.full((10, 10), 0.1)
        assert psnr(est, ref) == pytest.approx(20.0, abs=1e-12)

    def test_direct_formula_oracle(self):
        rng = np.random.default_rng(1)
        est = rng.uniform(size=(8, 8))
        ref = rng.uniform(size=(8, 8))
        expected = 10.0 * math.log10(1.0 / np.mean((est - ref) ** 2))
        assert psnr(est, ref) == pytest.approx(expected, abs=1e-12)

    def test_strictly_decreasing_in_mse(self):
        ref = np.zeros((6, 6))
        values = [psnr(np.full((6, 6), e), ref) for e in (0.05, 0.1, 0.2, 0.4)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((2, 2)), np.zeros((3, 3)))


class TestSparsification:
    def test_flat_curve_auc(self):
        """No information and constant error: the curve is identically 1 and
        the trapezoid over [0, 0.95] is 0.95."""
        errors = np.full(40, 0.7)
        uncertainties = np.full(40, 1.0)
        curve = sparsification_curve(errors, uncertainties)
        np.testing.assert_allclose(curve.values, 1.0, atol=1e-14)
        assert curve.auc() == pytest.approx(0.95, abs=1e-14)

    def test_matches_brute_force_reference(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(5, 60))
            errors = rng.uniform(0.0, 1.0, size=n)
            uncertainties = rng.uniform(0.0, 1.0, size=n)
            _, expected = brute_force_sparsification(
                list(errors), list(uncertainties), list(SPARSIFICATION_FRACTIONS))
            assert sparsification_auc(errors, uncertainties) == pytest.approx(
                expected, abs=1e-12)

    def test_oracle_ranking_beats_no_information(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            errors = rng.uniform(0.1, 1.0, size=50)
            oracle = sparsification_auc(errors, errors)
            flat = sparsification_auc(errors, np.zeros(50))
            assert oracle < flat

    def test_adversarial_ranking_at_least_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            errors = rng.uniform(0.0, 1.0, size=30)
            oracle = sparsification_auc(errors, errors)
            adversarial = sparsification_auc(errors, -errors)
            assert adversarial >= oracle

    def test_rank_invariance_under_monotone_transforms(self):
        rng = np.random.default_rng(5)
        errors = rng.uniform(0.0, 1.0, size=37)
        u = rng.uniform(0.5, 2.0, size=37)
        base = sparsification_auc(errors, u)
        assert sparsification_auc(errors, np.exp(u)) == pytest.approx(base, abs=1e-14)
        assert sparsification_auc(errors, 3.0 * u + 7.0) == pytest.approx(base, abs=1e-14)

    def test_all_zero_errors(self):
        assert sparsification_auc(np.zeros(10), np.arange(10.0)) == 0.0

    def test_empty_input(self):
        with pytest.raises(ValueError):
            sparsification_auc(np.array([]), np.array([]))

    def test_curve_normalization(self):
        rng = np.random.default_rng(6)
        errors = rng.uniform(0.2, 0.9, size=25)
        curve = sparsification_curve(errors, rng.uniform(size=25))
        assert curve.values[0] == 1.0
        assert np.all(np.diff(curve.fractions) > 0)


class TestSpearman:
    def test_identity(self):
        a = np.array([3.0, 1.0, 2.0, 5.0, 4.0])
        assert spearman_cc(a, a) == pytest.approx(1.0, abs=1e-14)

    def test_reversal(self):
        a = np.array([3.0, 1.0, 2.0, 5.0, 4.0])
        assert spearman_cc(a, -a) == pytest.approx(-1.0, abs=1e-14)

    def test_ties_match_brute_force_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(4, 30))
            a = rng.integers(0, 5, size=n).astype(float)  # many ties
            b = rng.integers(0, 5, size=n).astype(float)
            expected = brute_force_spearman(list(a), list(b))
            assert spearman_cc(a, b) == pytest.approx(expected, abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(8)
        a = rng.standard_normal(40)
        b = rng.standard_normal(40)
        base = spearman_cc(a, b)
        assert spearman_cc(np.exp(a), b) == pytest.approx(base, abs=1e-14)
        assert spearman_cc(a, 5.0 * b - 2.0) == pytest.approx(base, abs=1e-14)

    def test_zero_rank_variance_flagged(self):
        cc, degenerate = spearman_cc(np.ones(5), np.arange(5.0),
                                     return_degenerate=True)
        assert cc == 0.0 and degenerate
        assert spearman_cc(np.ones(5), np.arange(5.0)) == 0.0

    def test_length_validation(self):
        with pytest.raises(ValueError):
            spearman_cc(np.array([1.0]), np.array([2.0]))
