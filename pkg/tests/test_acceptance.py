"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

import synthetic
from test_metrics import brute_force_sparsification, brute_force_spearman

from svigl import cli, denoise, fileio, flow, lop
from svigl.baselines import OptimizerSchedule, gl_map, svi_first_order
from svigl.energy import (
    FORWARD_DIFF_H,
    FORWARD_DIFF_V,
    QuadraticModel,
    grad_check,
    smoothness_linearize,
)
from svigl.linops import SparseSymMatrix, psd_probe
from svigl.meanfield import (
    SviglConfig,
    VariationalGaussian,
    assemble_system,
    draw_samples,
    run,
    svigl_step,
)
from svigl.metrics import (
    SPARSIFICATION_FRACTIONS,
    psnr,
    sparsification_auc,
    spearman_cc,
)
from svigl.penalties import GeneralizedCharbonnier


@contextmanager
def report(label):
    try:
        yield
    except BaseException:
        print(f"[FAIL] {label}")
        raise
    print(f"[PASS] {label}")


def finite_difference_gradient(fun, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def random_denoise_model(rng, size=6):
    noisy = rng.uniform(0.0, 1.0, size=(size, size))
    params = denoise.PoissonGaussianParams(
        beta1=0.05, beta2=0.0001, lambda_data=1.0, lambda_smooth=0.12,
        penalty=GeneralizedCharbonnier(1.0, 0.05))
    return denoise.DenoiseModel(noisy, params)


def random_flow_model(rng, size=5):
    it = 0.3 * rng.standard_normal((size, size))
    ix = 0.3 * rng.standard_normal((size, size))
    iy = 0.3 * rng.standard_normal((size, size))
    warp = flow.WarpData(i_t=it, i_x=ix, i_y=iy, valid=np.ones((size, size), bool))
    params = flow.FlowParams(
        lambda_data=1.0, lambda_smooth=0.5,
        rho_data=GeneralizedCharbonnier(1.0, 0.1),
        rho_smooth=GeneralizedCharbonnier(1.0, 0.2))
    x0 = 0.2 * rng.standard_normal(2 * size * size)
    return flow.FlowModel(warp, x0, params)


def random_lop_model(rng, count=12):
    p = rng.standard_normal((count, 3))
    c = p + 0.1 * rng.standard_normal((count, 3))
    params = lop.LopParams(bandwidth=1.5, repulsion=0.3)
    return lop.LopModel(p, c, params)


class TestCriterion01LinearizationExactness:
    def test_all_models(self):
        with report("criterion 1: linearization exactness on all three models"):
            start = time.perf_counter()
            rng = np.random.default_rng(100)
            cases = [
                ("denoise", random_denoise_model(rng),
                 lambda n: rng.uniform(0.05, 0.95, size=n)),
                ("flow", random_flow_model(rng),
                 lambda n: 0.4 * rng.standard_normal(n)),
                ("lop", random_lop_model(rng),
                 lambda n: rng.standard_normal(n)),
            ]
            for name, model, sampler in cases:
                for _ in range(100):
                    x = sampler(model.dim)
                    lin = model.linearize(x)
                    g = model.grad(x)
                    gap = np.abs(lin.matrix.matvec(x) + lin.offset - g).max()
                    assert gap <= 1e-6 * (1.0 + np.abs(g).max()), name
                for _ in range(3):
                    x = sampler(model.dim)
                    assert grad_check(model, x, 1e-6) <= 1e-4, name
            assert time.perf_counter() - start < 10.0


class TestCriterion02PsdPropagation:
    def test_psd_propagation(self):
        with report("criterion 2: assembled system PSD whenever samples are"):
            start = time.perf_counter()
            rng = np.random.default_rng(200)
            for build in (random_denoise_model, random_flow_model):
                for _ in range(50):
                    model = build(rng)
                    theta = VariationalGaussian(
                        rng.uniform(0.1, 0.9, size=model.dim)
                        if build is random_denoise_model
                        else 0.3 * rng.standard_normal(model.dim),
                        rng.uniform(0.01, 0.2, size=model.dim))
                    samples = draw_samples(theta, 4, rng)
                    for state in samples.states:
                        assert psd_probe(model.linearize(state).matrix, 100, rng,
                                         tol=1e-8)
                    system = assemble_system(samples, model.linearize, theta.sigma)
                    assert psd_probe(system, 100, rng, tol=1e-8)
            assert time.perf_counter() - start < 30.0


class TestCriterion03WeightedGramPsd:
    def test_weighted_gram_forms(self):
        with report("criterion 3: K^T D(weights) K quadratic forms nonnegative"):
            rng = np.random.default_rng(300)
            stencils = (FORWARD_DIFF_H, FORWARD_DIFF_V)
            for a in (0.5, 1.0, 1.5, 2.0):
                penalty = GeneralizedCharbonnier(a, 0.1)
                m = smoothness_linearize(rng.standard_normal(36), stencils,
                                         penalty, 6, 6)
                for _ in range(100):
                    v = rng.standard_normal(36)
                    assert v @ m.matvec(v) >= -1e-10 * (v @ v)
                k = rng.standard_normal((20, 12))
                w = penalty.weight(rng.standard_normal(20))
                gram = SparseSymMatrix(k.T @ np.diag(w) @ k)
                for _ in range(100):
                    v = rng.standard_normal(12)
                    assert v @ gram.matvec(v) >= -1e-10 * (v @ v)


class TestCriterion04PreconditionedGradientDescent:
    def test_identity_on_dense_systems(self):
        with report("criterion 4: exact step equals preconditioned gradient step"):
            rng = np.random.default_rng(400)
            for ell in (2, 5, 8):
                m = rng.standard_normal((ell, ell))
                model = QuadraticModel(m @ m.T + ell * np.eye(ell),
                                       rng.standard_normal(ell))
                theta = VariationalGaussian(rng.standard_normal(ell),
                                            rng.uniform(0.5, 1.5, ell))
                samples = draw_samples(theta, 6, rng)
                system = assemble_system(samples, model.linearize, theta.sigma)
                full = system.full_matrix().to_dense()
                vec = theta.as_vector()
                for alpha in (0.25, 1.0):
                    expected = vec - alpha * np.linalg.solve(full, full @ vec + system.b)
                    assert np.all(expected[ell:] > 0)
                    out = svigl_step(theta, system,
                                     SviglConfig(alpha=alpha, exact_solve=True))
                    assert np.abs(out.as_vector() - expected).max() <= 1e-10


class TestCriterion05QuadraticTargetExactness:
    def test_mean_scale_and_fixed_point(self):
        with report("criterion 5: quadratic target solved exactly"):
            c, s = 2.0, 1.0
            dim = 6
            q = SparseSymMatrix.from_diagonal(np.full(dim, 1.0 / s**2))
            model = QuadraticModel(q, np.full(dim, c))
            base = SviglConfig(iterations=1, sample_count=10, antithetic=True,
                               standardize=True, sor_omega=1.0, seed=1)
            # mu lands on the center after a single step
            theta0 = VariationalGaussian(np.zeros(dim), np.full(dim, 1e-3))
            theta1, _ = run(theta0, model, base)
            assert np.abs(theta1.mu - c).max() <= 1e-6
            # (c, s) is a fixed point of the step
            theta_star = VariationalGaussian(np.full(dim, c), np.full(dim, s))
            samples = draw_samples(theta_star, 10, np.random.default_rng(2),
                                   antithetic=True, standardize=True)
            system = assemble_system(samples, model.linearize, theta_star.sigma)
            out = svigl_step(theta_star, system, base)
            assert np.abs(out.as_vector() - theta_star.as_vector()).max() <= 1e-8
            # sigma climbs from 1e-3 to s within 50 iterations
            from dataclasses import replace
            theta, _ = run(theta0, model, replace(base, iterations=50))
            assert np.abs(theta.sigma - s).max() <= 1e-3


class TestCriterion06MeanFieldOracle:
    def test_correlated_gaussian(self):
        with report("criterion 6: correlated Gaussian mean-field optimum"):
            precision = np.array([[2.0, 0.3], [0.3, 1.5]])
            mean = np.array([0.3, -0.7])
            model = QuadraticModel(precision, mean)
            theta0 = VariationalGaussian(np.zeros(2), np.full(2, 1e-3))
            config = SviglConfig(iterations=80, sample_count=4096, alpha=0.3,
                                 antithetic=True, standardize=True,
                                 exact_solve=True, seed=2)
            theta, _ = run(theta0, model, config)
            assert np.abs(theta.mu - mean).max() <= 1e-3
            assert np.abs(theta.sigma - 1.0 / np.sqrt(np.diag(precision))).max() <= 1e-3


class TestCriterion07GlQuadraticOneStep:
    def test_single_iteration_convergence(self):
        with report("criterion 7: GL solves quadratic energies in one iteration"):
            rng = np.random.default_rng(700)
            m = rng.standard_normal((16, 16))
            q = m @ m.T + 16 * np.eye(16)
            center = rng.standard_normal(16)
            model = QuadraticModel(q, center)
            x1, _ = gl_map(np.zeros(16), model, 1, sor_iterations=400, sor_omega=1.0)
            assert np.abs(x1 - center).max() <= 1e-6


class TestCriterion08DenoiseDeskScale:
    def test_psnr_and_kl_ordering(self):
        with report("criterion 8: denoising desk instance (PSNR and KL ordering)"):
            start = time.perf_counter()
            clean = synthetic.smooth_texture(64, seed=11)
            noisy = denoise.add_noise(clean, 0.05, 0.0001, np.random.default_rng(5))
            params = denoise.PoissonGaussianParams(
                beta1=0.05, beta2=0.0001, lambda_data=1.0, lambda_smooth=0.12,
                penalty=GeneralizedCharbonnier(1.0, 0.01))
            model = denoise.DenoiseModel(noisy, params)
            theta0 = VariationalGaussian(noisy.ravel(), np.full(model.dim, 1e-3))
            config = SviglConfig(iterations=20, sample_count=10, seed=0,
                                 final_kl_samples=10)
            theta, trace = run(theta0, model, config)
            psnr_noisy = psnr(noisy, clean)
            psnr_mean = psnr(theta.mu.reshape(64, 64), clean)
            assert psnr_mean >= psnr_noisy + 2.0
            kl_init = trace.records[0].objective
            kl_final = trace.final.objective
            assert kl_final < kl_init
            schedule = OptimizerSchedule("sgd", 1e-6, iterations=4000,
                                         sample_count=12)
            _, sgd_trace = svi_first_order(theta0, model, schedule, seed=0)
            assert kl_final <= sgd_trace.final.objective
            assert time.perf_counter() - start <= 60.0


class TestCriterion09FlowDeskScale:
    def test_synthetic_translation(self):
        with report("criterion 9: flow desk instance (AEPE on known translation)"):
            start = time.perf_counter()
            u_gt, v_gt = 1.25, -0.75
            i1, i2 = synthetic.translated_pair(64, u_gt, v_gt, seed=0)
            gt = flow.FlowField.from_uv(np.full(i1.shape, u_gt),
                                        np.full(i1.shape, v_gt))
            params = flow.FlowParams(
                lambda_data=50.0, lambda_smooth=1.0,
                rho_data=GeneralizedCharbonnier(1.0, 0.05),
                rho_smooth=GeneralizedCharbonnier(1.0, 0.1),
                outer_iterations=3)
            config = SviglConfig(iterations=10, sample_count=10, seed=0)
            result, _ = flow.infer(i1, i2, flow.FlowField.zeros(64, 64), params,
                                   flow.svigl_inner(config))
            est = flow.FlowField(64, 64, result.mu)
            err = flow.aepe(est, gt)
            zero_err = flow.aepe(flow.FlowField.zeros(64, 64), gt)
            assert err <= 0.5
            assert err < zero_err
            assert time.perf_counter() - start <= 120.0


class TestCriterion10LopDeskScale:
    def test_noisy_circle(self):
        with report("criterion 10: point-cloud desk instance (RMS and Spearman)"):
            points, scales = synthetic.noisy_circle(500, seed=3, ramp_noise=0.06)
            params = lop.LopParams(bandwidth=0.5, repulsion=0.1,
                                   outer_iterations=10, samples=5)
            config = SviglConfig(iterations=1, sample_count=5, seed=3, alpha=0.5)
            theta, _ = lop.run_lop(points, points, params, config)
            out = lop.state_to_points(theta.mu)
            rms_in = synthetic.radial_rms(points)
            rms_out = synthetic.radial_rms(out)
            assert rms_out <= 0.7 * rms_in
            per_point_sigma = theta.sigma.reshape(3, -1).mean(axis=0)
            assert spearman_cc(per_point_sigma, scales) >= 0.2


class TestCriterion11MetricsOracles:
    def test_brute_force_equivalence(self):
        with report("criterion 11: metrics match brute-force references"):
            rng = np.random.default_rng(1100)
            for _ in range(100):
                n = int(rng.integers(5, 50))
                errors = rng.uniform(0.0, 1.0, size=n)
                uncertainties = rng.uniform(0.0, 1.0, size=n)
                _, expected = brute_force_sparsification(
                    list(errors), list(uncertainties),
                    list(SPARSIFICATION_FRACTIONS))
                assert sparsification_auc(errors, uncertainties) == pytest.approx(
                    expected, abs=1e-12)
                a = rng.integers(0, 8, size=n).astype(float)
                b = rng.integers(0, 8, size=n).astype(float)
                assert spearman_cc(a, b) == pytest.approx(
                    brute_force_spearman(list(a), list(b)), abs=1e-12)
                if np.ptp(errors) > 0:
                    oracle = sparsification_auc(errors, errors)
                    flat = sparsification_auc(errors, np.zeros(n))
                    assert oracle <= flat


class TestCriterion12Determinism:
    def test_cli_byte_identical(self, tmp_path):
        with report("criterion 12: byte-identical CLI outputs under a fixed config"):
            clean = synthetic.smooth_texture(16, seed=21)
            clean_path = tmp_path / "clean.pgm"
            fileio.write_pgm(clean_path, clean, maxval=65535)
            noisy_path = tmp_path / "noisy.pgm"
            assert cli.main(["noise", "--in", str(clean_path), "--out",
                             str(noisy_path), "--seed", "4"]) == 0
            outputs = ("mean.pgm", "sigma.pgm", "trace.csv")
            for tag in ("one", "two"):
                d = tmp_path / tag
                d.mkdir()
                code = cli.main([
                    "denoise", "--in", str(noisy_path),
                    "--out", str(d / "mean.pgm"),
                    "--sigma-out", str(d / "sigma.pgm"),
                    "--trace", str(d / "trace.csv"),
                    "--iters", "4", "--samples", "4", "--seed", "9",
                    "--clock", "none"])
                assert code == 0
            for name in outputs:
                assert ((tmp_path / "one" / name).read_bytes()
                        == (tmp_path / "two" / name).read_bytes())

            points, _ = synthetic.noisy_circle(60, seed=6)
            cloud = tmp_path / "cloud.ply"
            fileio.write_ply(cloud, points)
            for tag in ("l1", "l2"):
                d = tmp_path / tag
                d.mkdir()
                code = cli.main([
                    "lop", "--in", str(cloud), "--out", str(d / "smooth.ply"),
                    "--trace", str(d / "trace.csv"), "--h0", "0.5",
                    "--outer", "3", "--samples", "5", "--seed", "2",
                    "--clock", "none"])
                assert code == 0
            for name in ("smooth.ply", "trace.csv"):
                assert ((tmp_path / "l1" / name).read_bytes()
                        == (tmp_path / "l2" / name).read_bytes())
