"""Command-line front end: noise synthesis, the three inference tasks, and
the multi-optimizer comparison runner.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import baselines, denoise, fileio, flow, lop, meanfield, metrics
from .baselines import OptimizerSchedule
from .fileio import FileFormatError
from .linops import NonFiniteError, ZeroDiagonalError
from .meanfield import SviglConfig, VariationalGaussian
from .penalties import GeneralizedCharbonnier

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

OPTIMIZERS = ("svigl", "adam", "sgd", "gl-map", "laplace")

DEFAULT_STEP = {"adam": 0.01, "sgd": 1e-6}


def _positive_int(text):
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive value, got {text}")
    return value


def _nonneg_float(text):
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative value, got {text}")
    return value


def _omega(text):
    value = float(text)
    if not 0.0 < value < 2.0:
        raise argparse.ArgumentTypeError(f"relaxation factor must lie in (0, 2), got {text}")
    return value


def _alpha(text):
    value = float(text)
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"step blend must lie in (0, 1], got {text}")
    return value


def _gc_exponent(text):
    value = float(text)
    if not 0.0 < value <= 2.0:
        raise argparse.ArgumentTypeError(f"penalty exponent must lie in (0, 2], got {text}")
    return value


def _add_solver_args(p):
    p.add_argument("--optimizer", choices=OPTIMIZERS, default="svigl")
    p.add_argument("--samples", type=_positive_int, default=10,
                   help="sample set size per iteration")
    p.add_argument("--iters", type=_nonneg_int, default=20,
                   help="inner iteration count")
    p.add_argument("--step", type=_positive_float, default=None,
                   help="step size for adam/sgd (defaults: adam 0.01, sgd 1e-6)")
    p.add_argument("--alpha", type=_alpha, default=1.0)
    p.add_argument("--sor-iters", type=_positive_int, default=100)
    p.add_argument("--sor-omega", type=_omega, default=1.95)
    p.add_argument("--antithetic", action="store_true")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clock", choices=("wall", "none"), default="wall",
                   help="'none' writes zero seconds for reproducible traces")
    p.add_argument("--trace", type=Path, default=None, help="trace CSV output path")


def _add_denoise_model_args(p):
    p.add_argument("--beta1", type=_nonneg_float, default=0.05)
    p.add_argument("--beta2", type=_nonneg_float, default=0.0001)
    p.add_argument("--lambda-d", type=_nonneg_float, default=1.0)
    p.add_argument("--lambda-s", type=_nonneg_float, default=0.12)
    p.add_argument("--gc-a", type=_gc_exponent, default=1.0)
    p.add_argument("--gc-c", type=_positive_float, default=0.01)


def _add_flow_model_args(p):
    p.add_argument("--lambda-d", type=_nonneg_float, default=50.0)
    p.add_argument("--lambda-s", type=_nonneg_float, default=1.0)
    p.add_argument("--gc-a-data", type=_gc_exponent, default=1.0)
    p.add_argument("--gc-c-data", type=_positive_float, default=0.05)
    p.add_argument("--gc-a-smooth", type=_gc_exponent, default=1.0)
    p.add_argument("--gc-c-smooth", type=_positive_float, default=0.1)
    p.add_argument("--outer", type=_positive_int, default=3,
                   help="outer relinearization count")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="svigl",
        description="Mean-field variational inference via gradient linearization.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("noise", help="synthesize a Poisson-Gaussian noisy image")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--beta1", type=_nonneg_float, default=0.05)
    p.add_argument("--beta2", type=_nonneg_float, default=0.0001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--maxval", type=int, choices=(255, 65535), default=65535)

    p = sub.add_parser("denoise", help="denoise a Poisson-Gaussian noisy image")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--sigma-out", type=Path, default=None)
    p.add_argument("--ref", type=Path, default=None, help="clean image for PSNR")
    p.add_argument("--maxval", type=int, choices=(255, 65535), default=65535)
    _add_denoise_model_args(p)
    _add_solver_args(p)

    p = sub.add_parser("flow", help="estimate optical flow between two frames")
    p.add_argument("--i1", type=Path, required=True)
    p.add_argument("--i2", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--init", type=Path, default=None, help="initial flow (.flo)")
    p.add_argument("--sigma-out", type=Path, default=None)
    p.add_argument("--gt", type=Path, default=None, help="ground-truth flow for AEPE")
    _add_flow_model_args(p)
    _add_solver_args(p)

    p = sub.add_parser("lop", help="smooth a noisy point cloud")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--sigma-out", type=Path, default=None)
    p.add_argument("--h0", type=_positive_float, required=True, help="kernel bandwidth")
    p.add_argument("--repulsion", type=_nonneg_float, default=0.0)
    p.add_argument("--outer", type=_nonneg_int, default=10)
    p.add_argument("--samples", type=_positive_int, default=5)
    p.add_argument("--sigma0", type=_positive_float, default=1e-3)
    p.add_argument("--seed-count", type=_positive_int, default=None,
                   help="subsample this many seed points (default: all inputs)")
    p.add_argument("--alpha", type=_alpha, default=1.0)
    p.add_argument("--sor-iters", type=_positive_int, default=100)
    p.add_argument("--sor-omega", type=_omega, default=1.95)
    p.add_argument("--antithetic", action="store_true")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clock", choices=("wall", "none"), default="wall")
    p.add_argument("--trace", type=Path, default=None)

    p = sub.add_parser("compare", help="run several optimizers on one instance")
    p.add_argument("--task", choices=("denoise", "flow"), required=True)
    p.add_argument("--optimizers", default="svigl,adam,sgd",
                   help="comma-separated subset of " + ",".join(OPTIMIZERS))
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--in", dest="input", type=Path, default=None)
    p.add_argument("--ref", type=Path, default=None)
    p.add_argument("--i1", type=Path, default=None)
    p.add_argument("--i2", type=Path, default=None)
    p.add_argument("--gt", type=Path, default=None)
    p.add_argument("--adam-iters", type=_nonneg_int, default=1000)
    p.add_argument("--adam-step", type=_positive_float, default=0.01)
    p.add_argument("--sgd-iters", type=_nonneg_int, default=4000)
    p.add_argument("--sgd-step", type=_positive_float, default=1e-6)
    p.add_argument("--sgd-samples", type=_positive_int, default=12)
    p.add_argument("--shared-streams", action="store_true",
                   help="force identical sample counts so all optimizers see the same draws")
    p.add_argument("--maxval", type=int, choices=(255, 65535), default=65535)
    _add_denoise_model_args(p)
    p.add_argument("--lambda-d-flow", type=_nonneg_float, default=50.0)
    p.add_argument("--lambda-s-flow", type=_nonneg_float, default=1.0)
    p.add_argument("--gc-a-data", type=_gc_exponent, default=1.0)
    p.add_argument("--gc-c-data", type=_positive_float, default=0.05)
    p.add_argument("--gc-a-smooth", type=_gc_exponent, default=1.0)
    p.add_argument("--gc-c-smooth", type=_positive_float, default=0.1)
    p.add_argument("--outer", type=_positive_int, default=3)
    _add_solver_args(p)
    return parser


def parse_args(argv):
    """Parse and fully validate a command line; exits with code 2 on errors."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    for attr in ("input", "ref", "i1", "i2", "gt", "init"):
        path = getattr(ns, attr, None)
        if path is not None and not path.is_file():
            parser.error(f"input file not found: {path}")
    if ns.command == "compare":
        names = [n.strip() for n in ns.optimizers.split(",") if n.strip()]
        if not names:
            parser.error("no optimizers given")
        for n in names:
            if n not in OPTIMIZERS:
                parser.error(f"unknown optimizer {n!r} (choose from {', '.join(OPTIMIZERS)})")
        ns.optimizer_list = names
        if ns.task == "denoise" and ns.input is None:
            parser.error("compare --task denoise requires --in")
        if ns.task == "flow" and (ns.i1 is None or ns.i2 is None):
            parser.error("compare --task flow requires --i1 and --i2")
    if getattr(ns, "antithetic", False) and ns.samples % 2:
        parser.error("--antithetic requires an even --samples")
    return ns


def _clock_of(ns):
    return time.perf_counter if ns.clock == "wall" else (lambda: 0.0)


def _denoise_params(ns):
    return denoise.PoissonGaussianParams(
        beta1=ns.beta1, beta2=ns.beta2,
        lambda_data=ns.lambda_d, lambda_smooth=ns.lambda_s,
        penalty=GeneralizedCharbonnier(ns.gc_a, ns.gc_c))


def _svigl_config(ns, iterations=None, samples=None):
    return SviglConfig(
        iterations=ns.iters if iterations is None else iterations,
        sample_count=ns.samples if samples is None else samples,
        alpha=ns.alpha, sor_iterations=ns.sor_iters, sor_omega=ns.sor_omega,
        seed=ns.seed, antithetic=ns.antithetic, standardize=ns.standardize)


def _schedule(ns, kind, iterations=None, samples=None, step=None):
    if step is None:
        step = ns.step if ns.step is not None else DEFAULT_STEP[kind]
    return OptimizerSchedule(
        kind=kind, step_size=step,
        iterations=ns.iters if iterations is None else iterations,
        sample_count=ns.samples if samples is None else samples,
        antithetic=ns.antithetic, standardize=ns.standardize)


def _run_denoise_optimizer(name, model, noisy, ns, clock, *, schedule=None,
                           config=None):
    """Returns (mean state, sigma or None, trace)."""
    theta0 = VariationalGaussian(noisy.ravel(), np.full(model.dim, 1e-3))
    if name == "svigl":
        theta, trace = meanfield.run(theta0, model, config or _svigl_config(ns),
                                     clock=clock)
        return theta.mu, theta.sigma, trace
    if name in ("adam", "sgd"):
        theta, trace = baselines.svi_first_order(
            theta0, model, schedule or _schedule(ns, name), ns.seed, clock=clock)
        return theta.mu, theta.sigma, trace
    x, trace = baselines.gl_map(noisy.ravel(), model, ns.iters,
                                sor_iterations=ns.sor_iters, sor_omega=ns.sor_omega,
                                clock=clock)
    if name == "laplace":
        theta = baselines.laplace_diag(x, model)
        return theta.mu, theta.sigma, trace
    return x, None, trace


def cmd_noise(ns):
    clean = fileio.read_pgm(ns.input)
    rng = np.random.default_rng(ns.seed)
    fileio.write_pgm(ns.out, denoise.add_noise(clean, ns.beta1, ns.beta2, rng),
                     maxval=ns.maxval)
    return 0


def cmd_denoise(ns):
    noisy = fileio.read_pgm(ns.input)
    model = denoise.DenoiseModel(noisy, _denoise_params(ns))
    clock = _clock_of(ns)
    mean, sigma, trace = _run_denoise_optimizer(ns.optimizer, model, noisy, ns, clock)
    fileio.write_pgm(ns.out, mean.reshape(noisy.shape), maxval=ns.maxval)
    if ns.sigma_out is not None:
        if sigma is None:
            print("note: MAP optimizer produces no sigma; skipping --sigma-out",
                  file=sys.stderr)
        else:
            fileio.write_pgm(ns.sigma_out, sigma.reshape(noisy.shape), maxval=ns.maxval)
    if ns.trace is not None:
        fileio.write_trace_csv(ns.trace, trace)
    if ns.ref is not None:
        ref = fileio.read_pgm(ns.ref)
        print(f"psnr {metrics.psnr(mean.reshape(noisy.shape), ref):.4f}")
    if len(trace):
        print(f"final objective {trace.final.objective:.9g}")
    return 0


def _flow_params(ns):
    return flow.FlowParams(
        lambda_data=ns.lambda_d, lambda_smooth=ns.lambda_s,
        rho_data=GeneralizedCharbonnier(ns.gc_a_data, ns.gc_c_data),
        rho_smooth=GeneralizedCharbonnier(ns.gc_a_smooth, ns.gc_c_smooth),
        outer_iterations=ns.outer)


def _flow_inner(name, ns, *, schedule=None, config=None):
    if name == "svigl":
        return flow.svigl_inner(config or _svigl_config(ns))
    if name in ("adam", "sgd"):
        return flow.first_order_inner(schedule or _schedule(ns, name), ns.seed)
    return flow.gl_inner(ns.iters, sor_iterations=ns.sor_iters, sor_omega=ns.sor_omega)


def _run_flow_optimizer(name, i1, i2, init, params, ns, clock, *, schedule=None,
                        config=None):
    """Returns (mean FlowField, sigma FlowField or None, trace)."""
    inner = _flow_inner(name, ns, schedule=schedule, config=config)
    result, trace = flow.infer(i1, i2, init, params, inner, clock=clock)
    if isinstance(result, VariationalGaussian):
        mean = flow.FlowField(init.width, init.height, result.mu)
        sigma = flow.FlowField(init.width, init.height, result.sigma)
        return mean, sigma, trace
    if name == "laplace":
        warp = flow.warp_derivatives(i1, i2, result)
        model = flow.FlowModel(warp, result.state, params)
        theta = baselines.laplace_diag(result.state, model)
        return result, flow.FlowField(init.width, init.height, theta.sigma), trace
    return result, None, trace


def cmd_flow(ns):
    i1 = fileio.read_pgm(ns.i1)
    i2 = fileio.read_pgm(ns.i2)
    if i1.shape != i2.shape:
        raise ValueError(f"frame shapes differ: {i1.shape} vs {i2.shape}")
    h, w = i1.shape
    init = fileio.read_flo(ns.init) if ns.init else flow.FlowField.zeros(w, h)
    params = _flow_params(ns)
    clock = _clock_of(ns)
    mean, sigma, trace = _run_flow_optimizer(ns.optimizer, i1, i2, init, params,
                                             ns, clock)
    fileio.write_flo(ns.out, mean)
    if ns.sigma_out is not None:
        if sigma is None:
            print("note: MAP optimizer produces no sigma; skipping --sigma-out",
                  file=sys.stderr)
        else:
            fileio.write_flo(ns.sigma_out, sigma)
    if ns.trace is not None:
        fileio.write_trace_csv(ns.trace, trace)
    if ns.gt is not None:
        print(f"aepe {flow.aepe(mean, fileio.read_flo(ns.gt)):.4f}")
    if len(trace):
        print(f"final objective {trace.final.objective:.9g}")
    return 0


def cmd_lop(ns):
    points = fileio.read_ply(ns.input)
    if ns.seed_count is not None and ns.seed_count < points.shape[0]:
        picker = np.random.default_rng(ns.seed)
        seeds = points[picker.choice(points.shape[0], ns.seed_count, replace=False)]
    else:
        seeds = points
    params = lop.LopParams(bandwidth=ns.h0, repulsion=ns.repulsion,
                           outer_iterations=ns.outer, samples=ns.samples,
                           sigma0=ns.sigma0)
    config = SviglConfig(iterations=1, sample_count=ns.samples, alpha=ns.alpha,
                         sor_iterations=ns.sor_iters, sor_omega=ns.sor_omega,
                         seed=ns.seed, antithetic=ns.antithetic,
                         standardize=ns.standardize)
    theta, trace = lop.run_lop(points, seeds, params, config, clock=_clock_of(ns))
    fileio.write_ply(ns.out, lop.state_to_points(theta.mu))
    if ns.sigma_out is not None:
        fileio.write_ply(ns.sigma_out, lop.state_to_points(theta.sigma))
    if ns.trace is not None:
        fileio.write_trace_csv(ns.trace, trace)
    if len(trace):
        print(f"final objective {trace.final.objective:.9g}")
    return 0


def _compare_settings(ns, name):
    """Per-optimizer (schedule, config) under the shared comparison protocol."""
    if name == "svigl":
        return None, _svigl_config(ns)
    if name == "adam":
        return _schedule(ns, "adam", iterations=ns.adam_iters, samples=ns.samples,
                         step=ns.adam_step), None
    if name == "sgd":
        samples = ns.samples if ns.shared_streams else ns.sgd_samples
        return _schedule(ns, "sgd", iterations=ns.sgd_iters, samples=samples,
                         step=ns.sgd_step), None
    return None, None


def cmd_compare(ns):
    ns.out_dir.mkdir(parents=True, exist_ok=True)
    clock = _clock_of(ns)
    summary = []
    failures = 0
    if ns.task == "denoise":
        noisy = fileio.read_pgm(ns.input)
        ref = fileio.read_pgm(ns.ref) if ns.ref else None
        model = denoise.DenoiseModel(noisy, _denoise_params(ns))
    else:
        i1 = fileio.read_pgm(ns.i1)
        i2 = fileio.read_pgm(ns.i2)
        h, w = i1.shape
        init = flow.FlowField.zeros(w, h)
        gt = fileio.read_flo(ns.gt) if ns.gt else None
        params = _flow_params(ns)
    for name in ns.optimizer_list:
        schedule, config = _compare_settings(ns, name)
        try:
            if ns.task == "denoise":
                mean, sigma, trace = _run_denoise_optimizer(
                    name, model, noisy, ns, clock, schedule=schedule, config=config)
                metric = metrics.psnr(mean.reshape(noisy.shape), ref) if ref is not None else math.nan
                fileio.write_pgm(ns.out_dir / f"{name}_mean.pgm",
                                 mean.reshape(noisy.shape), maxval=ns.maxval)
            else:
                mean, sigma, trace = _run_flow_optimizer(
                    name, i1, i2, init, params, ns, clock, schedule=schedule, config=config)
                metric = flow.aepe(mean, gt) if gt is not None else math.nan
                fileio.write_flo(ns.out_dir / f"{name}_mean.flo", mean)
        except (NonFiniteError, ZeroDiagonalError, FloatingPointError, ValueError) as exc:
            print(f"optimizer {name} failed: {exc}", file=sys.stderr)
            failures += 1
            summary.append((name, math.nan, math.nan, math.nan))
            continue
        fileio.write_trace_csv(ns.out_dir / f"{name}_trace.csv", trace)
        final_kl = trace.final.objective if len(trace) else math.nan
        seconds = trace.final.seconds if len(trace) else 0.0
        summary.append((name, final_kl, metric, seconds))
        print(f"{name}: final objective {final_kl:.9g}")
    fileio.write_summary_csv(ns.out_dir / "summary.csv", summary)
    return 0 if failures < len(ns.optimizer_list) else EXIT_NUMERIC


COMMANDS = {
    "noise": cmd_noise,
    "denoise": cmd_denoise,
    "flow": cmd_flow,
    "lop": cmd_lop,
    "compare": cmd_compare,
}


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    try:
        ns = parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    try:
        return COMMANDS[ns.command](ns)
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NonFiniteError, ZeroDiagonalError, FloatingPointError,
            np.linalg.LinAlgError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
