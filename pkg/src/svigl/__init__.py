"""Mean-field variational inference for energy-based models via gradient
linearization, with first-order baselines, three concrete energy models
(Poisson-Gaussian denoising, brightness-constancy optical flow, point-cloud
smoothing), evaluation metrics, and file I/O."""

from .baselines import OptimizerSchedule, gl_map, laplace_diag, reparam_grad, svi_first_order
from .energy import (
    EnergyModel,
    FilterStencil,
    LinearizedGradient,
    QuadraticModel,
    SmoothnessTerm,
    grad_check,
    smoothness_energy,
    smoothness_grad,
    smoothness_linearize,
)
from .linops import (
    BlockSystem,
    NonFiniteError,
    SparseSymMatrix,
    ZeroDiagonalError,
    matvec,
    psd_probe,
    sor_solve,
)
from .meanfield import (
    SampleSet,
    SviglConfig,
    Trace,
    TraceRecord,
    VariationalGaussian,
    assemble_system,
    draw_samples,
    entropy_uncertainty,
    kl_unnormalized,
    run,
    svigl_step,
)
from .metrics import psnr, sparsification_auc, sparsification_curve, spearman_cc
from .penalties import GeneralizedCharbonnier

__all__ = [
    "BlockSystem",
    "EnergyModel",
    "FilterStencil",
    "GeneralizedCharbonnier",
    "LinearizedGradient",
    "NonFiniteError",
    "OptimizerSchedule",
    "QuadraticModel",
    "SampleSet",
    "SmoothnessTerm",
    "SparseSymMatrix",
    "SviglConfig",
    "Trace",
    "TraceRecord",
    "VariationalGaussian",
    "ZeroDiagonalError",
    "assemble_system",
    "draw_samples",
    "entropy_uncertainty",
    "gl_map",
    "grad_check",
    "kl_unnormalized",
    "laplace_diag",
    "matvec",
    "psd_probe",
    "psnr",
    "reparam_grad",
    "run",
    "smoothness_energy",
    "smoothness_grad",
    "smoothness_linearize",
    "sor_solve",
    "sparsification_auc",
    "sparsification_curve",
    "spearman_cc",
    "svi_first_order",
    "svigl_step",
]

__version__ = "0.1.0"
