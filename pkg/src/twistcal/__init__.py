"""Numerical experiments with the twisted Calabi flow on the flat torus."""
from .errors import (
    ConfigError,
    DegenerateInput,
    DomainError,
    InsufficientData,
    MaxItersExceeded,
    NonContractive,
    NumericalBlowup,
    PositivityLoss,
    ResidualTooLarge,
    ShapeMismatch,
    TwistcalError,
)
from .geometry import (
    KahlerPotential,
    TorusGrid,
    bilaplacian_wrt,
    dz_dzbar,
    integrate_measure,
    laplacian_wrt,
    metric_density,
    scalar_curvature,
    trace_background,
)
from .spacetime import BackgroundPath, SpaceTimeField
from .flow import FlowParams, FlowState, FlowTrace, flow_operator, functional_I, run, solve_slab, step, twisted_energy
from .linearization import apply_DLs, apply_projected_DLs, invert_DLs, lipschitz_probe, rescale_time
from .approx import ApproxSolution, SJet, build_approximate, residual_order_fit
from .fixedpoint import IterationReport, psi_apply, solve_by_contraction
from .heatkernel import KernelSpec, duhamel_solve, homogeneous_evolve, kernel_eval
from .norms import HolderReport, RateFit, fit_decay_rate, l2_norm_measure, parabolic_holder_norm, scaling_check, weighted_norm

__version__ = "0.1.0"
