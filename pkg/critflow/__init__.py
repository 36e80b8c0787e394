__version__ = "0.1.0"

from .config import ConfigError, ExperimentConfig, load_config
from .data import (
    CounterexamplePartial,
    MollifierSpec,
    RadialProfile,
    chemin_gallagher,
    counterexample_partial,
    mollify,
    random_divfree,
    shear_flow,
    zero_field,
)
from .diagnostics import (
    DiagnosticsRecorder,
    DiagnosticsRow,
    MonitorSettings,
    MonitorVerdict,
    bilinear_chain,
    bkm_constants,
    bkm_monitor,
    cauchy_pair_monitor,
    dissipation_residual,
    energy_growth_monitor,
    theorem_monitor,
    time_derivative_budget,
    young_split_check,
)
from .dynamics import (
    NumericalBreakdown,
    StepperConfig,
    nonlinear_term,
    pressure_hat,
    simulate,
    step,
    viscous_dt,
)
from .norms import NormReport, grad_linf, hs_norm, norm_report, riesz_proxy_linf, x_norm
from .spectral import (
    Grid,
    SpectralField,
    curl_hat,
    leray_project,
    make_grid,
    transform_forward,
    transform_inverse,
)
from .state import CheckpointError, SolverState, checkpoint_load, checkpoint_save

__all__ = [
    "__version__",
    "CheckpointError",
    "ConfigError",
    "CounterexamplePartial",
    "DiagnosticsRecorder",
    "DiagnosticsRow",
    "ExperimentConfig",
    "Grid",
    "MollifierSpec",
    "MonitorSettings",
    "MonitorVerdict",
    "NormReport",
    "NumericalBreakdown",
    "RadialProfile",
    "SolverState",
    "SpectralField",
    "StepperConfig",
    "bilinear_chain",
    "bkm_constants",
    "bkm_monitor",
    "cauchy_pair_monitor",
    "checkpoint_load",
    "checkpoint_save",
    "chemin_gallagher",
    "counterexample_partial",
    "curl_hat",
    "dissipation_residual",
    "energy_growth_monitor",
    "grad_linf",
    "hs_norm",
    "leray_project",
    "load_config",
    "make_grid",
    "mollify",
    "nonlinear_term",
    "norm_report",
    "pressure_hat",
    "random_divfree",
    "riesz_proxy_linf",
    "shear_flow",
    "simulate",
    "step",
    "theorem_monitor",
    "time_derivative_budget",
    "transform_forward",
    "transform_inverse",
    "viscous_dt",
    "x_norm",
    "young_split_check",
    "zero_field",
]
