"""Risk-averse ensemble optimal control of control-affine systems.

A single open-loop control is optimized against a finite ensemble of model
parameters.  The package provides exact discrete-adjoint gradients of
risk-weighted tracking costs, expectation / worst-case / average
value-at-risk objectives with their risk identifiers, matching first-order
optimizers, and a reproducible two-level quantum control experiment.
"""

from .cost import (
    AdjointTrajectory,
    ControlCost,
    CostMeasure,
    Integrand,
    adjoint_solve,
    assemble_gradient,
    scenario_cost,
    stationarity_residual,
    tracking_gradient,
)
from .dynamics import (
    ControlAffineSystem,
    DivergenceError,
    FundamentalMatrices,
    Stepper,
    duhamel_linearized,
    fundamental_matrices,
    linearize_scenario,
    propagate_ensemble,
    propagate_scenario,
)
from .ensemble import (
    ConfigError,
    Control,
    ControlGrid,
    EnsembleTrajectory,
    ParameterEnsemble,
    control_l1_norm,
    control_l2_norm_sq,
    make_uniform_grid,
)
from .experiment import (
    ExperimentConfig,
    ExperimentResult,
    gaussian_init,
    load_config,
    run_experiment,
    write_artifacts,
)
from .objectives import EnsembleTrackingProblem
from .optimize import (
    OptReport,
    Oracle,
    armijo_gd,
    lbfgs,
    primal_dual_avar,
    subgradient_method,
)
from .qubit import (
    QubitSystem,
    TerminalInfidelity,
    overlap_infidelity,
    pauli_expm,
    qubit_step,
    reference_control,
    step_control_derivative,
)
from .risk import RiskIdentifier, RiskMeasure, evaluate, risk_identifier, smoothed_avar

__version__ = "0.1.0"

__all__ = [
    "AdjointTrajectory",
    "ConfigError",
    "Control",
    "ControlAffineSystem",
    "ControlCost",
    "ControlGrid",
    "CostMeasure",
    "DivergenceError",
    "EnsembleTrackingProblem",
    "EnsembleTrajectory",
    "ExperimentConfig",
    "ExperimentResult",
    "FundamentalMatrices",
    "Integrand",
    "OptReport",
    "Oracle",
    "ParameterEnsemble",
    "QubitSystem",
    "RiskIdentifier",
    "RiskMeasure",
    "Stepper",
    "TerminalInfidelity",
    "adjoint_solve",
    "armijo_gd",
    "assemble_gradient",
    "control_l1_norm",
    "control_l2_norm_sq",
    "duhamel_linearized",
    "evaluate",
    "fundamental_matrices",
    "gaussian_init",
    "lbfgs",
    "linearize_scenario",
    "load_config",
    "make_uniform_grid",
    "overlap_infidelity",
    "pauli_expm",
    "primal_dual_avar",
    "propagate_ensemble",
    "propagate_scenario",
    "qubit_step",
    "reference_control",
    "risk_identifier",
    "run_experiment",
    "scenario_cost",
    "smoothed_avar",
    "stationarity_residual",
    "step_control_derivative",
    "subgradient_method",
    "tracking_gradient",
    "write_artifacts",
    "__version__",
]
