"""Optimal treatment and control group sizes in multi-group random
coefficient regression: closed-form estimators and predictors, their moment
matrices and spectra, A/D/E design criteria with optimal weights, and an
independent mixed-model oracle with Monte Carlo verification.
"""

from .criteria import (
    CriterionSpec,
    criterion_value,
    fixed_effects_criterion_weight,
)
from .design import (
    OptimalDesignResult,
    SweepRow,
    default_rho_grid,
    efficiency,
    exact_criterion_value,
    golden_section_minimize,
    limiting_weight,
    minimize_criterion_weight,
    optimal_weight,
    round_to_exact,
    sweep,
    write_sweep_csv,
)
from .estimation import (
    IndividualPrediction,
    ObservationSet,
    PopulationEstimate,
    blue,
    blup,
    group_means,
    parse_observations,
    predict_from_means,
    read_observations_csv,
    write_predictions_csv,
)
from .model import (
    ApproximateDesign,
    ExactDesign,
    MixedModelSystem,
    ModelConfig,
    build_system,
    config_from_json,
    config_from_rho,
    regression_vector,
    weight_of,
)
from .moments import (
    EigenSpectrum,
    MomentMatrix,
    TwoGroupMseBlocks,
    cov_blue,
    eig_cov_blue,
    eig_mse_two_group,
    mse_blocks,
    mse_blocks_two_group,
    mse_blup,
)
from .oracle import (
    CheckResult,
    HendersonSolution,
    PartitionedMse,
    SimulationResult,
    default_verification_grid,
    frobenius_distance,
    henderson_mse,
    henderson_solve,
    henderson_solve_joint,
    numeric_eigs,
    partitioned_mse_closed_form,
    run_eigen_checks,
    run_oracle_checks,
    simulate_mse,
)

__version__ = "0.1.0"

__all__ = [
    "ApproximateDesign",
    "CheckResult",
    "CriterionSpec",
    "EigenSpectrum",
    "ExactDesign",
    "HendersonSolution",
    "IndividualPrediction",
    "MixedModelSystem",
    "ModelConfig",
    "MomentMatrix",
    "ObservationSet",
    "OptimalDesignResult",
    "PartitionedMse",
    "PopulationEstimate",
    "SimulationResult",
    "SweepRow",
    "TwoGroupMseBlocks",
    "blue",
    "blup",
    "build_system",
    "config_from_json",
    "config_from_rho",
    "cov_blue",
    "criterion_value",
    "default_rho_grid",
    "default_verification_grid",
    "efficiency",
    "eig_cov_blue",
    "eig_mse_two_group",
    "exact_criterion_value",
    "fixed_effects_criterion_weight",
    "frobenius_distance",
    "golden_section_minimize",
    "group_means",
    "henderson_mse",
    "henderson_solve",
    "henderson_solve_joint",
    "limiting_weight",
    "minimize_criterion_weight",
    "mse_blocks",
    "mse_blocks_two_group",
    "mse_blup",
    "numeric_eigs",
    "optimal_weight",
    "parse_observations",
    "partitioned_mse_closed_form",
    "predict_from_means",
    "read_observations_csv",
    "regression_vector",
    "round_to_exact",
    "run_eigen_checks",
    "run_oracle_checks",
    "simulate_mse",
    "sweep",
    "weight_of",
    "write_predictions_csv",
    "write_sweep_csv",
]
