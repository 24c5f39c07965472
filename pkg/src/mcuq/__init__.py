"""Noisy low-rank matrix completion with entrywise uncertainty quantification.

The package fits convex (nuclear-norm penalized) and nonconvex (factored
gradient) estimators to partially observed matrices, removes their
regularization bias, and builds confidence intervals for matrix entries and
factor inner products whose widths are computable from the observed data
alone. Oracle Cramer-Rao bounds and a Monte Carlo benchmark harness make the
claimed variances testable.
"""

from .errors import NumericalError
from .linalg import (
    TruncatedSVD,
    procrustes_align,
    rank_r_project,
    spd_principal_sqrt,
    truncated_svd,
)
from .model import GroundTruth, generate_ground_truth, incoherence
from .observe import (
    Mask,
    ObservationSet,
    observe,
    p_omega,
    read_dense_csv,
    read_triplets,
    sample_mask,
    write_dense_csv,
    write_triplets,
)
from .solvers import (
    CONVEX_DEFAULTS,
    NONCONVEX_DEFAULTS,
    EstimatorOutput,
    SolverOptions,
    balanced_factors,
    default_lambda,
    nonconvex_gradient,
    nonconvex_loss,
    solve_convex,
    solve_nonconvex,
    spectral_init,
    svt,
)
from .debias import (
    DebiasedEstimate,
    EquivalenceReport,
    debias_estimate,
    debias_linearized,
    debias_matrix,
    deshrink_factors,
    equivalence_report,
    tangent_project,
)
from .infer import (
    LOW_LEVERAGE_FLAG,
    ConfidenceInterval,
    VarianceEstimate,
    empirical_entry_variance,
    entry_ci,
    entry_stat,
    entry_variances,
    factor_inner_stat,
    factor_row_whitened_residual,
    factor_variances,
    normal_quantile,
    true_entry_variance,
)
from .oracle import (
    CrlbRow,
    crlb_entry,
    crlb_row,
    ideal_row_estimator,
    oracle_l2_lower,
)
from .bench import (
    CoverageReport,
    EquivalenceRow,
    EstimationRow,
    ExperimentConfig,
    RealDataRow,
    default_threads,
    export_qq,
    run_coverage,
    run_equivalence,
    run_estimation,
    run_real_data,
    run_statistic_samples,
    write_coverage_csv,
    write_equivalence_csv,
    write_estimation_csv,
    write_realdata_csv,
)

__version__ = "0.1.0"

__all__ = [
    "NumericalError",
    "TruncatedSVD",
    "truncated_svd",
    "rank_r_project",
    "spd_principal_sqrt",
    "procrustes_align",
    "GroundTruth",
    "generate_ground_truth",
    "incoherence",
    "Mask",
    "ObservationSet",
    "sample_mask",
    "observe",
    "p_omega",
    "read_triplets",
    "write_triplets",
    "read_dense_csv",
    "write_dense_csv",
    "SolverOptions",
    "EstimatorOutput",
    "CONVEX_DEFAULTS",
    "NONCONVEX_DEFAULTS",
    "default_lambda",
    "spectral_init",
    "nonconvex_loss",
    "nonconvex_gradient",
    "solve_nonconvex",
    "svt",
    "solve_convex",
    "balanced_factors",
    "DebiasedEstimate",
    "EquivalenceReport",
    "debias_matrix",
    "deshrink_factors",
    "debias_estimate",
    "debias_linearized",
    "tangent_project",
    "equivalence_report",
    "LOW_LEVERAGE_FLAG",
    "VarianceEstimate",
    "ConfidenceInterval",
    "normal_quantile",
    "true_entry_variance",
    "entry_variances",
    "empirical_entry_variance",
    "entry_ci",
    "factor_variances",
    "factor_inner_stat",
    "entry_stat",
    "factor_row_whitened_residual",
    "CrlbRow",
    "ideal_row_estimator",
    "crlb_row",
    "crlb_entry",
    "oracle_l2_lower",
    "ExperimentConfig",
    "CoverageReport",
    "EstimationRow",
    "EquivalenceRow",
    "RealDataRow",
    "default_threads",
    "run_coverage",
    "run_estimation",
    "run_equivalence",
    "run_statistic_samples",
    "export_qq",
    "run_real_data",
    "write_coverage_csv",
    "write_estimation_csv",
    "write_equivalence_csv",
    "write_realdata_csv",
]
