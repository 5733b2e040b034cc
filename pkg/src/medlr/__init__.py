"""Calibrated tests for the no-mediation hypothesis.

The working objects are the ordered squared t-statistics (v1, v2).  The
recommended procedure rejects when v1 exceeds the chi-square critical value
or the ratio v1/v2 exceeds a calibrated threshold b(alpha); the shipped
percentile table makes that a two-number lookup, with coherent p-values.
"""

from .calibrate import (
    CalibrationConfig,
    CalibrationResult,
    ConvergenceError,
    b_of_lambda,
    generate_table,
    optimal_b,
    optimal_b_truncated,
)
from .distributions import (
    chisq1_quantile,
    nc_chisq1_cdf,
    nc_chisq1_pdf_dlambda,
    nc_chisq_pdf,
    norm_cdf,
    norm_pdf,
)
from .estimate import (
    Dataset,
    MediationOptions,
    RegressionFit,
    fit_linear,
    fit_logit_outcome,
    read_dataset_csv,
    residualize,
    robust_t,
    run_mediation_test,
    test_from_tstats,
)
from .order_stats import (
    NoncentralityPair,
    OrderedPair,
    RegionProbs,
    joint_pdf,
    marginal_v1_cdf,
    null_joint_pdf,
    region_probs,
)
from .rules import (
    CriticalPair,
    CriticalTable,
    ExactTestSpec,
    RejectionCause,
    TestReport,
    build_exact_spec,
    coherence_scan,
    decide_exact,
    decide_lr,
    decide_simply_augmented,
    decide_truncated,
    decide_wald,
    lr_statistic,
    p_value,
    wald_statistic,
)
from .simulate import (
    SimulationConfig,
    SimulationResult,
    run_campaign,
    run_sweep,
    theta2_for_lambda,
)
from .size_power import (
    BoundParams,
    discrepancy,
    discrepancy_dlambda,
    exact_nrp_quadrature,
    nrp_lr,
    nrp_simply_augmented,
    nrp_wald,
    power_exact,
    power_lr,
    power_region,
    power_simply_augmented,
    power_truncated,
    power_wald,
    rectangle_excess,
    truncated_bound_ub,
    truncated_discrepancy,
)

__version__ = "0.1.0"
