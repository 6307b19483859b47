"""Sequential detection with asynchronously sampled, FC-correlated Gaussian sensors."""

from .correlation import (
    CovarianceMatrix,
    SingularCovarianceError,
    block_inverse,
    build_covariance,
    covariance_stack,
)
from .divergence import (
    ConsistencyError,
    IndexSets,
    KldReport,
    UpperBound,
    kl_divergence,
    kl_divergence_batch,
    kl_quadratic_form,
    kld_report,
    lower_bound,
    partition_indices,
    upper_bound,
)
from .optimize import Extremum, OptimizerConfig, grid_oracle, maximize_kld, minimize_kld
from .scenario import (
    CorrelationKernel,
    KernelKind,
    Scenario,
    ScenarioError,
    SprtConfig,
    eval_kernel,
    validate_scenario,
)
from .simulate import McConfig, StoppingTimeEstimate, draw_group, empirical_kld, run_sprt_trials
from .sprt import (
    Hypothesis,
    SprtState,
    SprtStatus,
    Thresholds,
    expected_stopping_time,
    llr,
    step,
    stopping_time_bounds,
    thresholds,
)

__version__ = "0.1.0"
