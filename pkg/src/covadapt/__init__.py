"""Covariate-adaptive randomization engine for small two-arm clinical trials."""

from .core import (
    CoinDecision,
    CovariateMatrix,
    GroupStats,
    Method,
    MethodConfig,
    RngStream,
    Standardizer,
    Subject,
    TrialState,
    biased_coin_decide,
    coin_probability,
    discretize_quantiles,
    empirical_moments,
    group_stats,
    permuted_block_init,
    standardize,
    symmetric_sqrt,
)
from .methods import (
    AllocationRecord,
    BkwEvaluation,
    Discrepancy,
    TrialResult,
    allocate_next,
    bkw_discrepancy,
    draw_gamma,
    kernel_density_estimate,
    mh_discrepancy,
    nt_discrepancy,
    ps_discrepancy,
    run_trial,
)
from .metrics import (
    MetricReport,
    build_report,
    correct_guess,
    energy_distance,
    energy_permutation_test,
    marginal_diffs,
)
from .simulate import (
    ReplicateRecord,
    SimulationPlan,
    bundled_dataset,
    execute_plan,
    load_dataset,
    radar_summary,
    simulate,
    summarize,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationRecord",
    "BkwEvaluation",
    "CoinDecision",
    "CovariateMatrix",
    "Discrepancy",
    "GroupStats",
    "Method",
    "MethodConfig",
    "MetricReport",
    "ReplicateRecord",
    "RngStream",
    "SimulationPlan",
    "Standardizer",
    "Subject",
    "TrialResult",
    "TrialState",
    "allocate_next",
    "biased_coin_decide",
    "bkw_discrepancy",
    "build_report",
    "bundled_dataset",
    "coin_probability",
    "correct_guess",
    "discretize_quantiles",
    "draw_gamma",
    "empirical_moments",
    "energy_distance",
    "energy_permutation_test",
    "execute_plan",
    "group_stats",
    "kernel_density_estimate",
    "load_dataset",
    "marginal_diffs",
    "mh_discrepancy",
    "nt_discrepancy",
    "permuted_block_init",
    "ps_discrepancy",
    "radar_summary",
    "run_trial",
    "simulate",
    "standardize",
    "summarize",
    "symmetric_sqrt",
    "__version__",
]
