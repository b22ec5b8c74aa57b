"""Ground truth for checking estimators: exact enumeration, closed-form limits, simulation."""
from .dgp import ClusterDgp, Dgp
from .enumeration import enumerate_complete, enumerate_stratified
from .gap import SamplingRegime, finite_pop_gap
from .montecarlo import Analysis, dgp_from_dict, monte_carlo, paired_difference, run_config
from .theory import TheoreticalVariances, pooled_three_term, theoretical_variances

__all__ = [
    "Analysis", "ClusterDgp", "Dgp", "SamplingRegime", "TheoreticalVariances", "dgp_from_dict",
    "enumerate_complete", "enumerate_stratified", "finite_pop_gap", "monte_carlo", "paired_difference",
    "pooled_three_term", "run_config", "theoretical_variances",
]
