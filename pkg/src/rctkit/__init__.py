"""Design and analysis of randomized experiments.

Assignment under complete, stratified, matched-pair and cluster
randomization; effect estimators with variances matched to the design;
randomization tests; and an oracle layer (exact enumeration, closed-form
limits, Monte Carlo) for checking them.
"""
from ._kernels import BACKEND
from .analysis import analyze
from .design import (assign_clusters, assign_complete, assign_matched_pairs, assign_stratified_block,
                     expand_to_members, imbalance, match_pairs, treated_count)
from .errors import (DataError, DesignError, EnumerationLimitError, EstimationError, IncompatibleError,
                     RankDeficientError, RctError, ValidationError)
from .estimate import (ArmMeanModel, DesignMismatchWarning, LeastSquaresFit, LinearModel, WorkingModel,
                       ZeroModel, aipw, cluster_eq, cluster_size, diff_in_means, least_squares,
                       lin_interacted, pooled_adjusted, saturated_estimate)
from .io import read_sample, write_sample
from .model import (Assignment, ClusterSample, DesignSpec, EstimateReport, PotentialPopulation, Sample,
                    Violation, validate)
from .permute import PermutationResult, permutation_test
from .rng import make_rng, split
from .variance import (aipw_variance, arm_robust_variance, cluster_eq_variance, cluster_robust_wls_variance,
                       cluster_size_variance, confidence_interval, design_based_strat_variance,
                       finite_pop_bound, matched_pairs_variance, normal_quantile, pooled_variance,
                       regression_robust_variance, sbr_variance)

__version__ = "0.1.0"
