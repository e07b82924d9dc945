"""Relaxed covariate overlap, SVM/SVR margins and margin-based causal estimates."""

__version__ = "0.1.0"

from .errors import (ConvergenceError, DegenerateModelError, EmptyMarginError,  # noqa: E402
                     InsufficientDataError, MarginCausalError, ParseError, SchemaError)
from .dataset import (Dataset, DgpSpec, Schema, TreatmentVector, generate,  # noqa: E402
                      load_csv, replicate_rng, replicate_seed, standardize, write_csv)
from .geometry import (brute_force_hull_distance, hull_closest_pair,  # noqa: E402
                       relaxed_overlap_check, separating_hyperplane)
from .svm import (decision_value, fit_linear_svm, fit_meta_margin, kkt_report,  # noqa: E402
                  margin_set)
from .svr import (continuous_margin_set, fit_linear_svr, hard_tube_exists,  # noqa: E402
                  lift_datasets)
from .matching import MatchSet, match_groups  # noqa: E402
from .causal import (CausalEstimate, PipelineConfig, crump_trim,  # noqa: E402
                     fit_propensity_logistic, margin_pipeline, matched_estimate, naive_ace,
                     optimal_pair_match, stabilized_weights, subpopulation_ace,
                     weighted_outcome_regression)
from .diagnostics import (bootstrap_margin_size, fit_margin_tree,  # noqa: E402
                          predict_tree)
