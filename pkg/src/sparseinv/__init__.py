"""Sparse-representation estimators for discrete linear inverse problems.

Penalized model selection over an overcomplete dictionary (searched by
simulated annealing), Q-aggregation of the visited models, a weighted Lasso
baseline, and a simulation harness.
"""
from .aggregate import (
    CandidateSet,
    SimplexWeights,
    aggregate_estimate,
    build_candidates,
    model_selection_as_aggregation,
    q_objective,
    solve_weights,
)
from .dictionary import (
    Atom,
    Dictionary,
    DualDictionary,
    Family,
    SparseEigenEstimate,
    build_dual,
    build_paper_dictionary,
    build_small_dictionary,
    estimate_nu_sq,
)
from .errors import *  # noqa: F401,F403
from .estimator import (
    Model,
    ModelSpace,
    PenaltyRule,
    ProjectionFit,
    RiskReport,
    exact_risk,
    fit_projection,
    frobenius_sq,
    oracle_search,
    penalty,
)
from .lasso import LassoFit, fit_lasso, support_size
from .operator import (
    ForwardOperator,
    Observation,
    apply_forward,
    back_transform,
    build_exponential_operator,
    build_from_matrix,
)
from .search import SAConfig, SATrace, acceptance_probability, initial_proposal_distribution, run_sa

__version__ = "0.1.0"
