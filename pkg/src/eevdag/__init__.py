"""Structure learning for linear Gaussian SEMs with equal error variances."""

from .graph import Cpdag, Dag, GraphError, Move, apply_move, enumerate_dags, is_acyclic, legal_moves, shd, to_cpdag
from .score import (
    CovarianceSummary,
    Fit,
    ScoreUndefined,
    equal_variance_bic,
    per_node_variance_bic,
    population_score,
    sample_covariance,
)
from .search import SearchConfig, SearchResult, best_score_select, exhaustive_search, gds_eev
from .sem import DataSet, LinearGaussianSem, RandomModelConfig, nonfaithful_example, random_model, sample

__version__ = "0.1.0"
