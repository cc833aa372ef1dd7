"""Classic, learned and sandwiched learned Bloom filters for URL membership."""

from .bloom import BloomFilter, Layer, bf_build, bf_optimal_k, bf_query, bf_size_for
from .classifiers import (
    ConstantModel,
    FFNNModel,
    LinearModel,
    NaiveBayesModel,
    ScoringModel,
    TrainingConfig,
    default_config,
    fit_text,
    load_model,
    model_size_bytes,
    train,
)
from .encoding import CharVocabulary, UrlRecord, build_vocabulary, encode, encode_many, standardize
from .errors import BudgetError, CorruptBlobError, DataError, DomainError, TrainingError
from .learned import (
    FprBudget,
    LearnedFilter,
    calibrate_tau,
    filter_size_bytes,
    lbf_budget,
    lbf_build,
    lbf_query,
    load_filter,
    slbf_budget,
    slbf_build,
    slbf_query,
)

__version__ = "0.1.0"

__all__ = [
    "BloomFilter",
    "BudgetError",
    "CharVocabulary",
    "ConstantModel",
    "CorruptBlobError",
    "DataError",
    "DomainError",
    "FFNNModel",
    "FprBudget",
    "Layer",
    "LearnedFilter",
    "LinearModel",
    "NaiveBayesModel",
    "ScoringModel",
    "TrainingConfig",
    "TrainingError",
    "UrlRecord",
    "bf_build",
    "bf_optimal_k",
    "bf_query",
    "bf_size_for",
    "build_vocabulary",
    "calibrate_tau",
    "default_config",
    "encode",
    "encode_many",
    "filter_size_bytes",
    "fit_text",
    "lbf_budget",
    "lbf_build",
    "lbf_query",
    "load_filter",
    "load_model",
    "model_size_bytes",
    "slbf_budget",
    "slbf_build",
    "slbf_query",
    "standardize",
    "train",
]
