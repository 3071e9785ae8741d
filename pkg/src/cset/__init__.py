"""Conformal prediction sets for classifiers.

Turns precomputed score matrices (logits or probabilities) into prediction
sets with finite-sample marginal coverage, via split-conformal calibration
of cumulative-mass scores (aps), their rank-penalized variant (raps), raw
probability thresholds (lac), an uncalibrated cumulative cutoff (naive),
and a randomized fixed-size baseline (fixed_k).
"""

from .conformal import (
    ConformalModel,
    MethodSpec,
    PredictionSet,
    calibrate,
    conformal_quantile,
    conformity_score,
    load_model,
    naive_model,
    order_stat_index,
    predict,
    save_model,
    set_size_given_u,
    set_sizes,
)
from .metrics import (
    EvalReport,
    coverage_and_size,
    default_difficulty_bins,
    default_strata,
    difficulty_table,
    evaluate_model,
    sscv,
)
from .platt import TemperatureFit, fit_temperature, nll
from .score_store import (
    DataError,
    ScoreMatrix,
    SortedScores,
    SplitSpec,
    load_scores,
    save_scores,
    softmax,
    sort_scores,
    split,
)
from .synth import SynthSpec, generate, oracle_coverage
from .trials import MethodPolicy, TrialAggregate, TrialProtocol, run_synth_trials, run_trials, run_trials_multi
from .tuning import TuneResult, fixed_k_star, make_fixed_k_model, tune_for_adaptiveness, tune_for_size

__all__ = [
    "ConformalModel",
    "DataError",
    "EvalReport",
    "MethodPolicy",
    "MethodSpec",
    "PredictionSet",
    "ScoreMatrix",
    "SortedScores",
    "SplitSpec",
    "SynthSpec",
    "TemperatureFit",
    "TrialAggregate",
    "TrialProtocol",
    "TuneResult",
    "calibrate",
    "conformal_quantile",
    "conformity_score",
    "coverage_and_size",
    "default_difficulty_bins",
    "default_strata",
    "difficulty_table",
    "evaluate_model",
    "fit_temperature",
    "fixed_k_star",
    "generate",
    "load_model",
    "load_scores",
    "make_fixed_k_model",
    "naive_model",
    "nll",
    "oracle_coverage",
    "order_stat_index",
    "predict",
    "run_synth_trials",
    "run_trials",
    "run_trials_multi",
    "save_model",
    "save_scores",
    "set_size_given_u",
    "set_sizes",
    "softmax",
    "sort_scores",
    "split",
    "sscv",
    "tune_for_adaptiveness",
    "tune_for_size",
]
