"""Blind image quality assessment learned from preference image pairs.

Feature extraction (spatial/DCT/wavelet scene statistics), preference-pair
generation, a group-lasso multiple-kernel SVM trained on difference
vectors, gain-based quality scoring, and the repeated-trial evaluation
protocol, with a synthetic distorted-image corpus for end-to-end tests.
"""

from ._errors import (
    InfeasibleProtocolError,
    ManifestError,
    MissingFileError,
    NoEligiblePairsError,
    PriqError,
)
from .corpus import (
    DISTORTIONS,
    Manifest,
    ScoredImage,
    SynthConfig,
    load_image,
    load_manifest,
    save_manifest,
    split_by_group,
    synth_corpus,
    synthetic_score,
)
from .evaluate import (
    ExperimentSummary,
    Protocol,
    TrialFailure,
    TrialResult,
    krcc,
    logistic_remap,
    manifest_features,
    plcc,
    run_trials,
    srcc,
    threshold_sweep,
)
from .features import (
    FEATURE_DIM,
    GROUP_SLICES,
    extract_all,
    read_feature_cache,
    write_feature_cache,
)
from .mkl import (
    ConvergenceWarning,
    KernelSpec,
    MklConfig,
    TrainedModel,
    build_kernel_bank,
    decision_value,
    kernel_eval,
    load_model,
    mklgl_train,
    predict_label,
    predict_labels,
    save_model,
    svm_solve_dual,
)
from .pairs import (
    DiffSet,
    PrefPair,
    aggregate_votes,
    build_diffset,
    gen_pairs_from_scores,
    load_pairs,
    max_pair_count,
    save_pairs,
)
from .quality import (
    QualityReport,
    gain_to_score_params,
    load_scores,
    save_scores,
    score_batch,
    score_image,
    training_gain,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceWarning",
    "DISTORTIONS",
    "DiffSet",
    "ExperimentSummary",
    "FEATURE_DIM",
    "GROUP_SLICES",
    "InfeasibleProtocolError",
    "KernelSpec",
    "Manifest",
    "ManifestError",
    "MissingFileError",
    "MklConfig",
    "NoEligiblePairsError",
    "PrefPair",
    "PriqError",
    "Protocol",
    "QualityReport",
    "ScoredImage",
    "SynthConfig",
    "TrainedModel",
    "TrialFailure",
    "TrialResult",
    "aggregate_votes",
    "build_diffset",
    "build_kernel_bank",
    "decision_value",
    "extract_all",
    "gain_to_score_params",
    "gen_pairs_from_scores",
    "kernel_eval",
    "krcc",
    "load_image",
    "load_manifest",
    "load_model",
    "load_pairs",
    "load_scores",
    "logistic_remap",
    "manifest_features",
    "max_pair_count",
    "mklgl_train",
    "plcc",
    "predict_label",
    "predict_labels",
    "read_feature_cache",
    "run_trials",
    "save_manifest",
    "save_model",
    "save_pairs",
    "save_scores",
    "score_batch",
    "score_image",
    "split_by_group",
    "srcc",
    "svm_solve_dual",
    "synth_corpus",
    "synthetic_score",
    "threshold_sweep",
    "training_gain",
    "write_feature_cache",
]
