"""Quality-aware multimodal fusion: uncertainty-weighted late fusion of
per-modality classifiers, with a bench that measures the generalization-bound
decomposition the weighting is designed around.

The public surface re-exported here is the supported API; everything else is
internal detail.
"""

from .data import (
    MultimodalDataset,
    NoiseSpec,
    SyntheticSpec,
    generate,
    inject_noise,
    load,
    save,
    split_dataset,
)
from .diffcore import Matrix, Tape, Var, backward
from .errors import (
    ConfigError,
    DegenerateInputError,
    DimensionError,
    DivergenceError,
    FormatError,
    LabelError,
    QmfError,
    ShapeError,
)
from .fusion import (
    FusedPrediction,
    FusionWeights,
    WeightPolicy,
    calibrate,
    compute_weights,
    default_alpha,
    fuse,
    uniform_static,
)
from .models import ModelConfig, UnimodalModel, init, load_model, predict_logits, save_model
from .theory import (
    BoundBenchConfig,
    BoundReport,
    BoundTrialResult,
    ConditionCheck,
    WeightRule,
    bound_report,
    condition_check,
    convexity_split_check,
    fit_linear_scorer,
    logistic_loss,
    rademacher_linear,
    run_bound_trial,
    score_to_logits,
)
from .training import (
    EvalResult,
    TrainConfig,
    TrainReport,
    evaluate,
    evaluate_unimodal,
    train_qmf,
    train_static,
    train_unimodal,
)
from .uncertainty import (
    UncertaintyScore,
    confidence_uncertainty,
    dst_uncertainty,
    energy_score,
    estimate,
    pearson_r,
)

__version__ = "0.1.0"

__all__ = [
    "BoundBenchConfig",
    "BoundReport",
    "BoundTrialResult",
    "ConditionCheck",
    "ConfigError",
    "DegenerateInputError",
    "DimensionError",
    "DivergenceError",
    "EvalResult",
    "FormatError",
    "FusedPrediction",
    "FusionWeights",
    "LabelError",
    "Matrix",
    "ModelConfig",
    "MultimodalDataset",
    "NoiseSpec",
    "QmfError",
    "ShapeError",
    "SyntheticSpec",
    "Tape",
    "TrainConfig",
    "TrainReport",
    "UncertaintyScore",
    "UnimodalModel",
    "Var",
    "WeightPolicy",
    "WeightRule",
    "backward",
    "bound_report",
    "calibrate",
    "compute_weights",
    "condition_check",
    "confidence_uncertainty",
    "convexity_split_check",
    "default_alpha",
    "dst_uncertainty",
    "energy_score",
    "estimate",
    "evaluate",
    "evaluate_unimodal",
    "fit_linear_scorer",
    "fuse",
    "generate",
    "init",
    "inject_noise",
    "load",
    "load_model",
    "logistic_loss",
    "pearson_r",
    "predict_logits",
    "rademacher_linear",
    "run_bound_trial",
    "save",
    "save_model",
    "score_to_logits",
    "split_dataset",
    "train_qmf",
    "train_static",
    "train_unimodal",
    "uniform_static",
]
