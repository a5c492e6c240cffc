"""Pixel-wise unknown-object scoring and evaluation toolkit."""

from .errors import (
    ConfigError,
    DegenerateError,
    FormatError,
    RoadAnomalyError,
    SchemaError,
    ShapeError,
    TrainingError,
    ValidationError,
)
from .labels import (
    GT_EXCLUDED,
    GT_NOT_OBSTACLE,
    GT_OBSTACLE,
    IGNORE_BIT,
    OBJECT_BIT,
    ClassSchema,
    LabelMap,
    assign_ood_labels,
    boundary_mask,
    build_schema,
    make_eval_gt,
    remap_labels,
)
from .loss import (
    LossConfig,
    LossValue,
    bce_elementwise,
    boundary_aware_loss,
    boundary_aware_loss_grad,
    boundary_loss_flat,
    boundary_loss_grad_flat,
)
from .metrics import (
    EvalReport,
    ScoreHistogram,
    auroc,
    average_precision,
    evaluate,
    fpr_at_95_tpr,
    miou,
)
from .pipeline import BenchmarkRun, bench_metrics, bench_scoring, run_benchmark, score_with_method
from .scoring import (
    CLAMP_EPS,
    METHODS,
    ScoreMap,
    max_logit,
    softmax_entropy,
    unknown_objectness_score,
    unknown_score,
)
from .synth import SceneConfig, extract_features, generate_scene
from .tensor_io import LogitMap, ProbMap, read_tensor, tensor_from_bytes, tensor_to_bytes, write_tensor
from .toy import (
    TrainConfig,
    TrainingCurve,
    ToyModel,
    init_toy_model,
    poly_lr,
    predict,
    train_toy,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
