"""compatsweep: compatibility-aware, per-user personalized model updates.

Train an updated model whose mistakes stay compatible with a deployed base
model, personalize the update toward one user's interaction history via
instance re-weighting, sweep the compatibility-performance trade-off, and
evaluate the benefit with a nested cross-validation protocol.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .compatibility import (
    SkippedPoint,
    TradeoffCurve,
    TradeoffPoint,
    TrainMasks,
    WeightVector,
    assemble_sample_weights,
    compute_compatibility,
    correct_label_mask,
    sweep_lambda,
    train_update,
)
from .dataset import (
    Dataset,
    DatasetSchema,
    Instance,
    SplitPlan,
    UserHistory,
    group_histories,
    load_dataset,
    plan_folds,
    sample_pretrain_subset,
)
from .errors import (
    CompatSweepError,
    ConfigError,
    DataError,
    IngestionError,
    LabelError,
    SchemaError,
)
from .experiment import (
    BASELINE,
    ExperimentConfig,
    ImprovementRow,
    CorrelationRow,
    RunResult,
    Selection,
    SynthConfig,
    aggregate_curves,
    default_model_grid,
    drifted_user_ids,
    generate_synthetic,
    improvement_table,
    run_experiment,
    select_best_model,
)
from .metrics import (
    MetricValue,
    accuracy,
    align_curves,
    autc,
    history_distance,
    pearson,
    roc_auc,
    wasserstein_1d,
)
from .tree import (
    TreeConfig,
    TreeModel,
    best_split,
    fit_tree,
    predict_label,
    predict_labels,
    predict_score,
    predict_scores,
)

__all__ = [
    "__version__",
    "BASELINE",
    "CompatSweepError",
    "ConfigError",
    "CorrelationRow",
    "DataError",
    "Dataset",
    "DatasetSchema",
    "ExperimentConfig",
    "ImprovementRow",
    "IngestionError",
    "Instance",
    "LabelError",
    "MetricValue",
    "RunResult",
    "SchemaError",
    "Selection",
    "SkippedPoint",
    "SplitPlan",
    "SynthConfig",
    "TradeoffCurve",
    "TradeoffPoint",
    "TrainMasks",
    "TreeConfig",
    "TreeModel",
    "UserHistory",
    "WeightVector",
    "accuracy",
    "aggregate_curves",
    "align_curves",
    "assemble_sample_weights",
    "autc",
    "best_split",
    "compute_compatibility",
    "correct_label_mask",
    "default_model_grid",
    "drifted_user_ids",
    "fit_tree",
    "generate_synthetic",
    "group_histories",
    "history_distance",
    "improvement_table",
    "load_dataset",
    "pearson",
    "plan_folds",
    "predict_label",
    "predict_labels",
    "predict_score",
    "predict_scores",
    "roc_auc",
    "run_experiment",
    "sample_pretrain_subset",
    "select_best_model",
    "sweep_lambda",
    "train_update",
    "wasserstein_1d",
]
