"""Language-agnostic discourse classification on sentence embeddings."""

__version__ = "0.1.0"

from .classifiers import (
    ClassifierSpec,
    PredictionResult,
    TrainedModel,
    fit,
    predict,
    predict_batch,
)
from .corpus import (
    CANONICAL_LABELS,
    DEFAULT_MERGE_RULES,
    UNCLASSIFIED,
    FoldAssignment,
    LabeledDataset,
    LabeledSample,
    MergeRule,
    apply_merge_rules,
    label_distribution,
    load_labeled_dataset,
    stratified_kfold,
)
from .errors import DataError
from .evaluation import ConfusionMatrix, MetricsReport, confusion_matrix, cross_validate, f1_scores
from .hyperopt import (
    CategoricalDim,
    ContinuousDim,
    IntegerDim,
    SearchSpace,
    Trial,
    bayes_optimize,
    decode,
    encode,
    expected_improvement,
    gp_fit,
    gp_predict,
)
from .model_io import load_model, save_model
from .store import (
    TweetRecord,
    distance,
    l2_normalize,
    load_store,
    mock_embed,
    read_store,
    write_store,
)
from .surveillance import (
    DailyDistribution,
    TimelineSeries,
    aggregate_daily,
    batch_classify,
    emit_report,
    load_report,
    rolling_average,
)
