"""Learning Mahalanobis similarity metrics from absolute human ratings."""

from .core import (
    COMPAS_SCALE,
    SURVEY_SCALE,
    CellStats,
    EvalReport,
    ExperimentConfig,
    LabeledDataset,
    MahalanobisMetric,
    PairSets,
    RatingScale,
    Triplet,
    TripletSet,
    distance,
    squared_distance,
)
from .constraints import build_pairs, build_triplets, subsample_triplets
from .evaluation import (
    knn_l1,
    knn_l2,
    knn_predict,
    run_experiment,
    sigma_sweep,
    triplet_violation_loss,
)
from .ingest import (
    FeatureSchema,
    SurveyRecord,
    attach_labels,
    default_schema,
    load_defendants,
    load_survey,
    standardize,
)
from .learners import (
    OptimizerTrace,
    euclidean_baseline,
    fit_lmnn,
    fit_lsml,
    fit_mmc,
    load_metric,
    precision_baseline,
    save_metric,
)
from .numerics import covariance, logdet, psd_project, safe_inverse
from .survey import bail_rate_table, confidence_accuracy_table

__all__ = [
    "COMPAS_SCALE",
    "SURVEY_SCALE",
    "CellStats",
    "EvalReport",
    "ExperimentConfig",
    "FeatureSchema",
    "LabeledDataset",
    "MahalanobisMetric",
    "OptimizerTrace",
    "PairSets",
    "RatingScale",
    "SurveyRecord",
    "Triplet",
    "TripletSet",
    "attach_labels",
    "bail_rate_table",
    "build_pairs",
    "build_triplets",
    "confidence_accuracy_table",
    "covariance",
    "default_schema",
    "distance",
    "euclidean_baseline",
    "fit_lmnn",
    "fit_lsml",
    "fit_mmc",
    "knn_l1",
    "knn_l2",
    "knn_predict",
    "load_defendants",
    "load_metric",
    "load_survey",
    "logdet",
    "precision_baseline",
    "psd_project",
    "run_experiment",
    "safe_inverse",
    "save_metric",
    "sigma_sweep",
    "squared_distance",
    "standardize",
    "subsample_triplets",
    "triplet_violation_loss",
]
