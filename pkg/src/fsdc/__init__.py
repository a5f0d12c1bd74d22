"""Few-shot distribution calibration toolkit.

Transfers feature statistics from data-rich base classes to few-shot novel
classes, samples synthetic features from the calibrated Gaussians, and
evaluates simple classifiers over many episodic tasks.  The usual flow:

    ds, split, _ = generate_synthetic(SyntheticSpec(...))
    stats = build_base_stats(ds, split)
    report = evaluate(ds, split, stats, EpisodeSpec(...), PipelineConfig())
"""

from .calibration import (CalibratedDistribution, CalibrationParams,
                          calibrate, calibrate_support_set,
                          nearest_base_classes,
                          retrieve_nearest_class_features)
from .classifiers import (LinearModel, MaxLikelihoodScorer, OptimizerConfig,
                          TrainSet, max_likelihood_classify, predict,
                          train_logistic, train_svm)
from .errors import (DataError, DimensionError, DivergenceError,
                     EmptyClassError, EpisodeError, FactorizationError,
                     FormatError, FsdcError, InsufficientSamplesError,
                     MissingClassError, SpecError, UndefinedStatisticError)
from .features_io import (Dataset, SplitManifest, SyntheticSpec,
                          SyntheticTruth, generate_synthetic, load_dataset,
                          load_split, save_dataset, save_split)
from .harness import (EpisodeSpec, EvalReport, PipelineConfig, evaluate,
                      project_2d, run_episode, sample_episode, sweep)
from .rng import PortableRng, derive_key, splitmix64
from .sampling import SamplerConfig, cholesky_psd, sample_features
from .stats import (BaseStatsTable, ClassStatistics, build_base_stats,
                    class_covariance, class_mean, class_similarity,
                    load_stats, save_stats)
from .transform import TukeyParams, sample_skewness, tukey_transform

__version__ = "0.1.0"

__all__ = [
    "BaseStatsTable", "CalibratedDistribution", "CalibrationParams",
    "ClassStatistics", "DataError", "Dataset", "DimensionError",
    "DivergenceError", "EmptyClassError", "EpisodeError", "EpisodeSpec",
    "EvalReport", "FactorizationError", "FormatError", "FsdcError",
    "InsufficientSamplesError", "LinearModel", "MaxLikelihoodScorer",
    "MissingClassError", "OptimizerConfig", "PipelineConfig", "PortableRng",
    "SamplerConfig", "SpecError", "SplitManifest", "SyntheticSpec",
    "SyntheticTruth", "TrainSet", "TukeyParams", "UndefinedStatisticError",
    "build_base_stats", "calibrate", "calibrate_support_set",
    "cholesky_psd", "class_covariance", "class_mean", "class_similarity",
    "derive_key", "evaluate", "generate_synthetic", "load_dataset",
    "load_split", "load_stats", "max_likelihood_classify",
    "nearest_base_classes", "predict", "project_2d",
    "retrieve_nearest_class_features", "run_episode", "sample_episode",
    "sample_features", "sample_skewness", "save_dataset", "save_split",
    "save_stats", "splitmix64", "sweep", "train_logistic", "train_svm",
    "tukey_transform",
]
