from ._checkpoint import load_checkpoint, save_checkpoint
from ._errors import (
    CheckpointError,
    ConfigurationError,
    DomainError,
    NcapError,
    ShapeError,
    TrainingDivergedError,
    UndefinedCorrelationError,
)
from ._losses import (
    LOSS_NAMES,
    LossResult,
    LossSpec,
    ce_loss,
    combined_loss,
    kl_softened_loss,
    label_smooth,
    mae_logit_loss,
    soft_ce_loss,
)
from ._metrics import (
    ImagePair,
    ReliabilityReport,
    confidence_histogram,
    confidence_std,
    edit_distance,
    error_rates,
    pearson,
    psnr,
    reliability,
    sample_error_rates,
    ssim,
    word_confidence,
)
from ._numcore import (
    central_difference,
    linear_forward,
    make_rng,
    max_relative_error,
    prelu,
    softmax_temp,
)
from ._prior import (
    AdapterParams,
    TextPriorParams,
    adapter_param_count,
    init_adapter,
    init_text_prior,
    ncap_backward,
    ncap_forward,
    param_overhead,
    tp_backward,
    tp_forward,
)
from ._reconstruct import (
    PriorConfig,
    corrupt_teacher,
    fit_fusion,
    guided_reconstruct,
    run_prior_analysis,
    train_prior_adapter,
)
from ._report import ComparisonReport, ComparisonRow, PriorAnalysisRow
from ._settings import (
    ExperimentConfig,
    Settings,
    load_experiment_config,
)
from ._toytask import (
    RecognizerParams,
    Sample,
    TaskConfig,
    TrainLog,
    evaluate_recognizer,
    gen_dataset,
    gradcheck_recognizer,
    noise_sweep,
    recognizer_forward,
    run_comparison,
    train_recognizer,
)
from ._version import version as __version__

__all__ = [
    "AdapterParams",
    "CheckpointError",
    "ComparisonReport",
    "ComparisonRow",
    "ConfigurationError",
    "DomainError",
    "ExperimentConfig",
    "ImagePair",
    "LOSS_NAMES",
    "LossResult",
    "LossSpec",
    "NcapError",
    "PriorAnalysisRow",
    "PriorConfig",
    "RecognizerParams",
    "ReliabilityReport",
    "Sample",
    "Settings",
    "ShapeError",
    "TaskConfig",
    "TextPriorParams",
    "TrainLog",
    "TrainingDivergedError",
    "UndefinedCorrelationError",
    "__version__",
    "adapter_param_count",
    "ce_loss",
    "central_difference",
    "combined_loss",
    "confidence_histogram",
    "confidence_std",
    "corrupt_teacher",
    "edit_distance",
    "error_rates",
    "evaluate_recognizer",
    "fit_fusion",
    "gen_dataset",
    "get_settings",
    "gradcheck_recognizer",
    "guided_reconstruct",
    "init_adapter",
    "init_text_prior",
    "kl_softened_loss",
    "label_smooth",
    "linear_forward",
    "load_checkpoint",
    "load_experiment_config",
    "mae_logit_loss",
    "make_rng",
    "max_relative_error",
    "ncap_backward",
    "ncap_forward",
    "noise_sweep",
    "param_overhead",
    "pearson",
    "prelu",
    "psnr",
    "recognizer_forward",
    "reliability",
    "run_comparison",
    "run_prior_analysis",
    "sample_error_rates",
    "save_checkpoint",
    "soft_ce_loss",
    "softmax_temp",
    "ssim",
    "tp_backward",
    "tp_forward",
    "train_prior_adapter",
    "train_recognizer",
    "word_confidence",
]

# Singleton instance
_settings_instance = None


def get_settings() -> Settings:
    """Get the singleton instance holding the packaged default settings."""
    global _settings_instance
    if _settings_instance is None:
        _settings_instance = Settings()
    return _settings_instance
