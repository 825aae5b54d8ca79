"""Multi-exit 1-D CNNs for sensor time series with confidence-gated
consistency training and entropy-based early exit."""

from ._core import (
    ConfigError,
    Error,
    FormatError,
    Model,
    NumericError,
    ShapeError,
    accuracy,
    additive_noise,
    choose_exit,
    cohens_kappa,
    gradcheck,
    generate_synthetic,
    kappa_schedule,
    load_windows,
    macro_f1,
    mask_segment,
    multiplicative_scale,
    normalize_config,
    normalized_entropy,
    save_windows,
    time_warp,
    train,
    warp_positions,
)

__all__ = [
    "ConfigError",
    "Error",
    "FormatError",
    "Model",
    "NumericError",
    "ShapeError",
    "accuracy",
    "additive_noise",
    "choose_exit",
    "cohens_kappa",
    "gradcheck",
    "generate_synthetic",
    "kappa_schedule",
    "load_windows",
    "macro_f1",
    "mask_segment",
    "multiplicative_scale",
    "normalize_config",
    "normalized_entropy",
    "save_windows",
    "time_warp",
    "train",
    "warp_positions",
]
