"""Python bindings for the email deferral pipeline."""

from ._core import (
    Analysis,
    Corpus,
    SynthConfig,
    SynthResult,
    calibrated_config,
    check_calibration,
    generate,
    load_corpus,
    metrics,
    newton_leaf_value,
    planted_signal_config,
    split_gain,
)
from ._core import (
    ConfigError,
    DataError,
    Error,
    IntegrityError,
    LookupError,
    ParseError,
    ValidationError,
)

__all__ = [
    "Analysis",
    "Corpus",
    "SynthConfig",
    "SynthResult",
    "calibrated_config",
    "check_calibration",
    "generate",
    "load_corpus",
    "metrics",
    "newton_leaf_value",
    "planted_signal_config",
    "split_gain",
    "ConfigError",
    "DataError",
    "Error",
    "IntegrityError",
    "LookupError",
    "ParseError",
    "ValidationError",
]
