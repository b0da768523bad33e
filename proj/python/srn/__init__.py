"""Semantic reasoning network scene-text recognizer."""

from ._srn import (
    Charset,
    ConfigError,
    DimensionError,
    DivergenceError,
    InputError,
    IoError,
    TrainOutcome,
    check_disambiguation,
    edit_distance,
    generate_lexicon,
    gradient_check,
    infer,
    normalize_config,
    read_pgm,
    render_word,
    score,
    train,
    write_pgm,
)

__all__ = [
    "Charset",
    "ConfigError",
    "DimensionError",
    "DivergenceError",
    "InputError",
    "IoError",
    "TrainOutcome",
    "check_disambiguation",
    "edit_distance",
    "generate_lexicon",
    "gradient_check",
    "infer",
    "normalize_config",
    "read_pgm",
    "render_word",
    "score",
    "train",
    "write_pgm",
]
