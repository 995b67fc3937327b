"""Python bindings for the headkd library.

Configs, importance matrices, plans and reports are plain dicts with the same
layout as the JSON files the command-line tool writes.
"""

from ._headkd import (
    ConfigError,
    ConstraintError,
    Dataset,
    FormatError,
    HeadkdError,
    IoError,
    LengthError,
    Model,
    apply_overrides,
    gen_data,
    heads_to_prune,
    load_config,
    pipeline,
    prune,
    prune_to_ratio,
    pruning_ratio,
    report,
    row_entropy,
    score,
    select_heads,
    toy_config,
    train,
)

__all__ = [
    "ConfigError",
    "ConstraintError",
    "Dataset",
    "FormatError",
    "HeadkdError",
    "IoError",
    "LengthError",
    "Model",
    "apply_overrides",
    "gen_data",
    "heads_to_prune",
    "load_config",
    "pipeline",
    "prune",
    "prune_to_ratio",
    "pruning_ratio",
    "report",
    "row_entropy",
    "score",
    "select_heads",
    "toy_config",
    "train",
]
