"""Sparse-coding feature-purification laboratory.

Thin wrapper over the compiled core. Configs are passed as text in the same
``key = value`` format the CLI reads; an empty string means the built-in
defaults. See ``default_config_text()`` for the full key listing.
"""

from ._purelab import (
    attack,
    classify_neurons,
    config_hash,
    default_config_text,
    dense_projection,
    derive_seed,
    dictionary,
    evaluate,
    forward,
    forward_smoothed,
    grad_input,
    lasso,
    load_checkpoint,
    normalize_config,
    planted_direction,
    run_pipeline,
    sample_dataset,
    theta,
    train_adv,
    train_clean,
    train_ntk,
)

__all__ = [
    "attack",
    "classify_neurons",
    "config_hash",
    "default_config_text",
    "dense_projection",
    "derive_seed",
    "dictionary",
    "evaluate",
    "forward",
    "forward_smoothed",
    "grad_input",
    "lasso",
    "load_checkpoint",
    "normalize_config",
    "planted_direction",
    "run_pipeline",
    "sample_dataset",
    "theta",
    "train_adv",
    "train_clean",
    "train_ntk",
]
