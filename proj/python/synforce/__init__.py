"""Python bindings for the synforce core library."""

from ._core import (
    ConfigError,
    InputError,
    SchemaError,
    ShapeError,
    balanced_eval_set,
    hypersphere_log_volume,
    loss_diff,
    loss_enc,
    loss_rec,
    loss_stdp,
    loss_svdd,
    loss_vol,
    pr_best_f1,
    roc_auc,
    run_cli,
    score_csv,
    stdp_window,
    synth_csv,
)

__all__ = [
    "ConfigError",
    "InputError",
    "SchemaError",
    "ShapeError",
    "balanced_eval_set",
    "hypersphere_log_volume",
    "loss_diff",
    "loss_enc",
    "loss_rec",
    "loss_stdp",
    "loss_svdd",
    "loss_vol",
    "pr_best_f1",
    "roc_auc",
    "run_cli",
    "score_csv",
    "stdp_window",
    "synth_csv",
]
