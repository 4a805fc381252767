"""Sequential first-order meta-learning and forgetting analysis."""

from . import _seqmeta
from ._seqmeta import (
    Distribution,
    Network,
    SeqmetaError,
    Task,
    fomaml_meta_gradient,
    init_params,
    meta_train,
    nls_fit,
    pearson_r,
    predict_F,
    predict_f,
    sample_sequence,
    seqfomaml_meta_gradient,
    sequential_evaluate,
)

__all__ = [
    "Distribution",
    "Network",
    "SeqmetaError",
    "Task",
    "fomaml_meta_gradient",
    "init_params",
    "meta_train",
    "nls_fit",
    "pearson_r",
    "predict_F",
    "predict_f",
    "sample_sequence",
    "seqfomaml_meta_gradient",
    "sequential_evaluate",
    "stage_meta_train",
    "stage_evaluate",
    "stage_fit_decay",
    "stage_report",
]


def stage_meta_train(config, out=None, seed=None, sequence_length=None, head_mode=None, workers=1):
    """Runs the meta-train stage of an experiment JSON file; returns the exit status."""
    return _seqmeta.stage_meta_train(str(config), out and str(out), seed, sequence_length, head_mode, workers)


def stage_evaluate(config, init=None, out=None, seed=None, sequence_length=None, head_mode=None, workers=1):
    return _seqmeta.stage_evaluate(
        str(config), init and str(init), out and str(out), seed, sequence_length, head_mode, workers
    )


def stage_fit_decay(inputs, out=".", chance=None, model="aggregate_F"):
    """`inputs` holds matrix CSV paths, optionally as "<L>=<path>"."""
    return _seqmeta.stage_fit_decay([str(i) for i in inputs], str(out), chance, model)


def stage_report(directory):
    return _seqmeta.stage_report(str(directory))

