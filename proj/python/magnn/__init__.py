"""MAGNN heterogeneous graph embedding (C++ core with Python bindings)."""

import json as _json

from ._core import (
    ConfigError,
    DataError,
    Dataset,
    Error,
    NumericError,
    SchemaError,
    ShapeError,
    ari,
    average_precision,
    enumerate_instances,
    f1_scores,
    kmeans,
    linear_probe,
    load_dataset,
    nmi,
    roc_auc,
    synth_bipartite,
    synth_hetgraph,
)
from . import _core


def default_config():
    """RunConfig defaults as a dict."""
    return _json.loads(_core._default_config())


def run_pipeline(dataset, **config):
    """Run a task on an in-memory dataset without writing files.

    Keyword arguments are RunConfig fields, e.g. task="classify",
    metapaths=["M-D-M"], target="M". Returns a dict with "reports",
    "embeddings" (numpy array), "nodes" and, after training, "training".
    """
    return _core._run_pipeline(dataset, _json.dumps(config))


def run(**config):
    """Like run_pipeline, but loads config["schema"] and writes artifacts to config["output_dir"]."""
    return _core._run(_json.dumps(config))


__all__ = [
    "ConfigError", "DataError", "Dataset", "Error", "NumericError", "SchemaError", "ShapeError",
    "ari", "average_precision", "default_config", "enumerate_instances", "f1_scores", "kmeans",
    "linear_probe", "load_dataset", "nmi", "roc_auc", "run", "run_pipeline", "synth_bipartite",
    "synth_hetgraph",
]
