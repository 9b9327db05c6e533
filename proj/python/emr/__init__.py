"""Python front end for the episodic memory reader core."""

import json

from ._emr import (
    Episode,
    Model,
    SplitKind,
    StreamItem,
    generate_episode,
    generate_split,
    load_model,
)
from . import _emr

__all__ = [
    "Episode",
    "Model",
    "SplitKind",
    "StreamItem",
    "evaluate",
    "generate_episode",
    "generate_split",
    "inspect",
    "load_model",
    "train",
]


def evaluate(model, episodes, memory_slots=0, seed=1):
    """Argmax evaluation; returns the report as a dict."""
    return json.loads(_emr._evaluate(model, episodes, memory_slots, seed))


def inspect(model, episode, memory_slots=0, seed=1):
    """Per-question memory traces of one episode."""
    return json.loads(_emr._inspect(model, episode, memory_slots, seed))


def train(config, out_dir=""):
    """Train from a dict or key=value text. Returns (summary, best model)."""
    if isinstance(config, dict):
        config = "\n".join(f"{k}={v}" for k, v in config.items())
    summary, model = _emr._train(config, str(out_dir))
    return json.loads(summary), model
