"""Vertebral body morphometry on 3D spine meshes."""

import json

from ._core import (
    DIMENSIONS,
    LANDMARKS,
    Mesh,
    SpinemorphError,
    generate_dataset,
    generate_vertebra,
    icc,
    load_mesh,
    mae,
    save_mesh,
)
from . import _core

__all__ = [
    "DIMENSIONS",
    "LANDMARKS",
    "Mesh",
    "SpinemorphError",
    "evaluate",
    "generate_dataset",
    "generate_vertebra",
    "icc",
    "load_mesh",
    "mae",
    "measure_manifest",
    "save_mesh",
]


def measure_manifest(manifest, max_angle=45.0, fallback_single=False):
    """Measure every vertebra in a manifest; returns the report as a dict."""
    return json.loads(_core.measure_manifest_json(str(manifest), max_angle, fallback_single))


def evaluate(pred, truth):
    """Compare report(s) under `pred` with an annotation or ground-truth CSV."""
    return json.loads(_core.evaluate_json(str(pred), str(truth)))
