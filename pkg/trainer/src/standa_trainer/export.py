"""Serialize trained networks into the portable weight-bundle format.

The inference package consumes `"stand-da-bundle/1"` JSON documents; this
module writes them. Only affine and ReLU layers exist on the inference
side, so anything else is rejected by name. Weights trained in float32 are
widened to their exact float64 values, making the serialized decimals
lossless: the loader reconstructs bit-identical 64-bit weights.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .nets import RELU, Dense
from .training import TrainConfig

BUNDLE_VERSION = "stand-da-bundle/1"


class ExportError(ValueError):
    """A network contains something the bundle format cannot express."""


def _layers_to_json(layers, name: str) -> list[dict]:
    out = []
    for idx, layer in enumerate(layers):
        if isinstance(layer, Dense):
            out.append(
                {
                    "kind": "affine",
                    "weight": layer.weight.astype(np.float64).tolist(),
                    "bias": layer.bias.astype(np.float64).tolist(),
                }
            )
        elif layer == RELU:
            out.append({"kind": "relu"})
        else:
            raise ExportError(
                f"{name} layer {idx}: unsupported layer {layer!r} "
                f"(only affine and relu can be exported)"
            )
    if not any(o["kind"] == "affine" for o in out):
        raise ExportError(f"{name}: no affine layers to export")
    return out


def export_bundle(extractor, autoencoder, path, config: TrainConfig | None = None) -> Path:
    """Write both networks as one bundle; returns the written path.

    The critic never ships: inference only needs the extractor and the
    autoencoder. Training provenance (penalty weight, critic steps, seed)
    is recorded in the metadata when the config is supplied.
    """
    doc = {
        "version": BUNDLE_VERSION,
        "extractor": _layers_to_json(extractor, "extractor"),
        "autoencoder": _layers_to_json(autoencoder, "autoencoder"),
        "metadata": {"trained_by": "standa-trainer", "precision": "float32"},
    }
    if config is not None:
        doc["metadata"].update(
            {
                "penalty_weight": config.penalty_weight,
                "critic_steps": config.critic_steps,
                "epochs": config.epochs,
                "seed": config.seed,
            }
        )
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    return path
