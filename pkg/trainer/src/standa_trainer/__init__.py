"""Desk-scale trainer producing weight bundles for the inference package.

Train the domain-adapted extractor (`train_wdgrl`), fit the autoencoder on
its representations (`train_autoencoder`), and `export_bundle` the pair as
a "stand-da-bundle/1" JSON file. The inference side loads that file
unchanged; nothing else crosses the package boundary.
"""

from .export import BUNDLE_VERSION, ExportError, export_bundle
from .nets import RELU, Adam, Dense, backward, forward, forward_cached, init_mlp, parameters
from .training import (
    AutoencoderResult,
    TrainConfig,
    TrainingDivergedError,
    WdgrlResult,
    train_autoencoder,
    train_wdgrl,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AutoencoderResult",
    "BUNDLE_VERSION",
    "Dense",
    "ExportError",
    "RELU",
    "TrainConfig",
    "TrainingDivergedError",
    "WdgrlResult",
    "backward",
    "export_bundle",
    "forward",
    "forward_cached",
    "init_mlp",
    "parameters",
    "train_autoencoder",
    "train_wdgrl",
]
