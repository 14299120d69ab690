"""Piecewise-linear networks, portable weight bundles, and anomaly detection.

Networks are ordered stacks of affine and ReLU layers acting on row vectors:
an affine layer maps ``x -> x @ W + c`` with W of shape (d_in, d_out). A
feature extractor and an autoencoder together form a :class:`ModelBundle`;
the per-row l1 distance between the extractor output and its reconstruction
is the anomaly score.

Bundles serialize to a single JSON document (version "stand-da-bundle/1").
Weights are written as decimal text via Python's shortest-round-trip float
repr, so save -> load reproduces every float64 bit-exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

from .datamodel import DataPair, DimensionError

BUNDLE_VERSION = "stand-da-bundle/1"


class BundleFormatError(ValueError):
    """Weight bundle violates the schema or a dimension-chain invariant."""


@dataclass(frozen=True)
class Affine:
    """Dense layer x -> x @ weight + bias; weight shape (d_in, d_out)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        w = np.atleast_2d(np.asarray(self.weight, dtype=np.float64))
        b = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if b.size != w.shape[1]:
            raise DimensionError(
                f"bias length {b.size} does not match weight columns {w.shape[1]}"
            )
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True)
class ReLU:
    """Elementwise max(x, 0); dimension-preserving."""


Layer = Union[Affine, ReLU]


@dataclass(frozen=True)
class PiecewiseLinearNetwork:
    """Ordered affine/ReLU layers with a validated dimension chain."""

    layers: tuple[Layer, ...]
    input_dim: int

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        dim = int(self.input_dim)
        if dim <= 0:
            raise DimensionError(f"input_dim must be positive, got {dim}")
        for idx, layer in enumerate(layers):
            if isinstance(layer, Affine):
                if layer.d_in != dim:
                    raise DimensionError(
                        f"layer {idx}: affine expects {layer.d_in} inputs, "
                        f"chain provides {dim}"
                    )
                dim = layer.d_out
            elif isinstance(layer, ReLU):
                pass
            else:
                raise BundleFormatError(
                    f"layer {idx}: unsupported layer kind {type(layer).__name__}"
                )
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "input_dim", int(self.input_dim))
        object.__setattr__(self, "_output_dim", dim)

    @property
    def output_dim(self) -> int:
        return self._output_dim  # type: ignore[attr-defined]


@dataclass(frozen=True)
class ModelBundle:
    """Feature extractor (d -> d') plus autoencoder (d' -> d')."""

    extractor: PiecewiseLinearNetwork
    autoencoder: PiecewiseLinearNetwork
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        d_rep = self.extractor.output_dim
        if self.autoencoder.input_dim != d_rep:
            raise BundleFormatError(
                f"autoencoder input dim {self.autoencoder.input_dim} != "
                f"extractor output dim {d_rep}"
            )
        if self.autoencoder.output_dim != d_rep:
            raise BundleFormatError(
                f"autoencoder output dim {self.autoencoder.output_dim} != "
                f"its input dim {d_rep} (reconstruction must match)"
            )

    @property
    def d(self) -> int:
        return self.extractor.input_dim

    @property
    def d_rep(self) -> int:
        return self.extractor.output_dim


def forward(net: PiecewiseLinearNetwork, x: np.ndarray) -> np.ndarray:
    """Plain forward pass of an (n, input_dim) matrix through the layers."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != net.input_dim:
        raise DimensionError(
            f"input has {x.shape[1]} columns, network expects {net.input_dim}"
        )
    for layer in net.layers:
        if isinstance(layer, Affine):
            x = x @ layer.weight + layer.bias
        else:
            x = np.maximum(x, 0.0)
    return x


def reconstruction_errors(bundle: ModelBundle, data: DataPair) -> np.ndarray:
    """Per-row l1 reconstruction error over the stacked source+target data."""
    if data.d != bundle.d:
        raise DimensionError(
            f"data has {data.d} features, bundle expects {bundle.d}"
        )
    rep = forward(bundle.extractor, data.stacked())
    rec = forward(bundle.autoencoder, rep)
    return np.abs(rep - rec).sum(axis=1)


@dataclass(frozen=True)
class DetectionResult:
    """Full detector state, kept for the event builders.

    ``anomalous`` indexes the stacked source+target matrix and has exactly
    m = ceil(rate * n) members; ``target_anomalies`` are the target-local
    (0-based) indices of its target members; ``threshold_index`` is the
    anomalous row attaining the threshold order statistic (smallest error,
    lowest index on ties).
    """

    errors: np.ndarray
    anomalous: np.ndarray
    threshold_index: int
    target_anomalies: np.ndarray
    n_source: int


def detect_from_errors(
    errors: np.ndarray, rate: float, n_source: int
) -> DetectionResult:
    """Flag the m = ceil(rate * n) largest entries of an error vector.

    The threshold is the m-th largest error; every row at or above it is
    anomalous, with exact ties beyond m dropped lowest-index-first so
    exactly m rows are flagged. The threshold row is the flagged row with
    the smallest error (lowest index on ties).
    """
    if not 0.0 < rate < 1.0:
        raise ValueError(f"rate must lie in (0, 1), got {rate}")
    errors = np.asarray(errors, dtype=np.float64).reshape(-1)
    n = errors.size
    m = math.ceil(rate * n)
    if m >= n:
        raise ValueError(f"rate {rate} flags m={m} of n={n} rows; need m < n")
    threshold = np.sort(errors)[n - m]
    strict = np.flatnonzero(errors > threshold)
    tied = np.flatnonzero(errors == threshold)
    anomalous = np.sort(np.concatenate([strict, tied[: m - strict.size]]))
    k = int(anomalous[np.argmin(errors[anomalous])])
    target = anomalous[anomalous >= n_source] - n_source
    return DetectionResult(
        errors=errors,
        anomalous=anomalous,
        threshold_index=k,
        target_anomalies=target,
        n_source=n_source,
    )


def detect(bundle: ModelBundle, data: DataPair, rate: float = 0.05) -> DetectionResult:
    """Run the reconstruction-error detector over the stacked data."""
    return detect_from_errors(reconstruction_errors(bundle, data), rate, data.n_s)


def detect_anomalies(
    bundle: ModelBundle, data: DataPair, rate: float = 0.05
) -> np.ndarray:
    """Sorted 0-based target indices flagged as anomalous."""
    return detect(bundle, data, rate).target_anomalies


def _layer_to_json(layer: Layer) -> dict[str, Any]:
    if isinstance(layer, Affine):
        return {
            "kind": "affine",
            "weight": layer.weight.tolist(),
            "bias": layer.bias.tolist(),
        }
    return {"kind": "relu"}


def _layer_from_json(obj: Any, where: str) -> Layer:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise BundleFormatError(f"{where}: layer must be an object with a 'kind'")
    kind = obj["kind"]
    if kind == "relu":
        return ReLU()
    if kind != "affine":
        raise BundleFormatError(f"{where}: unsupported layer kind {kind!r}")
    try:
        weight = np.array(obj["weight"], dtype=np.float64)
        bias = np.array(obj["bias"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleFormatError(f"{where}: malformed affine layer ({exc})") from exc
    if weight.ndim != 2:
        raise BundleFormatError(f"{where}: weight must be a 2-d array")
    if not (np.isfinite(weight).all() and np.isfinite(bias).all()):
        raise BundleFormatError(f"{where}: non-finite weight or bias entry")
    try:
        return Affine(weight, bias)
    except DimensionError as exc:
        raise BundleFormatError(f"{where}: {exc}") from exc


def _network_from_json(layers_json: Any, name: str) -> PiecewiseLinearNetwork:
    if not isinstance(layers_json, list) or not layers_json:
        raise BundleFormatError(f"{name}: expected a non-empty layer list")
    layers = [
        _layer_from_json(obj, f"{name} layer {idx}")
        for idx, obj in enumerate(layers_json)
    ]
    first_affine = next((l for l in layers if isinstance(l, Affine)), None)
    if first_affine is None:
        raise BundleFormatError(f"{name}: needs at least one affine layer")
    try:
        return PiecewiseLinearNetwork(tuple(layers), first_affine.d_in)
    except DimensionError as exc:
        raise BundleFormatError(f"{name}: {exc}") from exc


def load_bundle(path) -> ModelBundle:
    """Read and validate a "stand-da-bundle/1" JSON document."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BundleFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise BundleFormatError(f"{path}: top level must be an object")
    version = doc.get("version")
    if version != BUNDLE_VERSION:
        raise BundleFormatError(
            f"{path}: unsupported bundle version {version!r} "
            f"(expected {BUNDLE_VERSION!r})"
        )
    extractor = _network_from_json(doc.get("extractor"), "extractor")
    autoencoder = _network_from_json(doc.get("autoencoder"), "autoencoder")
    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict):
        raise BundleFormatError(f"{path}: metadata must be an object")
    try:
        return ModelBundle(extractor, autoencoder, metadata)
    except BundleFormatError as exc:
        raise BundleFormatError(f"{path}: {exc}") from exc


def save_bundle(bundle: ModelBundle, path) -> None:
    """Write a bundle as "stand-da-bundle/1" JSON (floats at full precision)."""
    doc = {
        "version": BUNDLE_VERSION,
        "extractor": [_layer_to_json(l) for l in bundle.extractor.layers],
        "autoencoder": [_layer_to_json(l) for l in bundle.autoencoder.layers],
        "metadata": bundle.metadata,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
