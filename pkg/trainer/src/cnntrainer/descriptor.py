"""Parsing and validation of network descriptor documents.

Implements the ``egoconf-network`` version-1 document format from the
optimizer's file-format documentation. This is the trainer's own reader;
the trainer talks to the optimizer only through serialized documents.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping

FORMAT = "egoconf-network"
VERSION = 1

ACTIVATIONS = ("elu", "relu", "tanh", "selu", "sigmoid")

REQUIRED_FIELDS = {
    "dropout": {"rate"},
    "conv": {"filters", "kernel", "stride", "l2", "activation"},
    "conv_out": {"filters", "kernel", "stride", "l2", "activation"},
    "global_pooling": set(),
    "dense": {"units", "l2", "activation"},
}


class DescriptorError(ValueError):
    """Document malformed or not buildable."""


@dataclass(frozen=True)
class Descriptor:
    layers: tuple[dict[str, Any], ...]
    training: dict[str, Any]

    @property
    def learning_rate(self) -> float:
        return float(self.training.get("learning_rate", 0.01))

    @property
    def decay(self) -> float:
        return float(self.training.get("decay", 0.0))

    @property
    def epochs(self) -> int:
        return int(self.training.get("epochs", 10))

    @property
    def batch_size(self) -> int:
        return int(self.training.get("batch_size", 100))

    @property
    def patience(self) -> int:
        return int(self.training.get("early_stop_patience", 6))


def parse_descriptor(document: str | Mapping[str, Any]) -> Descriptor:
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise DescriptorError(f"descriptor is not valid JSON: {exc}") from None
    else:
        doc = document
    if not isinstance(doc, Mapping):
        raise DescriptorError("descriptor must be a JSON object")
    if doc.get("format", FORMAT) != FORMAT:
        raise DescriptorError(f"unknown descriptor format {doc.get('format')!r}")
    if doc.get("version") != VERSION:
        raise DescriptorError(f"unsupported descriptor version {doc.get('version')!r}")

    raw_layers = doc.get("layers")
    if not raw_layers:
        raise DescriptorError("descriptor has no layers")
    layers: list[dict[str, Any]] = []
    for i, layer in enumerate(raw_layers):
        if not isinstance(layer, Mapping) or "kind" not in layer:
            raise DescriptorError(f"layer {i} has no kind")
        kind = layer["kind"]
        if kind not in REQUIRED_FIELDS:
            raise DescriptorError(f"layer {i} has unknown kind {kind!r}")
        missing = REQUIRED_FIELDS[kind] - set(layer)
        if missing:
            raise DescriptorError(f"layer {i} ({kind}) missing {sorted(missing)}")
        if kind in ("conv", "conv_out", "dense"):
            if layer["activation"] not in ACTIVATIONS:
                raise DescriptorError(
                    f"layer {i} has unknown activation {layer['activation']!r}"
                )
        if kind == "dropout" and not 0.0 <= float(layer["rate"]) < 1.0:
            raise DescriptorError(f"layer {i} dropout rate out of [0, 1): {layer['rate']}")
        layers.append(dict(layer))
    if layers[-1]["kind"] != "dense":
        raise DescriptorError("descriptor must end with a dense layer")
    return Descriptor(tuple(layers), dict(doc.get("training", {})))


def estimate_cost(descriptor: Descriptor, height: int, width: int,
                  channels: int) -> tuple[int, int]:
    """(parameter count, multiply-accumulates per sample) for a build plan.

    Uses the same spatial arithmetic as the builder: same padding keeps
    H x W under stride 1 and ceil-divides it under larger strides.
    """
    params = 0
    macs = 0
    h, w, c = height, width, channels
    for layer in descriptor.layers:
        kind = layer["kind"]
        if kind in ("conv", "conv_out"):
            f = int(layer["filters"])
            k = int(layer["kernel"])
            s = int(layer["stride"])
            h = -(-h // s)
            w = -(-w // s)
            params += f * (c * k * k + 1)
            macs += h * w * f * c * k * k
            c = f
        elif kind == "global_pooling":
            h = w = 1
        elif kind == "dense":
            units = int(layer["units"])
            params += units * (c * h * w + 1)
            macs += units * c * h * w
    return params, macs
