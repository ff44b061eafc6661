"""Built-in all-convolutional network search space and descriptor mapping.

The space describes a linear network of ``q`` stacks. Each stack is
``n_i`` same-padded convolutions followed by one strided convolution
(``conv_out``, downsampling in place of pooling) and a dropout layer; the
network opens with a dropout and one convolution, and closes with
optional global average pooling and a dense layer sized to the class
count. One activation function and one weight-decay factor are shared by
all convolutions; the dense head has its own activation.

Per stack there are seven integer knobs (filters and kernel for the
plain and strided convolutions, the stride, the repeat count) plus its
dropout rate; with the stem filters/kernel, the shared rates, the
learning rate, two activations, and the pooling flag, three stacks give
29 parameters: 20 integers, 6 reals, 2 categorical, 1 boolean.

A configuration maps to a :class:`NetworkDescriptor`, a declarative,
canonically serialized document an evaluator turns into a trainable
model. The document format is a stable, versioned contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from . import space as sp
from .jsonutil import canonical_dumps
from .space import Configuration, ParameterSpace

DESCRIPTOR_FORMAT = "egoconf-network"
DESCRIPTOR_VERSION = 1

ACTIVATIONS = ("elu", "relu", "tanh", "selu", "sigmoid")

FILTER_RANGE = (1, 512)
KERNEL_RANGE = (1, 8)
STRIDE_RANGE = (1, 5)
REPEAT_RANGE = (1, 6)
DROPOUT_RANGE = (1e-5, 0.8)
L2_RANGE = (1e-5, 1e-2)
LR_RANGE = (1e-5, 1.0)

DEFAULT_TRAINING: dict[str, Any] = {
    "optimizer": "sgd",
    "decay": 0.0,
    "epochs": 10,
    "batch_size": 100,
    "early_stop_patience": 6,
}

_LAYER_FIELDS = {
    "dropout": {"rate"},
    "conv": {"filters", "kernel", "stride", "l2", "activation", "padding"},
    "conv_out": {"filters", "kernel", "stride", "l2", "activation", "padding"},
    "global_pooling": set(),
    "dense": {"units", "l2", "activation"},
}


class DescriptorError(ValueError):
    """Malformed network descriptor document."""


@dataclass(frozen=True)
class NetworkDescriptor:
    """Declarative layer list plus training metadata."""

    layers: tuple[Mapping[str, Any], ...]
    training: Mapping[str, Any] = field(default_factory=dict)

    def to_doc(self) -> dict[str, Any]:
        return {
            "format": DESCRIPTOR_FORMAT,
            "version": DESCRIPTOR_VERSION,
            "layers": [dict(layer) for layer in self.layers],
            "training": dict(self.training),
        }


def allcnn_space(stacks: int = 3) -> ParameterSpace:
    """The search space for a ``stacks``-stack all-convolutional network.

    Rate-like parameters (dropouts, weight decay, learning rate) span
    several decades and are log10-scaled in the encoded view.
    """
    if stacks < 1:
        raise ValueError(f"need at least one stack, got {stacks}")
    params: list[sp.ParameterSpec] = [
        sp.continuous("d0", *DROPOUT_RANGE, scale="log10"),
        sp.integer("f0", *FILTER_RANGE),
        sp.integer("k0", *KERNEL_RANGE),
    ]
    for i in range(1, stacks + 1):
        params += [
            sp.integer(f"f{i}", *FILTER_RANGE),
            sp.integer(f"k{i}", *KERNEL_RANGE),
            sp.integer(f"n{i}", *REPEAT_RANGE),
            sp.integer(f"fout{i}", *FILTER_RANGE),
            sp.integer(f"kout{i}", *KERNEL_RANGE),
            sp.integer(f"sout{i}", *STRIDE_RANGE),
            sp.continuous(f"d{i}", *DROPOUT_RANGE, scale="log10"),
        ]
    params += [
        sp.continuous("l2", *L2_RANGE, scale="log10"),
        sp.continuous("lr", *LR_RANGE, scale="log10"),
        sp.categorical("activation", ACTIVATIONS),
        sp.categorical("activation_out", ACTIVATIONS),
        sp.boolean("global_pooling"),
    ]
    return ParameterSpace(tuple(params))


def infer_stacks(config: Configuration) -> int:
    stacks = 0
    while f"n{stacks + 1}" in config:
        stacks += 1
    if stacks == 0:
        raise sp.InvalidConfigurationError(["no stack parameters (n1, n2, ...) present"])
    return stacks


def to_descriptor(
    config: Configuration,
    classes: int = 10,
    training_overrides: Mapping[str, Any] | None = None,
) -> NetworkDescriptor:
    """Expand a valid configuration into its layer-by-layer descriptor."""
    stacks = infer_stacks(config)
    space = allcnn_space(stacks)
    violations = space.validate(config)
    if violations:
        raise sp.InvalidConfigurationError(violations)

    act = config["activation"]
    l2 = float(config["l2"])

    def conv(kind: str, filters: int, kernel: int, stride: int) -> dict[str, Any]:
        return {
            "kind": kind,
            "filters": int(filters),
            "kernel": int(kernel),
            "stride": int(stride),
            "l2": l2,
            "activation": act,
            "padding": "same",
        }

    layers: list[dict[str, Any]] = [
        {"kind": "dropout", "rate": float(config["d0"])},
        conv("conv", config["f0"], config["k0"], 1),
    ]
    for i in range(1, stacks + 1):
        layers += [conv("conv", config[f"f{i}"], config[f"k{i}"], 1)
                   for _ in range(int(config[f"n{i}"]))]
        layers.append(conv("conv_out", config[f"fout{i}"], config[f"kout{i}"],
                           config[f"sout{i}"]))
        layers.append({"kind": "dropout", "rate": float(config[f"d{i}"])})
    if config["global_pooling"]:
        layers.append({"kind": "global_pooling"})
    layers.append({
        "kind": "dense",
        "units": int(classes),
        "l2": l2,
        "activation": config["activation_out"],
    })

    training = dict(DEFAULT_TRAINING)
    training["learning_rate"] = float(config["lr"])
    if training_overrides:
        training.update(training_overrides)
    return NetworkDescriptor(tuple(layers), training)


def descriptor_serialize(descriptor: NetworkDescriptor) -> str:
    """Canonical JSON: equal descriptors serialize to identical bytes."""
    return canonical_dumps(descriptor.to_doc())


def descriptor_parse(document: str | Mapping[str, Any]) -> NetworkDescriptor:
    """Inverse of :func:`descriptor_serialize`, with validation."""
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise DescriptorError(f"descriptor is not valid JSON: {exc}") from None
    else:
        doc = dict(document)
    if not isinstance(doc, dict):
        raise DescriptorError("descriptor document must be a JSON object")
    if doc.get("format", DESCRIPTOR_FORMAT) != DESCRIPTOR_FORMAT:
        raise DescriptorError(f"unknown descriptor format {doc.get('format')!r}")
    if doc.get("version") != DESCRIPTOR_VERSION:
        raise DescriptorError(
            f"descriptor version {doc.get('version')!r} unsupported, "
            f"need {DESCRIPTOR_VERSION}"
        )
    layers = []
    for i, layer in enumerate(doc.get("layers", [])):
        if not isinstance(layer, dict) or "kind" not in layer:
            raise DescriptorError(f"layer {i} has no kind: {layer!r}")
        kind = layer["kind"]
        if kind not in _LAYER_FIELDS:
            raise DescriptorError(f"layer {i} has unknown kind {kind!r}")
        missing = _LAYER_FIELDS[kind] - set(layer)
        if missing:
            raise DescriptorError(f"layer {i} ({kind}) missing fields {sorted(missing)}")
        layers.append(dict(layer))
    if not layers:
        raise DescriptorError("descriptor has no layers")
    return NetworkDescriptor(tuple(layers), dict(doc.get("training", {})))
