"""Torch models built layer-by-layer from descriptor documents.

Convolutions reproduce same-padding semantics with arbitrary strides
(output size ceil(input / stride), asymmetric padding when needed), so
the spatial bookkeeping matches :func:`cnntrainer.descriptor.estimate_cost`
exactly. The built module keeps a one-to-one ``stages`` list mirroring
the descriptor's layers, which tests introspect.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from .descriptor import Descriptor, DescriptorError

_ACTIVATIONS = {
    "elu": nn.ELU,
    "relu": nn.ReLU,
    "tanh": nn.Tanh,
    "selu": nn.SELU,
    "sigmoid": nn.Sigmoid,
}


class SamePadConv2d(nn.Module):
    """Conv2d with ceil(input/stride) output size via asymmetric padding."""

    def __init__(self, in_channels: int, filters: int, kernel: int, stride: int):
        super().__init__()
        self.stride = stride
        self.kernel = kernel
        self.conv = nn.Conv2d(in_channels, filters, kernel, stride=stride, padding=0)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        pad_h = max((-(-h // self.stride) - 1) * self.stride + self.kernel - h, 0)
        pad_w = max((-(-w // self.stride) - 1) * self.stride + self.kernel - w, 0)
        if pad_h or pad_w:
            x = F.pad(x, (pad_w // 2, pad_w - pad_w // 2,
                          pad_h // 2, pad_h - pad_h // 2))
        return self.conv(x)


class GlobalAveragePool(nn.Module):
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x.mean(dim=(-2, -1))


class DenseHead(nn.Module):
    """Flatten + linear + configured activation, with the pre-activation
    scores exposed: the training loss uses them directly because softmax
    cross-entropy on bounded or rectified activations starves gradients,
    and every supported activation is monotone, so class rankings (and
    accuracy) from scores and activated outputs agree."""

    def __init__(self, in_features: int, units: int, activation: str):
        super().__init__()
        self.flatten = nn.Flatten()
        self.linear = nn.Linear(in_features, units)
        self.activation = _ACTIVATIONS[activation]()

    def scores(self, x: torch.Tensor) -> torch.Tensor:
        return self.linear(self.flatten(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.activation(self.scores(x))


class DescriptorNet(nn.Module):
    """Sequential network whose stages map 1:1 onto descriptor layers."""

    def __init__(self, descriptor: Descriptor, height: int, width: int, channels: int):
        super().__init__()
        stages: list[nn.Module] = []
        kinds: list[str] = []
        h, w, c = height, width, channels
        for layer in descriptor.layers:
            kind = layer["kind"]
            if kind == "dropout":
                stages.append(nn.Dropout(float(layer["rate"])))
            elif kind in ("conv", "conv_out"):
                f = int(layer["filters"])
                k = int(layer["kernel"])
                s = int(layer["stride"])
                stages.append(nn.Sequential(
                    SamePadConv2d(c, f, k, s),
                    _ACTIVATIONS[layer["activation"]](),
                ))
                h = -(-h // s)
                w = -(-w // s)
                c = f
            elif kind == "global_pooling":
                stages.append(GlobalAveragePool())
                h = w = 1
            elif kind == "dense":
                stages.append(DenseHead(c * h * w, int(layer["units"]),
                                        layer["activation"]))
            else:
                raise DescriptorError(f"unknown layer kind {kind!r}")
            kinds.append(kind)
        self.stages = nn.ModuleList(stages)
        self.kinds = kinds
        # Glorot-uniform weights and zero biases: keeps activation variance
        # roughly constant through deep stacks, which torch's narrower
        # default initialization does not.
        for module in self.modules():
            if isinstance(module, (nn.Conv2d, nn.Linear)):
                nn.init.xavier_uniform_(module.weight)
                nn.init.zeros_(module.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for stage in self.stages:
            x = stage(x)
        return x

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        """Pre-activation class scores from the dense head."""
        for stage in self.stages[:-1]:
            x = stage(x)
        head = self.stages[-1]
        assert isinstance(head, DenseHead)
        return head.scores(x)

    def parameter_groups(self, l2: float) -> list[dict]:
        """Weight decay on conv/linear weights only, never on biases.

        Matches an explicit sum-of-squares penalty with factor ``l2``:
        decoupled-from-loss decay of ``2 * l2`` on the same parameters.
        """
        decayed, plain = [], []
        for name, p in self.named_parameters():
            (decayed if name.endswith("weight") and p.dim() > 1 else plain).append(p)
        return [
            {"params": decayed, "weight_decay": 2.0 * l2},
            {"params": plain, "weight_decay": 0.0},
        ]
