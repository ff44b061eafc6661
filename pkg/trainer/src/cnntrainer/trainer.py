"""Training and evaluation of descriptor-built networks.

One call trains a fresh model with plain SGD at the descriptor's
learning rate and decay, early-stops on a held-out validation slice of
the training data, restores the best-validation weights, and reports
accuracy on the disjoint test split. Runs are deterministic per
(seed, descriptor) on CPU.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import torch
from torch import nn

from .datasets import Split
from .descriptor import Descriptor, DescriptorError, estimate_cost
from .model import DescriptorNet

DEFAULT_MAX_PARAMS = 20_000_000
DEFAULT_MAX_MACS = 2_000_000_000


class ResourceError(RuntimeError):
    """Descriptor exceeds the configured size/compute budget."""


@dataclass
class TrainResult:
    accuracy: float
    epochs_trained: int
    parameters: int
    history: list[float] = field(default_factory=list)  # validation accuracy per epoch


def _descriptor_seed(seed: int, descriptor: Descriptor) -> int:
    text = repr(sorted(descriptor.training.items())) + repr(descriptor.layers)
    digest = hashlib.sha256(f"{seed}|{text}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def check_resources(descriptor: Descriptor, split: Split,
                    max_params: int = DEFAULT_MAX_PARAMS,
                    max_macs: int = DEFAULT_MAX_MACS) -> tuple[int, int]:
    channels, height, width = split.shape
    params, macs = estimate_cost(descriptor, height, width, channels)
    if params > max_params:
        raise ResourceError(f"{params} parameters exceed the cap of {max_params}")
    if macs > max_macs:
        raise ResourceError(f"{macs} MACs/sample exceed the cap of {max_macs}")
    return params, macs


def _accuracy(model, x: torch.Tensor, y: torch.Tensor, batch_size: int) -> float:
    model.eval()
    hits = 0
    with torch.no_grad():
        for start in range(0, len(x), batch_size):
            scores = model.logits(x[start:start + batch_size])
            hits += int((scores.argmax(dim=1) == y[start:start + batch_size]).sum())
    return hits / len(x)


def train_and_score(
    descriptor: Descriptor,
    split: Split,
    seed: int,
    device: str = "cpu",
    val_fraction: float = 0.15,
    max_params: int = DEFAULT_MAX_PARAMS,
    max_macs: int = DEFAULT_MAX_MACS,
) -> TrainResult:
    """Train per the descriptor's recipe; return test accuracy and stats."""
    params, _ = check_resources(descriptor, split, max_params, max_macs)
    channels, height, width = split.shape

    torch.manual_seed(_descriptor_seed(seed, descriptor))
    model = DescriptorNet(descriptor, height, width, channels).to(device)

    l2 = max((float(l.get("l2", 0.0)) for l in descriptor.layers
              if l["kind"] in ("conv", "conv_out", "dense")), default=0.0)
    optimizer = torch.optim.SGD(model.parameter_groups(l2),
                                lr=descriptor.learning_rate, momentum=0.0)
    decay = descriptor.decay
    if decay > 0:
        scheduler = torch.optim.lr_scheduler.LambdaLR(
            optimizer, lambda step: 1.0 / (1.0 + decay * step))
    else:
        scheduler = None
    loss_fn = nn.CrossEntropyLoss()

    # Validation for early stopping is a slice of the training data; the
    # reported metric uses the disjoint test split.
    n_val = max(1, int(len(split.train_x) * val_fraction))
    rng = np.random.default_rng(_descriptor_seed(seed ^ 0x5F5E1, descriptor))
    order = rng.permutation(len(split.train_x))
    val_idx, fit_idx = order[:n_val], order[n_val:]
    if len(fit_idx) == 0:
        raise DescriptorError("training subset too small to hold out validation data")

    to_t = lambda a: torch.as_tensor(a, device=device)
    fit_x, fit_y = to_t(split.train_x[fit_idx]), to_t(split.train_y[fit_idx])
    val_x, val_y = to_t(split.train_x[val_idx]), to_t(split.train_y[val_idx])
    test_x, test_y = to_t(split.test_x), to_t(split.test_y)

    batch_size = descriptor.batch_size
    shuffler = torch.Generator().manual_seed(_descriptor_seed(seed ^ 0xA11CE, descriptor))

    best_val = -math.inf
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    since_improvement = 0
    history: list[float] = []
    epochs_trained = 0

    for _ in range(descriptor.epochs):
        model.train()
        for batch_idx in torch.randperm(len(fit_x), generator=shuffler)\
                .split(batch_size):
            optimizer.zero_grad()
            loss = loss_fn(model.logits(fit_x[batch_idx]), fit_y[batch_idx])
            if not torch.isfinite(loss):
                # Diverged (bad learning rate); stop training, the model
                # as-restored still produces a valid accuracy.
                since_improvement = descriptor.patience
                break
            loss.backward()
            # Norm clipping keeps aggressive learning rates from blowing up
            # mid-epoch; configurations the optimizer proposes span five
            # decades of learning rate and divergence wastes an evaluation.
            nn.utils.clip_grad_norm_(model.parameters(), 5.0)
            optimizer.step()
            if scheduler is not None:
                scheduler.step()
        epochs_trained += 1
        val_acc = _accuracy(model, val_x, val_y, batch_size)
        history.append(val_acc)
        if val_acc > best_val:
            best_val = val_acc
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            since_improvement = 0
        else:
            since_improvement += 1
        if since_improvement >= descriptor.patience:
            break

    model.load_state_dict(best_state)
    accuracy = _accuracy(model, test_x, test_y, batch_size)
    return TrainResult(accuracy=accuracy, epochs_trained=epochs_trained,
                       parameters=params, history=history)
