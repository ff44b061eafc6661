"""Protocol server: one evaluator process speaking egoconf-eval version 1.

Reads request lines from stdin, trains the described network, and
answers with the held-out test accuracy. All errors become ``failed``
responses with a diagnostic; the serve loop itself never crashes on a
request. Parallelism comes from the optimizer spawning several of these
processes; each handles one request at a time and may be pinned to a
device via ``--device`` or ``$CNNTRAINER_DEVICE``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

from .datasets import DatasetError, Split, load_dataset
from .descriptor import DescriptorError, parse_descriptor
from .trainer import DEFAULT_MAX_MACS, DEFAULT_MAX_PARAMS, ResourceError, train_and_score

PROTOCOL = "egoconf-eval"
VERSION = 1

DEVICE_ENV_VAR = "CNNTRAINER_DEVICE"


@dataclass(frozen=True)
class TrainerConfig:
    dataset: str = "digits"
    train_n: int | None = None
    test_n: int | None = None
    epochs: int | None = None
    batch_size: int | None = None
    patience: int | None = None
    seed: int = 0
    data_dir: str | None = None
    device: str = "cpu"
    max_params: int = DEFAULT_MAX_PARAMS
    max_macs: int = DEFAULT_MAX_MACS
    threads: int | None = None

    def __post_init__(self) -> None:
        if self.epochs is not None and self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def _respond(out, request_id: str, status: str, metric=None, **diagnostics) -> None:
    print(json.dumps({
        "type": "response",
        "id": request_id,
        "status": status,
        "metric": metric,
        "diagnostics": diagnostics,
    }, sort_keys=True), file=out, flush=True)


def handle_request(request: dict, config: TrainerConfig, split: Split) -> dict:
    """Train for one request; returns the response document fields."""
    descriptor_doc = request.get("descriptor")
    if not descriptor_doc:
        return {"status": "failed",
                "diagnostics": {"failure": "evaluator",
                                "error": "request carries no network descriptor"}}
    try:
        descriptor = parse_descriptor(descriptor_doc)
        overrides = {}
        if config.epochs is not None:
            overrides["epochs"] = config.epochs
        if config.batch_size is not None:
            overrides["batch_size"] = config.batch_size
        if config.patience is not None:
            overrides["early_stop_patience"] = config.patience
        if overrides:
            descriptor = type(descriptor)(descriptor.layers,
                                          {**descriptor.training, **overrides})
        result = train_and_score(
            descriptor, split, seed=config.seed, device=config.device,
            max_params=config.max_params, max_macs=config.max_macs,
        )
    except ResourceError as exc:
        return {"status": "failed",
                "diagnostics": {"failure": "resource", "error": str(exc)}}
    except (DescriptorError, ValueError) as exc:
        return {"status": "failed",
                "diagnostics": {"failure": "evaluator", "error": str(exc)}}
    except (RuntimeError, MemoryError) as exc:
        # torch raises RuntimeError for allocation and shape blowups
        return {"status": "failed",
                "diagnostics": {"failure": "resource", "error": str(exc)[:500]}}
    return {
        "status": "ok",
        "metric": result.accuracy,
        "diagnostics": {
            "epochs_trained": result.epochs_trained,
            "parameters": result.parameters,
            "device": config.device,
        },
    }


def serve(config: TrainerConfig, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    if config.threads:
        import torch

        torch.set_num_threads(config.threads)

    try:
        split = load_dataset(config.dataset, config.train_n, config.test_n,
                             config.seed, config.data_dir)
    except DatasetError as exc:
        print(f"cannot load dataset: {exc}", file=sys.stderr)
        return 1

    print(json.dumps({"type": "hello", "protocol": PROTOCOL, "version": VERSION}),
          file=stdout, flush=True)
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            request_id = str(request["id"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            print(f"ignoring malformed request line: {exc}", file=sys.stderr)
            continue
        fields = handle_request(request, config, split)
        _respond(stdout, request_id, fields["status"],
                 metric=fields.get("metric"), **fields.get("diagnostics", {}))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dataset", default="digits", choices=["digits", "mnist"])
    parser.add_argument("--train-n", type=int, default=None)
    parser.add_argument("--test-n", type=int, default=None)
    parser.add_argument("--epochs", type=int, default=None,
                        help="override the descriptor's epoch count")
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--patience", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--data-dir", default=None,
                        help=f"IDX file directory (default $%s or ./data)"
                             % "CNNTRAINER_DATA")
    parser.add_argument("--device", default=None)
    parser.add_argument("--max-params", type=int, default=DEFAULT_MAX_PARAMS)
    parser.add_argument("--max-macs", type=int, default=DEFAULT_MAX_MACS)
    parser.add_argument("--threads", type=int, default=None,
                        help="torch CPU thread cap")
    args = parser.parse_args(argv)
    device = args.device or os.environ.get(DEVICE_ENV_VAR, "cpu")
    config = TrainerConfig(
        dataset=args.dataset, train_n=args.train_n, test_n=args.test_n,
        epochs=args.epochs, batch_size=args.batch_size, patience=args.patience,
        seed=args.seed, data_dir=args.data_dir, device=device,
        max_params=args.max_params, max_macs=args.max_macs, threads=args.threads,
    )
    return serve(config)


if __name__ == "__main__":
    sys.exit(main())
