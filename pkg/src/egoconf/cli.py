"""Command-line entry points: run, resume, report, benchmark.

A run is described by a single JSON manifest::

    {
      "space": "allcnn:q=3",              // or a space schema file path
      "evaluator": {"command": ["python", "-m", "egoconf.evalstub",
                                "--mode", "hash"]},
      // or: "evaluator": {"benchmark": "mixed_quadratic"},
      "loop": {"max_evaluations": 100, "q": 5, "init_batches": 5, "seed": 1},
      "output": "runs/archive.jsonl",
      "slots": 5,              // optional, default $EGOCONF_SLOTS or q
      "deadline": 600,         // optional per-evaluation seconds
      "classes": 10            // class count for all-CNN descriptors
    }

The manifest is embedded in the archive header, so ``resume`` needs only
the archive path. ``report`` turns an archive into a plotting-friendly
CSV trace with a trailing 20-point moving average of the raw metric, and
``benchmark`` runs uniform random search against a built-in objective as
a quick baseline.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Callable

from . import allcnn, loop as loop_mod
from .benchmarks import benchmark_names, benchmark_space, builtin_benchmark
from .evalproto import (
    BenchmarkEvaluator,
    Evaluator,
    EvaluatorStartupError,
    SubprocessEvaluator,
)
from .loop import ArchiveError, EvaluatorAbort, LoopConfig
from .sampler import uniform_sample
from .space import Configuration, ParameterSpace, SpaceError

SLOTS_ENV_VAR = "EGOCONF_SLOTS"

MOVING_AVERAGE_WINDOW = 20


class ManifestError(ValueError):
    """Manifest invalid or internally inconsistent."""


def load_manifest(path: str | Path) -> dict[str, Any]:
    try:
        manifest = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from None
    if not isinstance(manifest, dict):
        raise ManifestError("manifest must be a JSON object")
    for key in ("space", "evaluator", "loop", "output"):
        if key not in manifest:
            raise ManifestError(f"manifest is missing {key!r}")
    return manifest


def resolve_space(spec: str) -> ParameterSpace:
    """A builtin name like ``allcnn:q=3`` or a schema file path."""
    if spec == "allcnn" or spec.startswith("allcnn:"):
        stacks = 3
        if ":" in spec:
            option = spec.split(":", 1)[1]
            if not option.startswith("q="):
                raise ManifestError(f"bad all-CNN space spec {spec!r}, expected allcnn:q=N")
            try:
                stacks = int(option[2:])
            except ValueError:
                raise ManifestError(f"bad stack count in {spec!r}") from None
        return allcnn.allcnn_space(stacks)
    try:
        return ParameterSpace.load(spec)
    except (OSError, SpaceError) as exc:
        raise ManifestError(f"cannot load space schema {spec!r}: {exc}") from None


def build_evaluator(manifest: dict[str, Any]) -> Evaluator:
    evaluator = manifest["evaluator"]
    if not isinstance(evaluator, dict):
        raise ManifestError("'evaluator' must be an object")
    sources = [k for k in ("command", "benchmark") if k in evaluator]
    if len(sources) != 1:
        raise ManifestError(
            "evaluator needs exactly one of 'command' or 'benchmark', "
            f"got {sources or 'neither'}"
        )
    if "benchmark" in evaluator:
        name = evaluator["benchmark"]
        if name.partition(":")[0] not in benchmark_names():
            raise ManifestError(f"unknown benchmark {name!r}; known: {benchmark_names()}")
        return BenchmarkEvaluator(name)
    command = evaluator["command"]
    if not isinstance(command, list) or not all(isinstance(c, str) for c in command):
        raise ManifestError("'evaluator.command' must be a list of strings")
    deadline = manifest.get("deadline")
    return SubprocessEvaluator(
        command,
        slots=resolve_slots(manifest),
        deadline=float(deadline) if deadline is not None else None,
    )


def resolve_slots(manifest: dict[str, Any]) -> int:
    """Parallel evaluator slots: manifest over $EGOCONF_SLOTS over loop q."""
    if "slots" in manifest:
        return int(manifest["slots"])
    if SLOTS_ENV_VAR in os.environ:
        return int(os.environ[SLOTS_ENV_VAR])
    return int((manifest.get("loop") or {}).get("q", 5))


def build_descriptor_fn(
    manifest: dict[str, Any]
) -> Callable[[Configuration], dict[str, Any]] | None:
    spec = manifest["space"]
    if not (spec == "allcnn" or str(spec).startswith("allcnn:")):
        return None
    classes = int(manifest.get("classes", 10))
    overrides = manifest.get("descriptor_training") or {}

    def descriptor_fn(config: Configuration) -> dict[str, Any]:
        return allcnn.to_descriptor(config, classes, overrides).to_doc()

    return descriptor_fn


def _loop_config(manifest: dict[str, Any]) -> LoopConfig:
    try:
        return LoopConfig.from_dict(manifest["loop"])
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"bad loop config: {exc}") from None


def _progress_printer(cfg: LoopConfig):
    def progress(iteration: int, archive: loop_mod.Archive) -> None:
        best = archive.best_record()
        if best is None:
            return
        raw = "n/a" if best.raw_metric is None else f"{best.raw_metric:.6g}"
        print(
            f"iteration {iteration:3d}  evaluations={len(archive):4d}  "
            f"best_fitness={best.fitness:.6g}  best_raw={raw}",
            flush=True,
        )

    return progress


def cmd_run(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    space = resolve_space(manifest["space"])
    cfg = _loop_config(manifest)
    descriptor_fn = build_descriptor_fn(manifest)
    evaluator = build_evaluator(manifest)  # spawns before the archive exists
    output = manifest["output"]
    try:
        archive = loop_mod.run(
            space, evaluator, cfg,
            archive_path=output,
            descriptor_fn=descriptor_fn,
            manifest=manifest,
            progress=_progress_printer(cfg),
        )
    except EvaluatorAbort as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 3
    finally:
        evaluator.close()
    best = archive.best_record()
    print(f"done: {len(archive)} evaluations, best fitness {best.fitness:.6g}, "
          f"archive {output}")
    return 0


def cmd_resume(args: argparse.Namespace) -> int:
    header, _, cfg, _ = loop_mod.load_archive(args.archive)
    manifest = header.get("manifest")
    if not manifest:
        print("archive header carries no manifest; cannot rebuild the evaluator",
              file=sys.stderr)
        return 2
    evaluator = build_evaluator(manifest)
    descriptor_fn = build_descriptor_fn(manifest)
    try:
        archive = loop_mod.resume(
            args.archive, evaluator,
            descriptor_fn=descriptor_fn,
            progress=_progress_printer(cfg),
        )
    except EvaluatorAbort as exc:
        print(f"resume aborted: {exc}", file=sys.stderr)
        return 3
    finally:
        evaluator.close()
    best = archive.best_record()
    print(f"done: {len(archive)} evaluations, best fitness {best.fitness:.6g}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    _, _, _, records = loop_mod.load_archive(args.archive)
    if not records:
        print(f"archive {args.archive} holds no records", file=sys.stderr)
        return 2

    rows = []
    best_fitness = math.inf
    window: list[float | None] = []
    for index, record in enumerate(records):
        if not record.failed and record.fitness < best_fitness:
            best_fitness = record.fitness
        window.append(record.raw_metric)
        if len(window) > MOVING_AVERAGE_WINDOW:
            window.pop(0)
        if len(window) == MOVING_AVERAGE_WINDOW:
            present = [v for v in window if v is not None]
            moving = f"{sum(present) / len(present):.10g}" if present else ""
        else:
            moving = ""
        rows.append({
            "index": index,
            "iteration": record.iteration,
            "temperature": "" if record.temperature is None else f"{record.temperature:.10g}",
            "failed": int(record.failed),
            "raw_metric": "" if record.raw_metric is None else f"{record.raw_metric:.10g}",
            "fitness": f"{record.fitness:.10g}",
            "best_fitness": f"{best_fitness:.10g}" if math.isfinite(best_fitness) else "",
            f"moving_avg_raw_{MOVING_AVERAGE_WINDOW}": moving,
        })

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)

    best = min((r for r in records if not r.failed), key=lambda r: r.fitness,
               default=records[0])
    print(json.dumps({
        "records": len(records),
        "best_fitness": best.fitness,
        "best_raw_metric": best.raw_metric,
        "best_config": best.config,
        "csv": str(out_path),
    }, indent=2, sort_keys=True))
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    try:
        space = benchmark_space(args.name)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    configs = uniform_sample(space, args.trials, seed=args.seed)
    values = [builtin_benchmark(args.name, c) for c in configs]
    best = max(range(len(values)), key=values.__getitem__)
    print(json.dumps({
        "benchmark": args.name,
        "trials": args.trials,
        "seed": args.seed,
        "best_metric": values[best],
        "best_config": configs[best],
        "mean_metric": sum(values) / len(values),
        "worst_metric": min(values),
    }, indent=2, sort_keys=True))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="egoconf",
        description="Batch-parallel global optimization for mixed parameter spaces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run described by a manifest")
    p_run.add_argument("--manifest", required=True)
    p_run.set_defaults(fn=cmd_run)

    p_resume = sub.add_parser("resume", help="continue an interrupted run")
    p_resume.add_argument("--archive", required=True)
    p_resume.set_defaults(fn=cmd_resume)

    p_report = sub.add_parser("report", help="summarize an archive as CSV + JSON")
    p_report.add_argument("--archive", required=True)
    p_report.add_argument("--out", required=True)
    p_report.set_defaults(fn=cmd_report)

    p_bench = sub.add_parser("benchmark", help="random-search a built-in benchmark")
    p_bench.add_argument("--name", required=True,
                         help=f"one of {', '.join(benchmark_names())}")
    p_bench.add_argument("--trials", type=int, default=100)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.set_defaults(fn=cmd_benchmark)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ManifestError, ArchiveError, SpaceError) as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except EvaluatorStartupError as exc:
        print(str(exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
