"""Batch-parallel efficient global optimization over an evaluator.

One run is: evaluate a Latin hypercube initial design in batches of q,
then iterate (fit the forest surrogate on everything seen, draw q
log-normal temperatures, maximize the infill criterion once per
temperature with the evolution strategy, evaluate the q proposals
concurrently, append) until the evaluation budget is spent. Fitness is
minimized internally; higher-is-better raw metrics are negated when a
record is ingested.

Every record is flushed to a line-delimited JSON archive as soon as its
evaluation lands, and all per-iteration randomness is derived from
(master seed, iteration index) alone, so a killed run resumed from its
archive file reproduces the uninterrupted run exactly. Failed
evaluations are kept, penalized one unit above the worst fitness
observed so far, which keeps the surrogate's training set aligned with
what was actually dispatched and steers the search away from failing
regions.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import forest as forest_mod
from .evalproto import EvalRequest, Evaluator
from .infill import InfillContext, mgf_criterion, mgf_criterion_batch, sample_temperatures
from .jsonutil import canonical_dumps
from .mies import MiesParams, maximize, mutate_once
from .sampler import DesignPlan, lhs_sample
from .seeding import derive_seed
from .space import Configuration, ParameterSpace

ARCHIVE_FORMAT = "egoconf-archive"
ARCHIVE_VERSION = 1

# Mutation scales for nudging a proposal off an already-archived point.
# Deliberately much finer than the search's initial step sizes: duplicate
# proposals are usually the incumbent returned by an exploitative
# (low-temperature) search, and the nudge should stay in its basin.
DEDUP_STEP_FRACTIONS = {"continuous": 0.02, "integer": 0.2, "categorical": 0.05}


class ArchiveError(RuntimeError):
    """Archive file unreadable, corrupt, or inconsistent with its schema."""


class EvaluatorAbort(RuntimeError):
    """Evaluator transport gave out; the partial archive remains on disk."""


@dataclass(frozen=True)
class LoopConfig:
    """Budget, batching, seed, and nested surrogate/search settings."""

    max_evaluations: int
    q: int = 5
    init_batches: int = 5
    seed: int = 0
    minimize: bool = False  # True when the evaluator's raw metric is a cost
    forest: forest_mod.ForestParams = field(default_factory=forest_mod.ForestParams)
    mies: MiesParams = field(default_factory=MiesParams)

    def __post_init__(self) -> None:
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if self.init_batches < 1:
            raise ValueError(f"init_batches must be >= 1, got {self.init_batches}")
        if self.max_evaluations < self.q * self.init_batches:
            raise ValueError(
                f"max_evaluations {self.max_evaluations} below the initial design size "
                f"{self.q * self.init_batches}"
            )

    def to_dict(self) -> dict[str, Any]:
        mies = dataclasses.asdict(self.mies)
        mies["lambda"] = mies.pop("lambda_")
        mies["initial_step_fractions"] = dict(mies["initial_step_fractions"])
        return {
            "max_evaluations": self.max_evaluations,
            "q": self.q,
            "init_batches": self.init_batches,
            "seed": self.seed,
            "minimize": self.minimize,
            "forest": dataclasses.asdict(self.forest),
            "mies": mies,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "LoopConfig":
        doc = dict(doc)
        forest_doc = dict(doc.pop("forest", {}))
        mies_doc = dict(doc.pop("mies", {}))
        if "lambda" in mies_doc:
            mies_doc["lambda_"] = mies_doc.pop("lambda")
        return cls(
            forest=forest_mod.ForestParams(**forest_doc),
            mies=MiesParams(**mies_doc),
            **doc,
        )


@dataclass
class EvaluationRecord:
    """One evaluated configuration.

    ``fitness`` is the internally minimized value; ``raw_metric`` is what
    the evaluator reported (None for failures). ``wall_time`` is kept in
    memory only: persisting it would make archives of identical runs
    differ byte-for-byte.
    """

    config: Configuration
    fitness: float
    raw_metric: float | None
    iteration: int
    temperature: float | None
    failed: bool = False
    diagnostics: dict[str, Any] = field(default_factory=dict)
    wall_time: float = 0.0

    def to_doc(self, index: int) -> dict[str, Any]:
        return {
            "type": "record",
            "index": index,
            "iteration": self.iteration,
            "temperature": self.temperature,
            "config": self.config,
            "fitness": self.fitness,
            "raw_metric": self.raw_metric,
            "failed": self.failed,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "EvaluationRecord":
        return cls(
            config=doc["config"],
            fitness=float(doc["fitness"]),
            raw_metric=None if doc.get("raw_metric") is None else float(doc["raw_metric"]),
            iteration=int(doc["iteration"]),
            temperature=None if doc.get("temperature") is None else float(doc["temperature"]),
            failed=bool(doc.get("failed", False)),
            diagnostics=dict(doc.get("diagnostics") or {}),
        )


class Archive:
    """Ordered, append-only evaluation ledger bound to one space."""

    def __init__(self, space: ParameterSpace, records: Sequence[EvaluationRecord] = ()):
        self.space = space
        self.records: list[EvaluationRecord] = list(records)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: EvaluationRecord) -> None:
        self.records.append(record)

    def y_min(self) -> float | None:
        """Best (minimal) fitness over non-failed records, None if there is none."""
        values = [r.fitness for r in self.records if not r.failed]
        return min(values) if values else None

    def best_record(self) -> EvaluationRecord | None:
        """Earliest record achieving y_min; falls back to all records if all failed."""
        pool = [r for r in self.records if not r.failed] or self.records
        if not pool:
            return None
        return min(pool, key=lambda r: r.fitness)

    def worst_fitness(self) -> float:
        values = [r.fitness for r in self.records if not r.failed]
        return max(values) if values else 0.0


class _ArchiveWriter:
    def __init__(self, path: str | Path, append: bool):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a" if append else "w", encoding="utf-8", newline="\n")

    def write_header(self, header: dict[str, Any]) -> None:
        self._write_line(header)

    def append_record(self, record: EvaluationRecord, index: int) -> None:
        self._write_line(record.to_doc(index))

    def _write_line(self, doc: dict[str, Any]) -> None:
        self._fh.write(canonical_dumps(doc) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def _archive_header(space: ParameterSpace, cfg: LoopConfig,
                    manifest: dict[str, Any] | None) -> dict[str, Any]:
    return {
        "type": "header",
        "format": ARCHIVE_FORMAT,
        "version": ARCHIVE_VERSION,
        "space": space.to_schema(),
        "loop": cfg.to_dict(),
        "manifest": manifest,
    }


def load_archive(path: str | Path) -> tuple[dict[str, Any], ParameterSpace,
                                            LoopConfig, list[EvaluationRecord]]:
    """Parse an archive file, validating structure and schema consistency.

    Corruption raises :class:`ArchiveError` naming the last record that
    was still valid.
    """
    path = Path(path)
    if not path.exists():
        raise ArchiveError(f"archive not found: {path}")
    records: list[EvaluationRecord] = []
    header: dict[str, Any] | None = None
    space: ParameterSpace | None = None
    cfg: LoopConfig | None = None

    def fail(line_no: int, why: str) -> ArchiveError:
        last = f"record {len(records) - 1}" if records else "the header" if header else "nothing"
        return ArchiveError(
            f"{path}: corrupt at line {line_no} ({why}); last valid entry: {last}"
        )

    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise fail(line_no, f"not JSON: {exc}") from None
            if line_no == 1:
                if not isinstance(doc, dict) or doc.get("type") != "header":
                    raise fail(line_no, "first line is not an archive header")
                if doc.get("format") != ARCHIVE_FORMAT:
                    raise fail(line_no, f"unknown archive format {doc.get('format')!r}")
                header = doc
                try:
                    space = ParameterSpace.from_schema(doc["space"])
                    cfg = LoopConfig.from_dict(doc["loop"])
                except (KeyError, ValueError, TypeError) as exc:
                    raise fail(line_no, f"bad header: {exc}") from None
                continue
            if header is None:
                raise fail(line_no, "records before header")
            try:
                record = EvaluationRecord.from_doc(doc)
                index = int(doc["index"])
            except (KeyError, ValueError, TypeError) as exc:
                raise fail(line_no, f"bad record: {exc}") from None
            if index != len(records):
                raise fail(line_no, f"record index {index}, expected {len(records)}")
            violations = space.validate(record.config)
            if violations:
                raise ArchiveError(
                    f"{path}: record {index} does not match the embedded space schema: "
                    + "; ".join(violations)
                )
            records.append(record)
    if header is None or space is None or cfg is None:
        raise ArchiveError(f"{path}: empty archive, no header line")
    return header, space, cfg, records


def propose_batch(
    archive: Archive,
    cfg: LoopConfig,
    iteration_seed: int,
    count: int | None = None,
) -> list[tuple[Configuration, float]]:
    """Fit the surrogate on the archive and return q (config, temperature) pairs.

    The i-th configuration maximizes the infill criterion at the i-th
    sampled temperature under the inner-search budget. Proposals equal to
    an archived configuration are perturbed by one mutation step. The
    per-temperature searches run concurrently; their seeds derive from
    ``iteration_seed`` and the proposal index, so the result does not
    depend on scheduling.
    """
    if len(archive) == 0:
        raise ValueError("cannot propose from an empty archive")
    count = cfg.q if count is None else count
    space = archive.space

    X = np.stack([space.encode(r.config) for r in archive.records])
    Y = np.array([r.fitness for r in archive.records])
    # The infill criterion is not scale-invariant: its exponential couples
    # temperature with the raw fitness scale and is calibrated for values
    # of order one. Fitting the surrogate on standardized fitness (and
    # transforming y_min identically) keeps the exploit/explore balance
    # independent of the objective's units; the proposal argmax is what
    # matters, so no back-transform is needed.
    shift = float(np.mean(Y))
    scale = float(np.std(Y))
    if scale == 0.0 or not math.isfinite(scale):
        scale = 1.0
    surrogate = forest_mod.fit(
        X, (Y - shift) / scale,
        dataclasses.replace(cfg.forest, seed=derive_seed(iteration_seed, "forest",
                                                         cfg.forest.seed)),
    )

    temperatures = sample_temperatures(cfg.q, derive_seed(iteration_seed, "temperatures"))
    temperatures = temperatures[:count]
    y_min = archive.y_min()
    if y_min is None:
        y_min = min(r.fitness for r in archive.records)
    y_min = (y_min - shift) / scale
    best = archive.best_record()
    incumbent = dict(best.config) if best is not None else None
    archived = {_config_key(r.config) for r in archive.records}

    def search(i: int) -> Configuration:
        ctx = InfillContext(y_min=y_min, temperature=temperatures[i])

        def objective(c: Configuration) -> float:
            return mgf_criterion(surrogate.predict(space.encode(c)), ctx)

        def batch_objective(cs: Sequence[Configuration]) -> Sequence[float]:
            means, variances = surrogate.predict_batch(
                np.stack([space.encode(c) for c in cs])
            )
            return mgf_criterion_batch(means, variances, ctx)

        result = maximize(
            space,
            objective,
            dataclasses.replace(cfg.mies, seed=derive_seed(iteration_seed, "mies", i,
                                                           cfg.mies.seed)),
            incumbent=incumbent,
            batch_objective=batch_objective,
        )
        candidate = result.best_config
        if _config_key(candidate) in archived:
            candidate = mutate_once(space, candidate, derive_seed(iteration_seed, "dedup", i),
                                    DEDUP_STEP_FRACTIONS)
        return candidate

    if count == 1:
        proposals = [search(0)]
    else:
        with ThreadPoolExecutor(max_workers=count) as pool:
            proposals = list(pool.map(search, range(count)))
    return list(zip(proposals, temperatures))


def run(
    space: ParameterSpace,
    evaluator: Evaluator,
    cfg: LoopConfig,
    *,
    archive_path: str | Path,
    descriptor_fn: Callable[[Configuration], dict[str, Any]] | None = None,
    manifest: dict[str, Any] | None = None,
    progress: Callable[[int, Archive], None] | None = None,
) -> Archive:
    """Execute a fresh run, persisting every record to ``archive_path``."""
    archive = Archive(space)
    writer = _ArchiveWriter(archive_path, append=False)
    try:
        writer.write_header(_archive_header(space, cfg, manifest))
        return _execute(space, evaluator, cfg, archive, writer, descriptor_fn, progress)
    finally:
        writer.close()


def resume(
    archive_path: str | Path,
    evaluator: Evaluator,
    *,
    descriptor_fn: Callable[[Configuration], dict[str, Any]] | None = None,
    progress: Callable[[int, Archive], None] | None = None,
) -> Archive:
    """Continue an interrupted run from its archive file.

    Already-recorded evaluations are never redone; a completed archive is
    returned unchanged. The continuation reproduces exactly what the
    uninterrupted run would have evaluated.
    """
    _, space, cfg, records = load_archive(archive_path)
    archive = Archive(space, records)
    if len(archive) >= cfg.max_evaluations:
        return archive
    writer = _ArchiveWriter(archive_path, append=True)
    try:
        return _execute(space, evaluator, cfg, archive, writer, descriptor_fn, progress)
    finally:
        writer.close()


def _execute(
    space: ParameterSpace,
    evaluator: Evaluator,
    cfg: LoopConfig,
    archive: Archive,
    writer: _ArchiveWriter,
    descriptor_fn: Callable[[Configuration], dict[str, Any]] | None,
    progress: Callable[[int, Archive], None] | None,
) -> Archive:
    init_total = min(cfg.q * cfg.init_batches, cfg.max_evaluations)
    init_design: list[Configuration] | None = None

    while len(archive) < init_total:
        if init_design is None:
            init_design = lhs_sample(
                space, DesignPlan(cfg.q * cfg.init_batches, derive_seed(cfg.seed, "init-design"))
            )
        start = len(archive)
        iteration = start // cfg.q
        count = min(cfg.q - start % cfg.q, init_total - start)
        batch = [(init_design[start + i], None) for i in range(count)]
        _evaluate_and_append(evaluator, space, cfg, archive, writer, batch,
                             iteration, descriptor_fn)
        if progress is not None and len(archive) % cfg.q == 0:
            progress(iteration, archive)

    while len(archive) < cfg.max_evaluations:
        start = len(archive)
        offset = (start - init_total) % cfg.q
        iter_start = start - offset
        iteration = cfg.init_batches + (iter_start - init_total) // cfg.q
        full_count = min(cfg.q, cfg.max_evaluations - iter_start)
        prefix = Archive(space, archive.records[:iter_start])
        proposals = propose_batch(
            prefix, cfg, derive_seed(cfg.seed, "iteration", iteration), count=full_count
        )
        _evaluate_and_append(evaluator, space, cfg, archive, writer, proposals[offset:],
                             iteration, descriptor_fn)
        if progress is not None:
            progress(iteration, archive)

    return archive


def _evaluate_and_append(
    evaluator: Evaluator,
    space: ParameterSpace,
    cfg: LoopConfig,
    archive: Archive,
    writer: _ArchiveWriter,
    batch: Sequence[tuple[Configuration, float | None]],
    iteration: int,
    descriptor_fn: Callable[[Configuration], dict[str, Any]] | None,
) -> None:
    requests = []
    for i, (config, _) in enumerate(batch):
        violations = space.validate(config)
        if violations:
            raise RuntimeError(f"internal error: invalid proposal {config!r}: {violations}")
        requests.append(EvalRequest(
            id=f"e{len(archive) + i:06d}",
            config=config,
            descriptor=descriptor_fn(config) if descriptor_fn is not None else None,
        ))

    started = time.monotonic()
    responses = evaluator.evaluate_many(requests)
    elapsed = time.monotonic() - started

    for (config, temperature), response in zip(batch, responses):
        if response.status == "ok":
            raw = float(response.metric)  # finite by EvalResponse contract
            fitness = raw if cfg.minimize else -raw
            record = EvaluationRecord(
                config=config, fitness=fitness, raw_metric=raw, iteration=iteration,
                temperature=temperature, failed=False,
                diagnostics=response.diagnostics, wall_time=elapsed,
            )
        else:
            if response.failure_kind == "transport":
                raise EvaluatorAbort(
                    f"evaluator transport failed for request {response.id}: "
                    f"{response.diagnostics.get('error', 'unknown')} "
                    f"(partial archive kept at {writer.path})"
                )
            record = EvaluationRecord(
                config=config, fitness=archive.worst_fitness() + 1.0, raw_metric=None,
                iteration=iteration, temperature=temperature, failed=True,
                diagnostics=response.diagnostics, wall_time=elapsed,
            )
        writer.append_record(record, len(archive))
        archive.append(record)


def _config_key(config: Configuration) -> tuple:
    return tuple(sorted(config.items()))
