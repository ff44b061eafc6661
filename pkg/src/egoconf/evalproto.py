"""Language-neutral evaluator contract over child-process standard I/O.

An evaluator is any program that, when spawned, prints one hello line

    {"protocol": "egoconf-eval", "type": "hello", "version": 1}

and then answers each request line on stdin with one response line on
stdout. Requests and responses are single-line JSON documents::

    {"type": "request", "id": "...", "config": {...},
     "descriptor": {...} | null, "deadline": seconds | null}

    {"type": "response", "id": "...", "status": "ok" | "failed",
     "metric": number | null, "diagnostics": {...}}

``metric`` is the raw, higher-is-better measurement (for instance test
accuracy); an ``ok`` status requires a finite metric. Responses are
matched to requests by ``id``, so pipelined evaluators may answer out of
order. The full document with worked examples lives in docs/protocol.md
and must stay in sync with this module.

The client side here keeps one child process per concurrency slot,
reuses it across iterations, enforces per-request deadlines by
terminating the child, and retries transport failures (dead child,
malformed line) up to 3 attempts before giving up with a ``failed``
response whose diagnostics carry ``{"failure": "transport"}``.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

from .benchmarks import builtin_benchmark
from .jsonutil import canonical_dumps
from .space import Configuration

PROTOCOL_NAME = "egoconf-eval"
PROTOCOL_VERSION = 1

TRANSPORT_ATTEMPTS = 3


class EvaluatorStartupError(RuntimeError):
    """Evaluator process could not be spawned or did not say hello."""


@dataclass(frozen=True)
class EvalRequest:
    id: str
    config: Configuration
    descriptor: dict[str, Any] | None = None
    deadline: float | None = None

    def to_line(self) -> str:
        return canonical_dumps({
            "type": "request",
            "id": self.id,
            "config": self.config,
            "descriptor": self.descriptor,
            "deadline": self.deadline,
        })


@dataclass(frozen=True)
class EvalResponse:
    id: str
    status: str
    metric: float | None = None
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.status not in ("ok", "failed"):
            raise ValueError(f"status must be 'ok' or 'failed', got {self.status!r}")
        if self.status == "ok" and (self.metric is None or not math.isfinite(self.metric)):
            raise ValueError(f"ok response requires a finite metric, got {self.metric!r}")

    @property
    def failure_kind(self) -> str | None:
        return self.diagnostics.get("failure") if self.status == "failed" else None

    @classmethod
    def from_line(cls, line: str) -> "EvalResponse":
        doc = json.loads(line)
        if not isinstance(doc, dict) or doc.get("type") != "response":
            raise ValueError(f"not a response line: {line!r}")
        metric = doc.get("metric")
        return cls(
            id=str(doc["id"]),
            status=doc["status"],
            metric=float(metric) if metric is not None else None,
            diagnostics=dict(doc.get("diagnostics") or {}),
        )


def hello_line() -> str:
    return canonical_dumps({"type": "hello", "protocol": PROTOCOL_NAME,
                            "version": PROTOCOL_VERSION})


class Evaluator:
    """Interface the run loop talks to; see the subclasses below."""

    def evaluate(self, request: EvalRequest) -> EvalResponse:
        raise NotImplementedError

    def evaluate_many(self, requests: Sequence[EvalRequest]) -> list[EvalResponse]:
        """Evaluate concurrently, preserving request order in the result."""
        if len(requests) <= 1:
            return [self.evaluate(r) for r in requests]
        with ThreadPoolExecutor(max_workers=len(requests)) as pool:
            return list(pool.map(self.evaluate, requests))

    def close(self) -> None:
        pass

    def __enter__(self) -> "Evaluator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class BenchmarkEvaluator(Evaluator):
    """In-process evaluator backed by a built-in synthetic benchmark."""

    def __init__(self, name: str):
        self.name = name

    def evaluate(self, request: EvalRequest) -> EvalResponse:
        try:
            metric = builtin_benchmark(self.name, request.config)
        except ValueError as exc:
            return EvalResponse(request.id, "failed",
                                diagnostics={"failure": "evaluator", "error": str(exc)})
        return EvalResponse(request.id, "ok", metric=metric)


class _Child:
    """One evaluator process plus a reader thread feeding a line queue."""

    def __init__(self, command: Sequence[str], startup_timeout: float):
        try:
            self.proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise EvaluatorStartupError(f"cannot start evaluator {command!r}: {exc}") from exc
        self.lines: queue.Queue[str | None] = queue.Queue()
        self.pending: dict[str, EvalResponse] = {}
        self.reader = threading.Thread(target=self._pump, daemon=True)
        self.reader.start()
        self._handshake(startup_timeout, command)

    def _pump(self) -> None:
        assert self.proc.stdout is not None
        for line in self.proc.stdout:
            self.lines.put(line)
        self.lines.put(None)  # EOF marker

    def _handshake(self, timeout: float, command: Sequence[str]) -> None:
        try:
            line = self._next_line(timeout)
        except TimeoutError:
            self.kill()
            raise EvaluatorStartupError(
                f"evaluator {command!r} sent no hello within {timeout}s"
            ) from None
        if line is None:
            self.kill()
            raise EvaluatorStartupError(f"evaluator {command!r} exited before hello")
        try:
            doc = json.loads(line)
            ok = doc.get("type") == "hello" and doc.get("protocol") == PROTOCOL_NAME
            version = doc.get("version")
        except (json.JSONDecodeError, AttributeError):
            ok, version = False, None
        if not ok:
            self.kill()
            raise EvaluatorStartupError(f"evaluator {command!r} sent no valid hello: {line!r}")
        if version != PROTOCOL_VERSION:
            self.kill()
            raise EvaluatorStartupError(
                f"evaluator speaks protocol version {version!r}, need {PROTOCOL_VERSION}"
            )

    def _next_line(self, timeout: float | None) -> str | None:
        """Next stdout line, or None on EOF/timeout expiry (timeout -> TimeoutError)."""
        try:
            line = self.lines.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError
        return line

    def alive(self) -> bool:
        return self.proc.poll() is None

    def send(self, text: str) -> None:
        assert self.proc.stdin is not None
        self.proc.stdin.write(text + "\n")
        self.proc.stdin.flush()

    def kill(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


class SubprocessEvaluator(Evaluator):
    """Pool of evaluator child processes, one per concurrency slot."""

    def __init__(
        self,
        command: Sequence[str],
        slots: int = 1,
        deadline: float | None = None,
        startup_timeout: float = 60.0,
    ):
        if slots < 1:
            raise ValueError(f"need at least one slot, got {slots}")
        self.command = list(command)
        self.deadline = deadline
        self.startup_timeout = startup_timeout
        self._slots: queue.Queue[_Child] = queue.Queue()
        self._children: list[_Child] = []
        self._lock = threading.Lock()
        # Spawn eagerly so a missing or broken evaluator fails the run
        # before any archive state is created.
        for _ in range(slots):
            self._add_child()

    def _add_child(self) -> _Child:
        child = _Child(self.command, self.startup_timeout)
        with self._lock:
            self._children.append(child)
        self._slots.put(child)
        return child

    def _replace(self, child: _Child) -> _Child:
        child.kill()
        with self._lock:
            if child in self._children:
                self._children.remove(child)
        replacement = _Child(self.command, self.startup_timeout)
        with self._lock:
            self._children.append(replacement)
        return replacement

    def evaluate(self, request: EvalRequest) -> EvalResponse:
        child = self._slots.get()
        try:
            child, response = self._dispatch(child, request)
            return response
        finally:
            self._slots.put(child)

    def _dispatch(self, child: _Child, request: EvalRequest) -> tuple[_Child, EvalResponse]:
        deadline = request.deadline if request.deadline is not None else self.deadline
        last_error = "unknown"
        for attempt in range(TRANSPORT_ATTEMPTS):
            if attempt > 0 or not child.alive():
                try:
                    child = self._replace(child)
                except EvaluatorStartupError as exc:
                    last_error = str(exc)
                    continue
            try:
                child.send(request.to_line())
            except (OSError, ValueError) as exc:
                last_error = f"write failed: {exc}"
                continue
            try:
                response = self._await_response(child, request.id, deadline)
            except TimeoutError:
                child = self._replace(child)
                return child, EvalResponse(
                    request.id, "failed",
                    diagnostics={"failure": "deadline", "deadline": deadline},
                )
            except _TransportError as exc:
                last_error = str(exc)
                continue
            return child, response
        return child, EvalResponse(
            request.id, "failed",
            diagnostics={"failure": "transport", "error": last_error,
                         "attempts": TRANSPORT_ATTEMPTS},
        )

    def _await_response(self, child: _Child, request_id: str,
                        deadline: float | None) -> EvalResponse:
        if request_id in child.pending:
            return child.pending.pop(request_id)
        limit = time.monotonic() + deadline if deadline is not None else None
        while True:
            timeout = None if limit is None else max(0.0, limit - time.monotonic())
            line = child._next_line(timeout)  # raises TimeoutError on expiry
            if line is None:
                raise _TransportError("evaluator process closed its output")
            try:
                response = EvalResponse.from_line(line)
            except (ValueError, KeyError, TypeError) as exc:
                raise _TransportError(f"malformed response line {line!r}: {exc}")
            if response.id == request_id:
                return response
            child.pending[response.id] = response  # pipelined response for another id

    def close(self) -> None:
        with self._lock:
            children = list(self._children)
            self._children.clear()
        for child in children:
            child.kill()


class _TransportError(RuntimeError):
    pass
