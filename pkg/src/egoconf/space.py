"""Heterogeneous parameter spaces and their numeric encoding.

A :class:`ParameterSpace` is an ordered list of typed parameters
(continuous, integer, categorical, boolean). Configurations are plain
``name -> value`` dicts. The space validates configurations and maps them
to fixed-length real vectors: one coordinate per parameter, with
categoricals as level indices and log-scaled continuous parameters mapped
through log10. Surrogates and the inner evolution strategy both operate
on this encoded view.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np

Configuration = dict[str, Any]

KINDS = ("continuous", "integer", "categorical", "boolean")

SCHEMA_FORMAT = "egoconf-space"
SCHEMA_VERSION = 1


class SpaceError(ValueError):
    """Malformed parameter specification or space schema."""


class InvalidConfigurationError(ValueError):
    """Configuration rejected; ``violations`` lists every failed constraint."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class DecodeRangeError(ValueError):
    """Encoded coordinate lies too far outside its parameter's range."""


@dataclass(frozen=True)
class ParameterSpec:
    """One typed dimension of a search space.

    ``bounds`` is an inclusive ``(low, high)`` pair for continuous and
    integer parameters; ``levels`` is the level tuple for categoricals.
    ``scale`` applies to continuous parameters only: ``"log10"`` makes the
    encoded coordinate log10(value), which is appropriate for rate-like
    ranges spanning several decades.
    """

    name: str
    kind: str
    bounds: tuple[float, float] | None = None
    levels: tuple[Any, ...] | None = None
    scale: str = "linear"

    def __post_init__(self) -> None:
        if not self.name or not isinstance(self.name, str):
            raise SpaceError(f"parameter name must be a non-empty string, got {self.name!r}")
        if self.kind not in KINDS:
            raise SpaceError(f"unknown parameter kind {self.kind!r} for {self.name!r}")
        if self.kind in ("continuous", "integer"):
            if self.bounds is None or len(self.bounds) != 2:
                raise SpaceError(f"{self.name}: bounds [low, high] required for {self.kind}")
            low, high = self.bounds
            if not (math.isfinite(low) and math.isfinite(high)):
                raise SpaceError(f"{self.name}: bounds must be finite")
            if self.kind == "continuous" and not low < high:
                raise SpaceError(f"{self.name}: continuous bounds need low < high")
            if self.kind == "integer":
                if not low <= high:
                    raise SpaceError(f"{self.name}: integer bounds need low <= high")
                if int(low) != low or int(high) != high:
                    raise SpaceError(f"{self.name}: integer bounds must be whole numbers")
            if self.scale not in ("linear", "log10"):
                raise SpaceError(f"{self.name}: scale must be 'linear' or 'log10'")
            if self.scale == "log10":
                if self.kind != "continuous":
                    raise SpaceError(f"{self.name}: log10 scale applies to continuous only")
                if low <= 0:
                    raise SpaceError(f"{self.name}: log10 scale requires low > 0")
        elif self.kind == "categorical":
            if self.levels is None or len(self.levels) < 2:
                raise SpaceError(f"{self.name}: categorical needs at least 2 levels")
            if len(set(self.levels)) != len(self.levels):
                raise SpaceError(f"{self.name}: categorical levels must be distinct")
        elif self.kind == "boolean":
            if self.bounds is not None or self.levels is not None:
                raise SpaceError(f"{self.name}: boolean takes no bounds or levels")

    # Encoded-space range: the interval the numeric coordinate lives in.
    def encoded_bounds(self) -> tuple[float, float]:
        if self.kind == "continuous":
            low, high = self.bounds  # type: ignore[misc]
            if self.scale == "log10":
                return (math.log10(low), math.log10(high))
            return (float(low), float(high))
        if self.kind == "integer":
            low, high = self.bounds  # type: ignore[misc]
            return (float(low), float(high))
        if self.kind == "categorical":
            return (0.0, float(len(self.levels) - 1))  # type: ignore[arg-type]
        return (0.0, 1.0)

    def violations(self, value: Any) -> list[str]:
        """Constraint failures of ``value`` for this parameter; empty if valid."""
        if self.kind == "continuous":
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                return [f"{self.name} must be a real number, got {value!r}"]
            if not math.isfinite(value):
                return [f"{self.name} must be finite, got {value!r}"]
            low, high = self.bounds  # type: ignore[misc]
            if not (low <= value <= high):
                return [f"{self.name} out of range [{low}, {high}]: {value}"]
        elif self.kind == "integer":
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                if isinstance(value, float) and value.is_integer():
                    pass  # integral floats accepted
                else:
                    return [f"{self.name} must be an integer, got {value!r}"]
            low, high = self.bounds  # type: ignore[misc]
            if not (low <= value <= high):
                return [f"{self.name} out of range [{int(low)}, {int(high)}]: {value}"]
        elif self.kind == "categorical":
            if value not in self.levels:  # type: ignore[operator]
                return [f"{self.name} not a known level {list(self.levels)}: {value!r}"]  # type: ignore[arg-type]
        elif self.kind == "boolean":
            if not isinstance(value, (bool, np.bool_)):
                return [f"{self.name} must be a boolean, got {value!r}"]
        return []

    def encode_value(self, value: Any) -> float:
        if self.kind == "continuous":
            return math.log10(value) if self.scale == "log10" else float(value)
        if self.kind == "integer":
            return float(int(value))
        if self.kind == "categorical":
            return float(self.levels.index(value))  # type: ignore[union-attr]
        return 1.0 if value else 0.0

    def decode_value(self, coord: float) -> Any:
        """Inverse of :meth:`encode_value` with nearest-with-clamp rounding.

        Coordinates more than 0.5 encoded units outside the range are
        rejected; smaller excursions are clamped.
        """
        low, high = self.encoded_bounds()
        if not math.isfinite(coord):
            raise DecodeRangeError(f"{self.name}: non-finite coordinate {coord!r}")
        excess = max(low - coord, coord - high)
        if excess > 0.5:
            raise DecodeRangeError(
                f"{self.name}: coordinate {coord} outside encoded range "
                f"[{low}, {high}] by more than 0.5"
            )
        coord = min(max(coord, low), high)
        if self.kind == "continuous":
            return 10.0 ** coord if self.scale == "log10" else coord
        index = _round_half_down(coord)
        if self.kind == "integer":
            lo_i, hi_i = int(self.bounds[0]), int(self.bounds[1])  # type: ignore[index]
            return min(max(index, lo_i), hi_i)
        if self.kind == "categorical":
            levels = self.levels  # type: ignore[assignment]
            return levels[min(max(index, 0), len(levels) - 1)]
        return bool(min(max(index, 0), 1))

    def to_schema(self) -> dict[str, Any]:
        entry: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.kind in ("continuous", "integer"):
            entry["bounds"] = list(self.bounds)  # type: ignore[arg-type]
        if self.kind == "continuous":
            entry["scale"] = self.scale
        if self.kind == "categorical":
            entry["levels"] = list(self.levels)  # type: ignore[arg-type]
        return entry

    @classmethod
    def from_schema(cls, entry: dict[str, Any]) -> "ParameterSpec":
        try:
            name = entry["name"]
            kind = entry["kind"]
        except (KeyError, TypeError) as exc:
            raise SpaceError(f"parameter entry needs 'name' and 'kind': {entry!r}") from exc
        bounds = entry.get("bounds")
        return cls(
            name=name,
            kind=kind,
            bounds=tuple(bounds) if bounds is not None else None,
            levels=tuple(entry["levels"]) if "levels" in entry else None,
            scale=entry.get("scale", "linear"),
        )


def _round_half_down(x: float) -> int:
    """Nearest integer, ties toward the lower value (2.5 -> 2)."""
    floor = math.floor(x)
    return floor if x - floor <= 0.5 else floor + 1


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered, immutable schema of parameters; safe to share across threads."""

    params: tuple[ParameterSpec, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.params:
            raise SpaceError("a space needs at least one parameter")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise SpaceError(f"duplicate parameter names: {names}")
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "_index", {p.name: i for i, p in enumerate(self.params)})

    def __len__(self) -> int:
        return len(self.params)

    def __iter__(self) -> Iterator[ParameterSpec]:
        return iter(self.params)

    def __getitem__(self, name: str) -> ParameterSpec:
        return self.params[self._index[name]]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def validate(self, config: Configuration) -> list[str]:
        """All constraint violations of ``config``; an empty list means valid."""
        if not isinstance(config, dict):
            return [f"configuration must be a dict, got {type(config).__name__}"]
        violations: list[str] = []
        for spec in self.params:
            if spec.name not in config:
                violations.append(f"missing parameter {spec.name}")
            else:
                violations.extend(spec.violations(config[spec.name]))
        for name in config:
            if name not in self._index:
                violations.append(f"unknown parameter {name}")
        return violations

    def is_valid(self, config: Configuration) -> bool:
        return not self.validate(config)

    def encode(self, config: Configuration) -> np.ndarray:
        """Encode a valid configuration as a float vector, one entry per parameter."""
        violations = self.validate(config)
        if violations:
            raise InvalidConfigurationError(violations)
        return np.array([spec.encode_value(config[spec.name]) for spec in self.params])

    def decode(self, vector: Sequence[float]) -> Configuration:
        """Inverse of :meth:`encode` up to integer/categorical rounding."""
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (len(self.params),):
            raise DecodeRangeError(
                f"expected vector of length {len(self.params)}, got shape {vector.shape}"
            )
        return {spec.name: spec.decode_value(float(v)) for spec, v in zip(self.params, vector)}

    def encoded_bounds(self) -> np.ndarray:
        """(d, 2) array of per-parameter encoded [low, high]."""
        return np.array([spec.encoded_bounds() for spec in self.params])

    def to_schema(self) -> dict[str, Any]:
        return {
            "format": SCHEMA_FORMAT,
            "version": SCHEMA_VERSION,
            "parameters": [p.to_schema() for p in self.params],
        }

    @classmethod
    def from_schema(cls, schema: dict[str, Any]) -> "ParameterSpace":
        if not isinstance(schema, dict) or "parameters" not in schema:
            raise SpaceError("space schema must be a dict with a 'parameters' list")
        if schema.get("format", SCHEMA_FORMAT) != SCHEMA_FORMAT:
            raise SpaceError(f"unknown space schema format {schema.get('format')!r}")
        return cls(tuple(ParameterSpec.from_schema(e) for e in schema["parameters"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_schema(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ParameterSpace":
        try:
            schema = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise SpaceError(f"space schema {path} is not valid JSON: {exc}") from exc
        return cls.from_schema(schema)


def continuous(name: str, low: float, high: float, scale: str = "linear") -> ParameterSpec:
    return ParameterSpec(name, "continuous", bounds=(float(low), float(high)), scale=scale)


def integer(name: str, low: int, high: int) -> ParameterSpec:
    return ParameterSpec(name, "integer", bounds=(float(low), float(high)))


def categorical(name: str, levels: Sequence[Any]) -> ParameterSpec:
    return ParameterSpec(name, "categorical", levels=tuple(levels))


def boolean(name: str) -> ParameterSpec:
    return ParameterSpec(name, "boolean")
