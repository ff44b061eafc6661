"""Built-in synthetic objectives for testing and benchmarking the optimizer.

All benchmarks return a higher-is-better metric (the run loop negates
internally for minimization) and are deterministic functions of the
configuration, including the noisy variant whose noise is seeded by the
configuration content and a seed embedded in the benchmark name.

Available:

- ``mixed_quadratic``: separable quadratic over two continuous, two
  integer, one categorical, and one boolean parameter. Maximum 0 at the
  documented optimum, strictly negative elsewhere.
- ``rugged_mixed``: 10-dimensional multimodal mixture of a rippled
  continuous bowl, integer basins, categorical penalties, and a boolean
  gate. Maximum 0 at the documented optimum.
- ``noisy_quadratic``: ``mixed_quadratic`` plus seeded Gaussian noise of
  scale ``NOISE_SCALE``; select the noise stream with a name suffix,
  e.g. ``noisy_quadratic:seed=3``.
"""

from __future__ import annotations

import math

import numpy as np

from . import space as sp
from .jsonutil import canonical_dumps
from .seeding import derive_seed
from .space import Configuration, ParameterSpace

NOISE_SCALE = 0.1

MIXED_QUADRATIC_OPTIMUM: Configuration = {
    "x1": 1.5, "x2": 0.3, "k1": 3, "k2": 5, "mode": "beta", "gate": True,
}

RUGGED_OPTIMUM: Configuration = {
    "x1": 0.0, "x2": 0.0, "x3": 0.0, "x4": 0.0,
    "k1": 7, "k2": 3, "k3": 2, "shape": "ridge", "band": "mid", "gate": True,
}

_MODES = ("alpha", "beta", "gamma", "delta")
_SHAPES = ("plane", "ridge", "basin", "crest", "slope")
_BANDS = ("low", "mid", "high")


def _mixed_quadratic_space() -> ParameterSpace:
    return ParameterSpace((
        sp.continuous("x1", -5.0, 5.0),
        sp.continuous("x2", 0.0, 1.0),
        sp.integer("k1", -10, 10),
        sp.integer("k2", 1, 8),
        sp.categorical("mode", _MODES),
        sp.boolean("gate"),
    ))


def _mixed_quadratic(c: Configuration) -> float:
    cost = (
        (c["x1"] - 1.5) ** 2
        + (c["x2"] - 0.3) ** 2
        + (c["k1"] - 3) ** 2
        + (c["k2"] - 5) ** 2
        + (0.0 if c["mode"] == "beta" else 1.0 + _MODES.index(c["mode"]) * 0.5)
        + (0.0 if c["gate"] else 2.0)
    )
    return -cost


def _rugged_space() -> ParameterSpace:
    return ParameterSpace((
        sp.continuous("x1", -5.12, 5.12),
        sp.continuous("x2", -5.12, 5.12),
        sp.continuous("x3", -5.12, 5.12),
        sp.continuous("x4", -5.12, 5.12),
        sp.integer("k1", 0, 10),
        sp.integer("k2", 0, 10),
        sp.integer("k3", 1, 8),
        sp.categorical("shape", _SHAPES),
        sp.categorical("band", _BANDS),
        sp.boolean("gate"),
    ))


_SHAPE_COST = {"plane": 4.0, "ridge": 0.0, "basin": 2.0, "crest": 6.0, "slope": 3.0}
_BAND_COST = {"low": 2.0, "mid": 0.0, "high": 1.0}


def _rugged_mixed(c: Configuration) -> float:
    x = np.array([c["x1"], c["x2"], c["x3"], c["x4"]], dtype=float)
    ripple = float(np.sum(x * x - np.cos(2.0 * math.pi * x) + 1.0))
    integers = 0.5 * (c["k1"] - 7) ** 2 + abs(c["k2"] - 3) + (c["k3"] - 2) ** 2
    categorical = _SHAPE_COST[c["shape"]] + _BAND_COST[c["band"]]
    gate = 0.0 if c["gate"] else 3.0
    return -(ripple + integers + categorical + gate)


_REGISTRY = {
    "mixed_quadratic": (_mixed_quadratic_space, _mixed_quadratic),
    "rugged_mixed": (_rugged_space, _rugged_mixed),
    "noisy_quadratic": (_mixed_quadratic_space, None),  # handled below
}


def _parse_name(name: str) -> tuple[str, int]:
    base, _, suffix = name.partition(":")
    seed = 0
    if suffix:
        key, _, value = suffix.partition("=")
        if key != "seed":
            raise ValueError(f"unknown benchmark option {suffix!r} in {name!r}")
        seed = int(value)
    return base, seed


def benchmark_names() -> tuple[str, ...]:
    return tuple(_REGISTRY)


def benchmark_space(name: str) -> ParameterSpace:
    base, _ = _parse_name(name)
    try:
        space_fn, _ = _REGISTRY[base]
    except KeyError:
        raise ValueError(f"unknown benchmark {base!r}; known: {sorted(_REGISTRY)}") from None
    return space_fn()


def builtin_benchmark(name: str, config: Configuration) -> float:
    """Evaluate a named benchmark; raises ValueError for unknown names."""
    base, seed = _parse_name(name)
    if base not in _REGISTRY:
        raise ValueError(f"unknown benchmark {base!r}; known: {sorted(_REGISTRY)}")
    space = _REGISTRY[base][0]()
    violations = space.validate(config)
    if violations:
        raise sp.InvalidConfigurationError(violations)
    if base == "noisy_quadratic":
        clean = _mixed_quadratic(config)
        noise_rng = np.random.default_rng(derive_seed("noisy", seed, canonical_dumps(config)))
        return clean + NOISE_SCALE * float(noise_rng.standard_normal())
    return _REGISTRY[base][1](config)
