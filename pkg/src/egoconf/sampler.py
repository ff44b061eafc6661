"""Latin hypercube and uniform random designs over mixed spaces.

Both samplers work in the encoded coordinate view of the space (log10
for log-scaled continuous parameters, level indices for categoricals)
and decode back to named configurations, so stratification and
uniformity are with respect to the scale the surrogate sees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .space import Configuration, ParameterSpace

_REDRAW_ATTEMPTS = 10


@dataclass(frozen=True)
class DesignPlan:
    """Size and seed of an initial design."""

    size: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError(f"design size must be >= 1, got {self.size}")


def lhs_sample(space: ParameterSpace, plan: DesignPlan) -> list[Configuration]:
    """Latin hypercube design of ``plan.size`` valid configurations.

    Every dimension's encoded range is split into ``size`` equal strata
    and each stratum receives exactly one sample, placed uniformly at
    random within the stratum. Integer, categorical, and boolean
    dimensions are stratified on their continuous relaxation and then
    rounded, so rounding collisions are possible when ``size`` exceeds a
    dimension's cardinality. Configurations that collide with an earlier
    one as a whole are re-drawn within their assigned strata up to 10
    times, then accepted.
    """
    n, d = plan.size, len(space)
    rng = np.random.default_rng(plan.seed)
    bounds = space.encoded_bounds()
    low, width = bounds[:, 0], bounds[:, 1] - bounds[:, 0]

    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    offsets = rng.random((n, d))

    configs: list[Configuration] = []
    seen: set[tuple] = set()
    for i in range(n):
        config = None
        for _ in range(_REDRAW_ATTEMPTS):
            cells = (strata[i] + offsets[i]) / n
            config = space.decode(low + cells * width)
            key = _config_key(config)
            if key not in seen:
                break
            offsets[i] = rng.random(d)
        seen.add(_config_key(config))
        configs.append(config)
    return configs


def uniform_sample(space: ParameterSpace, n: int, seed: int = 0) -> list[Configuration]:
    """``n`` configurations drawn uniformly on the encoded ranges."""
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    bounds = space.encoded_bounds()
    low, width = bounds[:, 0], bounds[:, 1] - bounds[:, 0]
    points = low + rng.random((n, len(space))) * width
    return [space.decode(row) for row in points]


def _config_key(config: Configuration) -> tuple:
    return tuple(sorted(config.items()))
