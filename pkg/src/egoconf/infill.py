"""Moment-generating-function infill criterion and temperature sampling.

The criterion scores a candidate from its surrogate prediction
(mean m, variance s2) against the incumbent y_min, at a temperature t:

    M = Phi((y_min - m') / s) * exp((y_min - m - 1) * t + s2 * t^2 / 2)
    m' = m - s2 * t,   s = sqrt(s2)

with Phi the standard normal CDF. Minimization is assumed: smaller means
are better. Small temperatures trust the predicted mean; large ones
reward predictive variance, so a batch of temperatures drawn from
Lognormal(0, 1) yields mostly exploiting proposals with an occasional
strongly exploring one.

The exponent is clamped at ``MAX_EXPONENT`` before exponentiation, so the
criterion is finite everywhere even for extreme temperatures from the
log-normal tail; clamped values saturate at ``Phi(...) * exp(MAX_EXPONENT)``
and compare correctly against non-saturated values below the cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr

from .forest import SurrogatePrediction

MAX_EXPONENT = 700.0
SATURATION_CEILING = math.exp(MAX_EXPONENT)


@dataclass(frozen=True)
class InfillContext:
    """Incumbent value and temperature for one criterion instance."""

    y_min: float
    temperature: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.y_min):
            raise ValueError(f"y_min must be finite, got {self.y_min}")
        if not (math.isfinite(self.temperature) and self.temperature > 0):
            raise ValueError(f"temperature must be finite and > 0, got {self.temperature}")


class MgfTerms(NamedTuple):
    """Criterion decomposition, mainly for tests and diagnostics."""

    phi_argument: float
    exponent: float
    saturated: bool
    value: float


def _norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def mgf_terms(pred: SurrogatePrediction, ctx: InfillContext) -> MgfTerms:
    m, s2 = pred.mean, pred.variance
    t, y_min = ctx.temperature, ctx.y_min
    if s2 == 0.0:
        # One-sided limit s -> 0+: Phi term becomes an indicator of m < y_min.
        if m >= y_min:
            return MgfTerms(-math.inf, 0.0, False, 0.0)
        exponent = (y_min - m - 1.0) * t
        saturated = exponent > MAX_EXPONENT
        return MgfTerms(math.inf, exponent, saturated,
                        math.exp(min(exponent, MAX_EXPONENT)))
    s = math.sqrt(s2)
    phi_arg = (y_min - (m - s2 * t)) / s
    exponent = (y_min - m - 1.0) * t + 0.5 * s2 * t * t
    saturated = exponent > MAX_EXPONENT
    value = _norm_cdf(phi_arg) * math.exp(min(exponent, MAX_EXPONENT))
    return MgfTerms(phi_arg, exponent, saturated, value)


def mgf_criterion(pred: SurrogatePrediction, ctx: InfillContext) -> float:
    """Criterion value for one prediction; always finite and >= 0."""
    if not (math.isfinite(pred.mean) and math.isfinite(pred.variance)):
        raise ValueError(f"prediction must be finite: {pred}")
    return mgf_terms(pred, ctx).value


def mgf_criterion_batch(means, variances, ctx: InfillContext) -> np.ndarray:
    """Vectorized criterion over arrays of means and variances."""
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    t, y_min = ctx.temperature, ctx.y_min

    out = np.zeros_like(means)
    degenerate = variances == 0.0
    if degenerate.any():
        below = degenerate & (means < y_min)
        expo = np.minimum((y_min - means[below] - 1.0) * t, MAX_EXPONENT)
        out[below] = np.exp(expo)
    live = ~degenerate
    if live.any():
        m = means[live]
        s2 = variances[live]
        s = np.sqrt(s2)
        phi = ndtr((y_min - (m - s2 * t)) / s)
        expo = np.minimum((y_min - m - 1.0) * t + 0.5 * s2 * t * t, MAX_EXPONENT)
        out[live] = phi * np.exp(expo)
    return out


def sample_temperatures(q: int, seed: int) -> list[float]:
    """``q`` independent Lognormal(0, 1) draws; deterministic under seed."""
    if q < 1:
        raise ValueError(f"need q >= 1 temperatures, got {q}")
    rng = np.random.default_rng(seed)
    return [float(v) for v in rng.lognormal(mean=0.0, sigma=1.0, size=q)]
