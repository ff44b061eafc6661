"""Mixed-integer evolution strategy for maximizing over a parameter space.

A (mu, lambda) evolution strategy with kind-specific self-adaptive
mutation, used here to maximize infill criteria but applicable to any
finite objective over a :class:`~egoconf.space.ParameterSpace`:

- continuous parameters mutate by a Gaussian step in encoded (scaled)
  space with log-normally self-adapted step sizes;
- integer parameters step by the difference of two geometric draws whose
  expected magnitude is the self-adapted step size;
- categorical and boolean parameters resample uniformly among the other
  levels with a self-adapted mutation probability.

Recombination is intermediate for continuous values and all strategy
parameters, dominant (coordinate-wise pick between two parents) for
discrete values. Continuous and integer mutants are reflected back into
their bounds, so every individual is valid by construction. Selection is
comma (offspring only) with the single best-ever individual kept aside
and returned, and the evaluation budget is never exceeded: a generation
only runs when a full lambda batch still fits.

Offspring generations are produced with batched array arithmetic; the
per-individual view is materialized as :class:`Individual` records for
evaluation and selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .sampler import DesignPlan, lhs_sample
from .seeding import derive_seed
from .space import Configuration, ParameterSpace

DEFAULT_STEP_FRACTIONS: dict[str, float] = {
    "continuous": 0.1,   # initial sigma as a fraction of the encoded range
    "integer": 0.2,      # initial mean step as a fraction of the range
    "categorical": 0.1,  # initial mutation probability (also booleans)
}

_MIN_SIGMA_FRACTION = 1e-6
_MIN_INT_STEP = 0.2


@dataclass(frozen=True)
class MiesParams:
    """Population sizes, budget, and initial mutation scales."""

    mu: int = 4
    lambda_: int = 40
    budget: int = 1500
    seed: int = 0
    initial_step_fractions: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_STEP_FRACTIONS)
    )

    def __post_init__(self) -> None:
        if not 1 <= self.mu <= self.lambda_:
            raise ValueError(f"need 1 <= mu <= lambda, got mu={self.mu}, lambda={self.lambda_}")
        if self.budget < self.lambda_:
            raise ValueError(f"budget {self.budget} smaller than lambda {self.lambda_}")


@dataclass
class Individual:
    """A configuration with its strategy parameters and fitness."""

    config: Configuration
    sigma: np.ndarray     # per continuous dim, > 0
    int_step: np.ndarray  # per integer dim, > 0
    mut_prob: np.ndarray  # per categorical/boolean dim, in (0, 1)
    fitness: float = -math.inf


@dataclass(frozen=True)
class MiesResult:
    best_config: Configuration
    best_fitness: float
    evaluations: int
    history: tuple[float, ...]  # best-so-far after each evaluation


class _Layout:
    """Per-kind index bookkeeping for one space."""

    def __init__(self, space: ParameterSpace):
        self.space = space
        self.cont = [i for i, p in enumerate(space.params) if p.kind == "continuous"]
        self.ints = [i for i, p in enumerate(space.params) if p.kind == "integer"]
        self.cats = [i for i, p in enumerate(space.params)
                     if p.kind in ("categorical", "boolean")]
        bounds = space.encoded_bounds()
        self.cont_lo = bounds[self.cont, 0]
        self.cont_hi = bounds[self.cont, 1]
        self.cont_w = self.cont_hi - self.cont_lo
        self.int_lo = bounds[self.ints, 0]
        self.int_hi = bounds[self.ints, 1]
        self.int_w = self.int_hi - self.int_lo
        self.n_levels = np.array(
            [len(space.params[i].levels) if space.params[i].kind == "categorical" else 2
             for i in self.cats],
            dtype=int,
        )
        # Standard ES learning rates per variable class.
        self.tau_c = self._taus(len(self.cont))
        self.tau_i = self._taus(len(self.ints))
        n_d = len(self.cats)
        self.tau_d = 1.0 / math.sqrt(2.0 * n_d) if n_d else 0.0
        # Floor on mutation probability scales with the whole genome, so
        # discrete flips do not drown out continuous fine-tuning in mixed
        # spaces while purely discrete spaces keep a 1/(3 n) floor.
        self.prob_lo = min(1.0 / (3.0 * len(space.params)), 0.5) if n_d else 0.0

    @staticmethod
    def _taus(n: int) -> tuple[float, float]:
        if n == 0:
            return (0.0, 0.0)
        return (1.0 / math.sqrt(2.0 * n), 1.0 / math.sqrt(2.0 * math.sqrt(n)))

    def split(self, config: Configuration):
        """Config -> (continuous scaled values, integer values, level indices)."""
        params = self.space.params
        cont = np.array([params[i].encode_value(config[params[i].name]) for i in self.cont])
        ints = np.array([float(config[params[i].name]) for i in self.ints])
        cats = np.array(
            [params[i].levels.index(config[params[i].name])
             if params[i].kind == "categorical" else int(bool(config[params[i].name]))
             for i in self.cats],
            dtype=int,
        )
        return cont, ints, cats

    def join(self, cont: np.ndarray, ints: np.ndarray, cats: np.ndarray) -> Configuration:
        params = self.space.params
        config: Configuration = {}
        for j, i in enumerate(self.cont):
            config[params[i].name] = params[i].decode_value(float(cont[j]))
        for j, i in enumerate(self.ints):
            config[params[i].name] = int(ints[j])
        for j, i in enumerate(self.cats):
            p = params[i]
            config[p.name] = p.levels[cats[j]] if p.kind == "categorical" else bool(cats[j])
        return config

    def initial_strategy(self, fractions: Mapping[str, float]):
        frac = {**DEFAULT_STEP_FRACTIONS, **dict(fractions)}
        sigma = np.maximum(frac["continuous"] * self.cont_w, 1e-12)
        int_step = np.maximum(frac["integer"] * self.int_w, _MIN_INT_STEP)
        prob = np.full(len(self.cats), frac["categorical"])
        prob = np.clip(prob, self.prob_lo, 0.5) if len(self.cats) else prob
        return sigma, int_step, prob


def _reflect(v: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Fold values into [lo, hi] by reflection at the bounds (broadcasts)."""
    w = hi - lo
    moving = w > 0
    w_safe = np.where(moving, w, 1.0)
    y = np.mod(v - lo, 2.0 * w_safe)
    folded = lo + (w_safe - np.abs(y - w_safe))
    return np.where(moving, folded, lo)


def _geometric_difference(rng: np.random.Generator, step: np.ndarray) -> np.ndarray:
    """Symmetric integer steps with E|z| equal to ``step`` element-wise.

    Uses z = G1 - G2 with G geometric on {0, 1, ...} and success
    probability 1 - q, q = step / (1 + sqrt(1 + step^2)).
    """
    q = step / (1.0 + np.sqrt(1.0 + step * step))
    p = 1.0 - q
    g1 = rng.geometric(p) - 1
    g2 = rng.geometric(p) - 1
    return g1 - g2


def _offspring_batch(
    layout: _Layout,
    parents: Sequence[Individual],
    lam: int,
    rng: np.random.Generator,
) -> list[Individual]:
    """One generation of lambda recombined-and-mutated offspring."""
    mu = len(parents)
    p_cont = np.array([layout.split(ind.config)[0] for ind in parents])
    p_ints = np.array([layout.split(ind.config)[1] for ind in parents])
    p_cats = np.array([layout.split(ind.config)[2] for ind in parents])
    p_sigma = np.array([ind.sigma for ind in parents])
    p_step = np.array([ind.int_step for ind in parents])
    p_prob = np.array([ind.mut_prob for ind in parents])

    picks = rng.integers(0, mu, size=(lam, 2))
    a, b = picks[:, 0], picks[:, 1]

    sigma = (p_sigma[a] + p_sigma[b]) / 2.0
    int_step = (p_step[a] + p_step[b]) / 2.0
    prob = (p_prob[a] + p_prob[b]) / 2.0

    n_c, n_i, n_d = len(layout.cont), len(layout.ints), len(layout.cats)

    cont = (p_cont[a] + p_cont[b]) / 2.0 if n_c else np.empty((lam, 0))
    if n_i:
        side = rng.integers(0, 2, size=(lam, n_i))
        ints = np.where(side == 0, p_ints[a], p_ints[b])
    else:
        ints = np.empty((lam, 0))
    if n_d:
        side = rng.integers(0, 2, size=(lam, n_d))
        cats = np.where(side == 0, p_cats[a], p_cats[b])
    else:
        cats = np.empty((lam, 0), dtype=int)

    if n_c:
        tau_g, tau_l = layout.tau_c
        g = tau_g * rng.standard_normal((lam, 1))
        sigma = sigma * np.exp(g + tau_l * rng.standard_normal((lam, n_c)))
        sigma = np.clip(sigma, _MIN_SIGMA_FRACTION * layout.cont_w, layout.cont_w)
        cont = cont + sigma * rng.standard_normal((lam, n_c))
        cont = _reflect(cont, layout.cont_lo, layout.cont_hi)

    if n_i:
        tau_g, tau_l = layout.tau_i
        g = tau_g * rng.standard_normal((lam, 1))
        int_step = int_step * np.exp(g + tau_l * rng.standard_normal((lam, n_i)))
        int_step = np.clip(int_step, _MIN_INT_STEP, np.maximum(layout.int_w, _MIN_INT_STEP))
        z = _geometric_difference(rng, int_step)
        moving = layout.int_w > 0
        ints = np.rint(_reflect(ints + np.where(moving, z, 0), layout.int_lo, layout.int_hi))

    if n_d:
        noise = rng.standard_normal((lam, n_d))
        prob = 1.0 / (1.0 + (1.0 - prob) / prob * np.exp(-layout.tau_d * noise))
        prob = np.clip(prob, layout.prob_lo, 0.5)
        flip = rng.random((lam, n_d)) < prob
        shifts = 1 + rng.integers(0, layout.n_levels - 1, size=(lam, n_d))
        cats = np.where(flip, (cats + shifts) % layout.n_levels, cats)

    return [
        Individual(layout.join(cont[k], ints[k], cats[k]),
                   sigma[k].copy(), int_step[k].copy(), prob[k].copy())
        for k in range(lam)
    ]


def maximize(
    space: ParameterSpace,
    objective: Callable[[Configuration], float],
    params: MiesParams = MiesParams(),
    *,
    incumbent: Configuration | None = None,
    batch_objective: Callable[[Sequence[Configuration]], Sequence[float]] | None = None,
) -> MiesResult:
    """Maximize ``objective`` over ``space`` within ``params.budget`` evaluations.

    The initial population is a Latin hypercube design; when ``incumbent``
    is given it replaces one initial parent, warm-starting the search.
    ``batch_objective``, if provided, is used to evaluate whole offspring
    batches at once and must agree with ``objective`` pointwise.
    Objectives returning non-finite values demote that individual to
    -inf fitness, and the run continues.
    """
    layout = _Layout(space)
    rng = np.random.default_rng(derive_seed(params.seed, "mies-evolve"))
    sigma0, int_step0, prob0 = layout.initial_strategy(params.initial_step_fractions)

    def evaluate(batch: list[Individual]) -> None:
        if batch_objective is not None:
            values = batch_objective([ind.config for ind in batch])
        else:
            values = [objective(ind.config) for ind in batch]
        for ind, v in zip(batch, values):
            v = float(v)
            ind.fitness = v if math.isfinite(v) else -math.inf

    initial = lhs_sample(space, DesignPlan(params.mu, derive_seed(params.seed, "mies-init")))
    if incumbent is not None:
        initial[-1] = dict(incumbent)
    population = [
        Individual(dict(c), sigma0.copy(), int_step0.copy(), prob0.copy()) for c in initial
    ]
    evaluate(population)
    evaluations = len(population)

    best = population[0]
    history: list[float] = []
    for ind in population:
        if ind.fitness > best.fitness:
            best = ind
        history.append(best.fitness)

    while evaluations + params.lambda_ <= params.budget:
        offspring = _offspring_batch(layout, population, params.lambda_, rng)
        evaluate(offspring)
        evaluations += len(offspring)
        for ind in offspring:
            if ind.fitness > best.fitness:
                best = ind
            history.append(best.fitness)
        ranked = sorted(range(len(offspring)), key=lambda k: (-offspring[k].fitness, k))
        population = [offspring[k] for k in ranked[: params.mu]]

    return MiesResult(dict(best.config), best.fitness, evaluations, tuple(history))


def mutate_once(
    space: ParameterSpace,
    config: Configuration,
    seed: int,
    fractions: Mapping[str, float] | None = None,
) -> Configuration:
    """One mutation step at initial step sizes; used to perturb duplicates."""
    layout = _Layout(space)
    sigma0, int_step0, prob0 = layout.initial_strategy(fractions or DEFAULT_STEP_FRACTIONS)
    ind = Individual(dict(config), sigma0, int_step0, prob0)
    rng = np.random.default_rng(derive_seed(seed, "mutate-once"))
    return _offspring_batch(layout, [ind], 1, rng)[0].config
