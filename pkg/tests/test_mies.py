import math

import numpy as np
import pytest

from egoconf import space as sp
from egoconf.mies import MiesParams, _geometric_difference, maximize, mutate_once
from egoconf.space import ParameterSpace


@pytest.fixture
def simple_space():
    return ParameterSpace((sp.continuous("x", 0.0, 1.0), sp.integer("i", 1, 10)))


def simple_objective(c):
    return -((c["x"] - 0.3) ** 2) - (c["i"] - 5) ** 2


class TestConvergence:
    def test_mixed_quadratic_reaches_known_optimum(self, simple_space):
        result = maximize(simple_space, simple_objective, MiesParams(budget=2000, seed=0))
        assert result.best_config["i"] == 5
        assert abs(result.best_config["x"] - 0.3) <= 1e-2

    def test_categorical_only_space_finds_the_good_level(self):
        space = ParameterSpace(
            (sp.categorical("a", ("elu", "relu", "tanh", "selu", "sigmoid")),)
        )
        result = maximize(space, lambda c: 1.0 if c["a"] == "relu" else 0.0,
                          MiesParams(budget=200, seed=5))
        assert result.best_config["a"] == "relu"
        assert result.best_fitness == 1.0

    def test_boolean_flips_discoverable(self):
        space = ParameterSpace((sp.boolean("b"), sp.continuous("x", -1.0, 1.0)))
        result = maximize(space, lambda c: (1.0 if c["b"] else 0.0) - c["x"] ** 2,
                          MiesParams(budget=400, seed=2))
        assert result.best_config["b"] is True


class TestBudgetSemantics:
    def test_budget_equal_to_lambda_returns_best_of_initial_population(self, simple_space):
        calls = []

        def spy(c):
            calls.append(dict(c))
            return simple_objective(c)

        params = MiesParams(mu=3, lambda_=12, budget=12, seed=9)
        result = maximize(simple_space, spy, params)
        assert len(calls) == 3  # only the initial population fit in the budget
        assert result.evaluations == 3
        assert result.best_fitness == max(simple_objective(c) for c in calls)

    def test_never_exceeds_budget(self, simple_space):
        for budget in (40, 41, 79, 120):
            count = [0]

            def spy(c):
                count[0] += 1
                return simple_objective(c)

            result = maximize(simple_space, spy, MiesParams(mu=2, lambda_=40,
                                                            budget=budget, seed=1))
            assert count[0] <= budget
            assert result.evaluations == count[0]

    def test_param_validation(self):
        with pytest.raises(ValueError):
            MiesParams(mu=5, lambda_=4)
        with pytest.raises(ValueError):
            MiesParams(mu=0, lambda_=4)
        with pytest.raises(ValueError):
            MiesParams(lambda_=10, budget=9)


class TestInvariants:
    def test_returned_fitness_is_max_over_all_evaluated(self, simple_space):
        evaluated = []

        def spy(c):
            v = simple_objective(c)
            evaluated.append(v)
            return v

        result = maximize(simple_space, spy, MiesParams(budget=500, seed=3))
        assert result.best_fitness == max(evaluated)

    def test_all_evaluated_configurations_valid(self, simple_space):
        def checking(c):
            assert simple_space.validate(c) == []
            return simple_objective(c)

        maximize(simple_space, checking, MiesParams(budget=500, seed=4))

    def test_best_so_far_trace_monotone(self, simple_space):
        result = maximize(simple_space, simple_objective, MiesParams(budget=600, seed=6))
        assert len(result.history) == result.evaluations
        assert all(b >= a for a, b in zip(result.history, result.history[1:]))
        assert result.history[-1] == result.best_fitness

    def test_non_finite_objective_survives(self, simple_space):
        def sometimes_nan(c):
            return math.nan if c["i"] % 2 == 0 else simple_objective(c)

        result = maximize(simple_space, sometimes_nan, MiesParams(budget=400, seed=7))
        assert math.isfinite(result.best_fitness)
        assert result.best_config["i"] % 2 == 1

    def test_determinism(self, simple_space):
        a = maximize(simple_space, simple_objective, MiesParams(budget=300, seed=11))
        b = maximize(simple_space, simple_objective, MiesParams(budget=300, seed=11))
        assert a == b
        c = maximize(simple_space, simple_objective, MiesParams(budget=300, seed=12))
        assert a != c

    def test_incumbent_used_as_parent(self, simple_space):
        # With a one-generation budget the incumbent must appear among parents.
        seen = []

        def spy(c):
            seen.append(dict(c))
            return simple_objective(c)

        incumbent = {"x": 0.3, "i": 5}
        maximize(simple_space, spy, MiesParams(mu=3, lambda_=12, budget=12, seed=13),
                 incumbent=incumbent)
        assert incumbent in seen

    def test_batch_objective_agrees_with_scalar(self, simple_space):
        plain = maximize(simple_space, simple_objective, MiesParams(budget=400, seed=21))
        batched = maximize(
            simple_space, simple_objective, MiesParams(budget=400, seed=21),
            batch_objective=lambda cs: [simple_objective(c) for c in cs],
        )
        assert plain == batched


class TestOperators:
    def test_geometric_difference_mean_magnitude(self):
        # Independent check of the step-size calibration: E|z| == step.
        rng = np.random.default_rng(42)
        for step in (0.5, 1.0, 3.0, 10.0):
            draws = _geometric_difference(rng, np.full(200_000, step))
            assert np.mean(np.abs(draws)) == pytest.approx(step, rel=0.02)

    def test_mutate_once_valid_and_deterministic(self, simple_space):
        config = {"x": 0.5, "i": 5}
        a = mutate_once(simple_space, config, seed=3)
        b = mutate_once(simple_space, config, seed=3)
        assert a == b
        assert simple_space.validate(a) == []
        assert a != config  # continuous jitter always moves x
