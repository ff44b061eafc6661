import json
import math

import pytest

from egoconf.evalproto import BenchmarkEvaluator, EvalResponse, Evaluator
from egoconf.benchmarks import benchmark_space
from egoconf.forest import ForestParams
from egoconf.loop import (
    Archive,
    ArchiveError,
    EvaluationRecord,
    EvaluatorAbort,
    LoopConfig,
    load_archive,
    propose_batch,
    resume,
    run,
)
from egoconf.mies import MiesParams
from egoconf.seeding import derive_seed


def small_cfg(max_evaluations=14, q=2, init_batches=2, seed=1, **kw):
    return LoopConfig(
        max_evaluations=max_evaluations,
        q=q,
        init_batches=init_batches,
        seed=seed,
        forest=ForestParams(trees=12, seed=0),
        mies=MiesParams(mu=3, lambda_=12, budget=60, seed=0),
        **kw,
    )


@pytest.fixture
def space():
    return benchmark_space("mixed_quadratic")


class CountingEvaluator(Evaluator):
    def __init__(self, inner):
        self.inner = inner
        self.count = 0

    def evaluate(self, request):
        self.count += 1
        return self.inner.evaluate(request)


class SabotagedEvaluator(Evaluator):
    """Returns a transport failure after ``limit`` successful evaluations."""

    def __init__(self, inner, limit):
        self.inner = inner
        self.limit = limit
        self.count = 0

    def evaluate(self, request):
        self.count += 1
        if self.count > self.limit:
            return EvalResponse(request.id, "failed",
                                diagnostics={"failure": "transport", "error": "cut"})
        return self.inner.evaluate(request)


class FailSomeEvaluator(Evaluator):
    """Evaluator-level failure (not transport) for chosen request indices."""

    def __init__(self, inner, bad_indices):
        self.inner = inner
        self.bad = set(bad_indices)
        self.count = 0

    def evaluate(self, request):
        index = self.count
        self.count += 1
        if index in self.bad:
            return EvalResponse(request.id, "failed",
                                diagnostics={"failure": "evaluator", "error": "boom"})
        return self.inner.evaluate(request)


class TestRun:
    def test_record_count_and_structure(self, space, tmp_path):
        cfg = small_cfg(max_evaluations=10, q=2, init_batches=2)
        archive = run(space, BenchmarkEvaluator("mixed_quadratic"), cfg,
                      archive_path=tmp_path / "a.jsonl")
        assert len(archive) == 10
        init = archive.records[:4]
        rest = archive.records[4:]
        assert all(r.temperature is None for r in init)
        assert all(r.temperature is not None and r.temperature > 0 for r in rest)
        assert [r.iteration for r in init] == [0, 0, 1, 1]
        assert [r.iteration for r in rest] == [2, 2, 3, 3, 4, 4]
        for r in archive.records:
            assert space.validate(r.config) == []
            assert r.raw_metric is not None
            assert r.fitness == -r.raw_metric  # maximization metric negated

    def test_budget_exactness_non_multiple_of_q(self, space, tmp_path):
        cfg = small_cfg(max_evaluations=9, q=2, init_batches=2)
        archive = run(space, BenchmarkEvaluator("mixed_quadratic"), cfg,
                      archive_path=tmp_path / "a.jsonl")
        assert len(archive) == 9

    def test_evaluator_called_exactly_budget_times(self, space, tmp_path):
        ev = CountingEvaluator(BenchmarkEvaluator("mixed_quadratic"))
        run(space, ev, small_cfg(max_evaluations=12), archive_path=tmp_path / "a.jsonl")
        assert ev.count == 12

    def test_y_min_running_minimum_non_increasing(self, space, tmp_path):
        archive = run(space, BenchmarkEvaluator("mixed_quadratic"), small_cfg(),
                      archive_path=tmp_path / "a.jsonl")
        best = math.inf
        mins = []
        for r in archive.records:
            if not r.failed:
                best = min(best, r.fitness)
            mins.append(best)
        assert mins == sorted(mins, reverse=True)

    def test_temperatures_match_sampled_values_in_order(self, space, tmp_path):
        from egoconf.infill import sample_temperatures

        cfg = small_cfg(max_evaluations=12, q=2, init_batches=2)
        archive = run(space, BenchmarkEvaluator("mixed_quadratic"), cfg,
                      archive_path=tmp_path / "a.jsonl")
        for iteration in (2, 3, 4):
            recs = [r for r in archive.records if r.iteration == iteration]
            seed = derive_seed(cfg.seed, "iteration", iteration)
            expected = sample_temperatures(cfg.q, derive_seed(seed, "temperatures"))
            assert [r.temperature for r in recs] == expected

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            LoopConfig(max_evaluations=9, q=5, init_batches=2)
        with pytest.raises(ValueError):
            LoopConfig(max_evaluations=10, q=0)

    def test_protocol_shape_200_evaluations(self, space, tmp_path):
        # The published experimental shape: batches of 5, the first five
        # batches a Latin hypercube design, 200 evaluations total.
        cfg = LoopConfig(
            max_evaluations=200, q=5, init_batches=5, seed=4,
            forest=ForestParams(trees=10, seed=0),
            mies=MiesParams(mu=3, lambda_=12, budget=36, seed=0),
        )
        archive = run(space, BenchmarkEvaluator("mixed_quadratic"), cfg,
                      archive_path=tmp_path / "a.jsonl")
        assert len(archive) == 200
        assert all(r.temperature is None for r in archive.records[:25])
        assert all(r.temperature is not None for r in archive.records[25:])
        assert [r.iteration for r in archive.records] == [i // 5 for i in range(200)]

    def test_minimize_orientation(self, space, tmp_path):
        cfg = small_cfg(minimize=True)
        archive = run(space, BenchmarkEvaluator("mixed_quadratic"), cfg,
                      archive_path=tmp_path / "a.jsonl")
        for r in archive.records:
            assert r.fitness == r.raw_metric


class TestDeterminism:
    def test_byte_identical_archives(self, space, tmp_path):
        cfg = small_cfg(max_evaluations=12)
        run(space, BenchmarkEvaluator("mixed_quadratic"), cfg,
            archive_path=tmp_path / "a.jsonl")
        run(space, BenchmarkEvaluator("mixed_quadratic"), cfg,
            archive_path=tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_seed_changes_archive(self, space, tmp_path):
        run(space, BenchmarkEvaluator("mixed_quadratic"), small_cfg(seed=1),
            archive_path=tmp_path / "a.jsonl")
        run(space, BenchmarkEvaluator("mixed_quadratic"), small_cfg(seed=2),
            archive_path=tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() != (tmp_path / "b.jsonl").read_bytes()


class TestFailedEvaluations:
    def test_penalty_and_flag(self, space, tmp_path):
        ev = FailSomeEvaluator(BenchmarkEvaluator("mixed_quadratic"), bad_indices={5})
        archive = run(space, ev, small_cfg(max_evaluations=10),
                      archive_path=tmp_path / "a.jsonl")
        failed = archive.records[5]
        assert failed.failed and failed.raw_metric is None
        worst_before = max(r.fitness for r in archive.records[:5] if not r.failed)
        assert failed.fitness == worst_before + 1.0
        assert archive.y_min() == min(r.fitness for r in archive.records if not r.failed)

    def test_transport_failure_aborts_with_partial_archive(self, space, tmp_path):
        ev = SabotagedEvaluator(BenchmarkEvaluator("mixed_quadratic"), limit=6)
        with pytest.raises(EvaluatorAbort):
            run(space, ev, small_cfg(max_evaluations=14),
                archive_path=tmp_path / "a.jsonl")
        _, _, _, records = load_archive(tmp_path / "a.jsonl")
        assert len(records) == 6


class TestProposeBatch:
    def build_archive(self, space, n=8):
        from egoconf.sampler import DesignPlan, lhs_sample
        from egoconf.benchmarks import builtin_benchmark

        archive = Archive(space)
        for i, c in enumerate(lhs_sample(space, DesignPlan(n, seed=3))):
            archive.append(EvaluationRecord(
                config=c, fitness=-builtin_benchmark("mixed_quadratic", c),
                raw_metric=builtin_benchmark("mixed_quadratic", c),
                iteration=i // 2, temperature=None))
        return archive

    def test_pairs_and_positive_temperatures(self, space):
        archive = self.build_archive(space)
        cfg = small_cfg(max_evaluations=20, q=5)
        pairs = propose_batch(archive, cfg, iteration_seed=77)
        assert len(pairs) == 5
        for config, temperature in pairs:
            assert temperature > 0
            assert space.validate(config) == []

    def test_q_one_degenerates_to_sequential(self, space):
        archive = self.build_archive(space)
        cfg = small_cfg(max_evaluations=20, q=1, init_batches=2)
        pairs = propose_batch(archive, cfg, iteration_seed=5)
        assert len(pairs) == 1

    def test_constant_fitness_archive_still_proposes(self, space):
        archive = self.build_archive(space)
        for r in archive.records:
            r.fitness = 1.0
        pairs = propose_batch(archive, small_cfg(max_evaluations=20), iteration_seed=6)
        for config, _ in pairs:
            assert space.validate(config) == []

    def test_empty_archive_rejected(self, space):
        with pytest.raises(ValueError):
            propose_batch(Archive(space), small_cfg(), iteration_seed=1)

    def test_duplicates_of_archived_points_perturbed(self, space, monkeypatch):
        # Force the inner search to return an archived configuration and
        # check that one mutation step is applied before the proposal is
        # handed out.
        import egoconf.loop as loop_mod
        from egoconf.mies import MiesResult

        archive = self.build_archive(space, n=4)
        stuck = dict(archive.records[0].config)

        def stuck_maximize(space_, objective, params, **kwargs):
            return MiesResult(dict(stuck), 1.0, params.budget, (1.0,))

        monkeypatch.setattr(loop_mod, "maximize", stuck_maximize)
        pairs = propose_batch(archive, small_cfg(max_evaluations=20), iteration_seed=8)
        for config, _ in pairs:
            assert config != stuck
            assert space.validate(config) == []


class TestResume:
    def uninterrupted(self, space, tmp_path, cfg):
        path = tmp_path / "full.jsonl"
        run(space, BenchmarkEvaluator("mixed_quadratic"), cfg, archive_path=path)
        return path.read_bytes()

    def test_resume_of_completed_run_returns_unchanged(self, space, tmp_path):
        cfg = small_cfg(max_evaluations=10)
        path = tmp_path / "a.jsonl"
        run(space, BenchmarkEvaluator("mixed_quadratic"), cfg, archive_path=path)
        before = path.read_bytes()
        archive = resume(path, BenchmarkEvaluator("mixed_quadratic"))
        assert len(archive) == 10
        assert path.read_bytes() == before

    @pytest.mark.parametrize("cut", [3, 6, 9, 13])
    def test_kill_and_resume_reproduces_uninterrupted_run(self, space, tmp_path, cut):
        cfg = small_cfg(max_evaluations=14)
        reference = self.uninterrupted(space, tmp_path, cfg)

        path = tmp_path / "part.jsonl"
        ev = SabotagedEvaluator(BenchmarkEvaluator("mixed_quadratic"), limit=cut)
        with pytest.raises(EvaluatorAbort):
            run(space, ev, cfg, archive_path=path)
        resumed = resume(path, BenchmarkEvaluator("mixed_quadratic"))
        assert len(resumed) == 14
        assert path.read_bytes() == reference

    def test_corrupt_archive_names_last_valid_record(self, space, tmp_path):
        cfg = small_cfg(max_evaluations=10)
        path = tmp_path / "a.jsonl"
        run(space, BenchmarkEvaluator("mixed_quadratic"), cfg, archive_path=path)
        lines = path.read_text().splitlines()
        lines[5] = lines[5][:20]  # truncate a record line mid-JSON
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ArchiveError, match="record 3"):
            load_archive(path)

    def test_mismatched_space_schema_rejected(self, space, tmp_path):
        cfg = small_cfg(max_evaluations=10)
        path = tmp_path / "a.jsonl"
        run(space, BenchmarkEvaluator("mixed_quadratic"), cfg, archive_path=path)
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        header["space"]["parameters"] = header["space"]["parameters"][:-1]
        lines[0] = json.dumps(header)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ArchiveError, match="schema"):
            load_archive(path)

    def test_missing_archive(self, tmp_path):
        with pytest.raises(ArchiveError, match="not found"):
            load_archive(tmp_path / "nope.jsonl")


class TestLoopConfigRoundTrip:
    def test_dict_round_trip(self):
        cfg = small_cfg(max_evaluations=25, q=5, init_batches=5, minimize=True)
        assert LoopConfig.from_dict(cfg.to_dict()) == cfg

    def test_json_round_trip(self):
        cfg = small_cfg()
        assert LoopConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
