import csv
import json
import sys
from pathlib import Path

import pytest

from egoconf import cli
from egoconf.benchmarks import benchmark_space
from egoconf.forest import ForestParams
from egoconf.loop import Archive, EvaluationRecord, LoopConfig, _ArchiveWriter, _archive_header
from egoconf.mies import MiesParams


def small_loop_doc(max_evaluations=10, q=2, init_batches=2, seed=1):
    return {
        "max_evaluations": max_evaluations,
        "q": q,
        "init_batches": init_batches,
        "seed": seed,
        "forest": {"trees": 12, "seed": 0},
        "mies": {"mu": 3, "lambda": 12, "budget": 60, "seed": 0},
    }


def write_manifest(tmp_path, name="manifest.json", **overrides):
    manifest = {
        "space": "allcnn:q=3",
        "evaluator": {"benchmark": "mixed_quadratic"},
        "loop": small_loop_doc(),
        "output": str(tmp_path / "archive.jsonl"),
    }
    manifest.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(manifest))
    return path, manifest


DESCRIPTOR_CHECKING_EVALUATOR = """\
import json, sys
print(json.dumps({"type": "hello", "protocol": "egoconf-eval", "version": 1}), flush=True)
for line in sys.stdin:
    req = json.loads(line)
    desc = req.get("descriptor")
    ok = isinstance(desc, dict) and desc.get("format") == "egoconf-network" and desc.get("layers")
    resp = {"type": "response", "id": req["id"],
            "status": "ok" if ok else "failed",
            "metric": 0.25 if ok else None,
            "diagnostics": {} if ok else {"failure": "evaluator", "error": "no descriptor"}}
    print(json.dumps(resp), flush=True)
"""


class TestRunCommand:
    def test_benchmark_run_produces_archive(self, tmp_path, capsys):
        space_doc = benchmark_space("mixed_quadratic").to_schema()
        space_path = tmp_path / "space.json"
        space_path.write_text(json.dumps(space_doc))
        manifest_path, manifest = write_manifest(tmp_path, space=str(space_path))
        assert cli.main(["run", "--manifest", str(manifest_path)]) == 0
        from egoconf.loop import load_archive

        _, _, _, records = load_archive(manifest["output"])
        assert len(records) == 10
        out = capsys.readouterr().out
        assert "best_fitness" in out and "done:" in out

    def test_allcnn_run_attaches_descriptors(self, tmp_path):
        script = tmp_path / "eval.py"
        script.write_text(DESCRIPTOR_CHECKING_EVALUATOR)
        manifest_path, manifest = write_manifest(
            tmp_path,
            evaluator={"command": [sys.executable, str(script)]},
            slots=2,
        )
        assert cli.main(["run", "--manifest", str(manifest_path)]) == 0
        from egoconf.loop import load_archive

        _, _, _, records = load_archive(manifest["output"])
        assert len(records) == 10
        assert all(not r.failed for r in records)  # evaluator fails without descriptor

    def test_missing_evaluator_binary_no_archive(self, tmp_path, capsys):
        manifest_path, manifest = write_manifest(
            tmp_path, evaluator={"command": ["/no/such/evaluator"]})
        assert cli.main(["run", "--manifest", str(manifest_path)]) != 0
        assert not Path(manifest["output"]).exists()

    def test_identical_manifest_reproduces_archive(self, tmp_path):
        m1, man1 = write_manifest(tmp_path, name="m1.json",
                                  output=str(tmp_path / "a.jsonl"))
        m2, man2 = write_manifest(tmp_path, name="m2.json",
                                  output=str(tmp_path / "b.jsonl"))
        assert cli.main(["run", "--manifest", str(m1)]) == 0
        assert cli.main(["run", "--manifest", str(m2)]) == 0
        a = Path(man1["output"]).read_text().splitlines()
        b = Path(man2["output"]).read_text().splitlines()
        assert a[1:] == b[1:]  # headers embed the differing output path

    def test_manifest_validation(self, tmp_path):
        bad, _ = write_manifest(tmp_path, evaluator={})
        assert cli.main(["run", "--manifest", str(bad)]) == 2
        bad2, _ = write_manifest(
            tmp_path, name="bad2.json",
            evaluator={"command": ["x"], "benchmark": "mixed_quadratic"})
        assert cli.main(["run", "--manifest", str(bad2)]) == 2
        bad3, _ = write_manifest(tmp_path, name="bad3.json",
                                 evaluator={"benchmark": "nope"})
        assert cli.main(["run", "--manifest", str(bad3)]) == 2
        assert cli.main(["run", "--manifest", str(tmp_path / "missing.json")]) == 2


class TestResumeCommand:
    def test_resume_after_transport_abort(self, tmp_path):
        counter = tmp_path / "count"
        script = tmp_path / "flaky.py"
        script.write_text(
            "import json, sys, pathlib\n"
            f"counter = pathlib.Path({str(counter)!r})\n"
            "print(json.dumps({'type': 'hello', 'protocol': 'egoconf-eval',"
            " 'version': 1}), flush=True)\n"
            "for line in sys.stdin:\n"
            "    req = json.loads(line)\n"
            "    n = int(counter.read_text()) if counter.exists() else 0\n"
            "    if n >= 6:\n"
            "        sys.exit(1)\n"
            "    counter.write_text(str(n + 1))\n"
            "    print(json.dumps({'type': 'response', 'id': req['id'],"
            " 'status': 'ok', 'metric': 0.5 - 0.01 * n, 'diagnostics': {}}),"
            " flush=True)\n"
        )
        manifest_path, manifest = write_manifest(
            tmp_path, evaluator={"command": [sys.executable, str(script)]}, slots=1)
        assert cli.main(["run", "--manifest", str(manifest_path)]) == 3
        from egoconf.loop import load_archive

        _, _, _, records = load_archive(manifest["output"])
        assert 0 < len(records) < 10
        counter.unlink()  # lift the sabotage, then resume to completion
        assert cli.main(["resume", "--archive", manifest["output"]]) == 0
        _, _, _, records = load_archive(manifest["output"])
        assert len(records) == 10

    def test_resume_completed_run(self, tmp_path):
        manifest_path, manifest = write_manifest(tmp_path)
        assert cli.main(["run", "--manifest", str(manifest_path)]) == 0
        before = Path(manifest["output"]).read_bytes()
        assert cli.main(["resume", "--archive", manifest["output"]]) == 0
        assert Path(manifest["output"]).read_bytes() == before


def synthetic_archive(tmp_path, n, q=5):
    space = benchmark_space("mixed_quadratic")
    cfg = LoopConfig(max_evaluations=max(n, q * 5), q=q, init_batches=5, seed=0)
    path = tmp_path / "synthetic.jsonl"
    writer = _ArchiveWriter(path, append=False)
    writer.write_header(_archive_header(space, cfg, None))
    config = {"x1": 1.5, "x2": 0.3, "k1": 3, "k2": 5, "mode": "beta", "gate": True}
    for i in range(n):
        record = EvaluationRecord(
            config=config, fitness=-(0.5 + 0.001 * i), raw_metric=0.5 + 0.001 * i,
            iteration=i // q, temperature=None if i < 25 else 1.0)
        writer.append_record(record, i)
    writer.close()
    return path


class TestReportCommand:
    def test_trace_and_moving_average(self, tmp_path, capsys):
        path = synthetic_archive(tmp_path, 200)
        out = tmp_path / "report.csv"
        assert cli.main(["report", "--archive", str(path), "--out", str(out)]) == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 200
        assert all(r["moving_avg_raw_20"] == "" for r in rows[:19])
        expected = sum(0.5 + 0.001 * i for i in range(20)) / 20
        assert float(rows[19]["moving_avg_raw_20"]) == pytest.approx(expected)
        assert float(rows[199]["moving_avg_raw_20"]) == pytest.approx(
            sum(0.5 + 0.001 * i for i in range(180, 200)) / 20)
        summary = json.loads(capsys.readouterr().out)
        assert summary["records"] == 200
        assert summary["best_config"]

    def test_single_record_archive(self, tmp_path):
        path = synthetic_archive(tmp_path, 1)
        out = tmp_path / "one.csv"
        assert cli.main(["report", "--archive", str(path), "--out", str(out)]) == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        assert rows[0]["moving_avg_raw_20"] == ""

    def test_empty_archive_errors(self, tmp_path):
        path = synthetic_archive(tmp_path, 0)
        assert cli.main(["report", "--archive", str(path),
                         "--out", str(tmp_path / "x.csv")]) == 2

    def test_report_is_read_only(self, tmp_path):
        path = synthetic_archive(tmp_path, 30)
        before = path.read_bytes()
        cli.main(["report", "--archive", str(path), "--out", str(tmp_path / "r.csv")])
        assert path.read_bytes() == before


class TestSlotsResolution:
    def test_manifest_wins(self, monkeypatch):
        monkeypatch.setenv(cli.SLOTS_ENV_VAR, "7")
        assert cli.resolve_slots({"slots": 3, "loop": {"q": 5}}) == 3

    def test_env_var_overrides_q(self, monkeypatch):
        monkeypatch.setenv(cli.SLOTS_ENV_VAR, "7")
        assert cli.resolve_slots({"loop": {"q": 5}}) == 7

    def test_defaults_to_q(self, monkeypatch):
        monkeypatch.delenv(cli.SLOTS_ENV_VAR, raising=False)
        assert cli.resolve_slots({"loop": {"q": 4}}) == 4


class TestBenchmarkCommand:
    def test_random_search_summary(self, capsys):
        assert cli.main(["benchmark", "--name", "mixed_quadratic",
                         "--trials", "50", "--seed", "3"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["trials"] == 50
        assert doc["best_metric"] >= doc["mean_metric"] >= doc["worst_metric"]

    def test_unknown_benchmark(self, capsys):
        assert cli.main(["benchmark", "--name", "nope"]) == 2
