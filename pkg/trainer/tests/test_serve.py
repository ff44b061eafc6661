"""Protocol-level tests: spawn the server and speak the wire format."""

import json
import subprocess
import sys

import pytest

SERVE = [sys.executable, "-m", "cnntrainer",
         "--dataset", "digits", "--train-n", "300", "--test-n", "150",
         "--epochs", "2", "--batch-size", "32", "--seed", "11", "--threads", "1"]


def small_descriptor(filters=8):
    return {
        "format": "egoconf-network", "version": 1,
        "layers": [
            {"kind": "conv", "filters": filters, "kernel": 3, "stride": 1,
             "l2": 1e-5, "activation": "elu", "padding": "same"},
            {"kind": "conv_out", "filters": filters, "kernel": 3, "stride": 2,
             "l2": 1e-5, "activation": "elu", "padding": "same"},
            {"kind": "dense", "units": 10, "l2": 1e-5, "activation": "elu"},
        ],
        "training": {"optimizer": "sgd", "learning_rate": 0.1, "decay": 0.0,
                     "epochs": 2, "batch_size": 32, "early_stop_patience": 6},
    }


def request(request_id, descriptor):
    return json.dumps({"type": "request", "id": request_id, "config": {},
                       "descriptor": descriptor, "deadline": None})


@pytest.fixture(scope="module")
def server():
    proc = subprocess.Popen(SERVE, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                            text=True, bufsize=1)
    hello = json.loads(proc.stdout.readline())
    assert hello == {"type": "hello", "protocol": "egoconf-eval", "version": 1}
    yield proc
    proc.terminate()
    proc.wait(timeout=10)


def roundtrip(server, line):
    server.stdin.write(line + "\n")
    server.stdin.flush()
    return json.loads(server.stdout.readline())


class TestServe:
    def test_ok_response_with_accuracy_in_range(self, server):
        response = roundtrip(server, request("r1", small_descriptor()))
        assert response["type"] == "response" and response["id"] == "r1"
        assert response["status"] == "ok"
        assert 0.0 <= response["metric"] <= 1.0
        assert response["diagnostics"]["epochs_trained"] >= 1

    def test_identical_requests_identical_accuracy(self, server):
        a = roundtrip(server, request("r2", small_descriptor()))
        b = roundtrip(server, request("r3", small_descriptor()))
        assert a["metric"] == b["metric"]
        assert "epochs_trained" in a["diagnostics"]

    def test_missing_descriptor_fails_cleanly(self, server):
        response = roundtrip(server, json.dumps(
            {"type": "request", "id": "r4", "config": {}, "descriptor": None}))
        assert response["status"] == "failed"
        assert response["diagnostics"]["failure"] == "evaluator"

    def test_oversized_descriptor_fails_with_resource(self, server):
        big = small_descriptor(filters=512)
        big["layers"].insert(1, dict(big["layers"][0], filters=512))
        response = roundtrip(server, request("r5", big))
        # the module-level default caps are generous; spawn a tight server
        proc = subprocess.Popen(SERVE + ["--max-params", "10000"],
                                stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                text=True, bufsize=1)
        try:
            json.loads(proc.stdout.readline())  # hello
            proc.stdin.write(request("r6", small_descriptor(filters=64)) + "\n")
            proc.stdin.flush()
            tight = json.loads(proc.stdout.readline())
        finally:
            proc.terminate()
            proc.wait(timeout=10)
        assert tight["status"] == "failed"
        assert tight["diagnostics"]["failure"] == "resource"
        assert response["status"] in ("ok", "failed")  # big one either trains or fails cleanly

    def test_malformed_line_does_not_kill_loop(self, server):
        server.stdin.write("this is not json\n")
        server.stdin.flush()
        response = roundtrip(server, request("r7", small_descriptor()))
        assert response["id"] == "r7"

    def test_bad_descriptor_fails_response_not_crash(self, server):
        bad = small_descriptor()
        bad["layers"][0]["kind"] = "banana"
        response = roundtrip(server, request("r8", bad))
        assert response["status"] == "failed"
        assert "banana" in response["diagnostics"]["error"]
