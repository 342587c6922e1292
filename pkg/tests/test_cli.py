import json
import subprocess
import sys

import pytest

from hierbench.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, run

from conftest import FIXTURES

RESULTS = str(FIXTURES / "results.jsonl")
WALLET = FIXTURES / "integrity" / "wallet"

SMALL = {
    "ingest": ["-i", RESULTS],
    "report": ["-i", RESULTS, "--model", "model-a", "--leaves"],
    "ci": ["-i", RESULTS, "--model", "model-a", "-B", "50"],
    "per-app-ci": ["-i", RESULTS, "--model", "model-a", "-B", "50"],
    "decompose": ["-i", RESULTS, "--model", "model-a"],
    "profile": ["-i", RESULTS],
    "regret": ["-i", RESULTS, "--sims", "50", "-B", "50"],
    "simulate-coverage-base": ["--R", "1,3", "--trials", "1000"],
    "simulate-coverage-suite": ["--condition", "homogeneous", "--experiments", "2", "-B", "20"],
    "simulate-b-sensitivity": ["--condition", "homogeneous", "--experiments", "2", "--B-list", "10,20"],
    "simulate-replay": ["--p", "0.3", "--k", "5", "--mc", "10000"],
    "integrity-check": ["--profiles", str(WALLET / "profiles"), "--instances", str(WALLET / "instances.json")],
}
STOCHASTIC = ["ci", "per-app-ci", "regret", "simulate-coverage-base", "simulate-coverage-suite",
              "simulate-b-sensitivity", "simulate-replay"]


def _json(capsys, argv):
    code = run(argv + ["--format", "json"])
    out = capsys.readouterr().out
    assert code == EXIT_OK, out
    return json.loads(out), out


@pytest.mark.parametrize("command", sorted(SMALL))
def test_every_command_runs(command, capsys):
    env, _ = _json(capsys, [command] + SMALL[command] + (["--seed", "1"] if command in STOCHASTIC else []))
    assert env["command"] == command
    assert set(env) == {"tool_version", "command", "seed", "params", "metrics"}
    for fmt in ("text", "delimited"):
        assert run([command] + SMALL[command] + ["--format", fmt] + (["--seed", "1"] if command in STOCHASTIC else [])) == 0
    capsys.readouterr()


@pytest.mark.parametrize("command", STOCHASTIC)
def test_thread_cap_does_not_change_bytes(command, capsys):
    base = [command] + SMALL[command] + ["--seed", "7"]
    _, one = _json(capsys, base + ["--threads", "1"])
    _, two = _json(capsys, base + ["--threads", "2"])
    assert one == two


def test_seed_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("HIERBENCH_SEED", "42")
    env, first = _json(capsys, ["ci"] + SMALL["ci"])
    assert env["seed"] == 42
    _, second = _json(capsys, ["ci"] + SMALL["ci"] + ["--seed", "42"])
    assert first == second


def test_threads_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("HIERBENCH_THREADS", "0")
    # invalid cap from the environment falls back to 1
    assert run(["ci"] + SMALL["ci"] + ["--seed", "1"]) == EXIT_OK
    assert run(["ci"] + SMALL["ci"] + ["--seed", "1", "--threads", "0"]) == EXIT_USAGE
    capsys.readouterr()


def test_replay_example(capsys):
    env, _ = _json(capsys, ["simulate-replay", "--p", "0.3", "--k", "5", "--mc", "100000", "--seed", "3"])
    row = env["metrics"]["rows"][0]
    assert round(row["analytic_pass_at_k"], 5) == 0.83193
    assert row["within_3se"]


def test_integrity_example(capsys):
    env, _ = _json(capsys, ["integrity-check"] + SMALL["integrity-check"])
    m = env["metrics"]
    assert m["matrix"] == {"send-500": {"poor": False, "rich": True}, "send-100": {"poor": True, "rich": True}}
    assert m["excluded"] == [{"instance": "send-500", "profile": "rich", "reason": "pre-solved"}]
    assert m["compatible"] == {"send-500": [], "send-100": ["poor", "rich"]}


def test_ingest_counts(capsys):
    env, _ = _json(capsys, ["ingest"] + SMALL["ingest"])
    assert "model-a" in json.dumps(env["metrics"])


def test_usage_errors(capsys, tmp_path):
    assert run([]) == EXIT_USAGE
    assert run(["nope"]) == EXIT_USAGE
    assert run(["ci"]) == EXIT_USAGE
    assert run(["ci", "-i", RESULTS, "--statistic", "median"]) == EXIT_USAGE
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert run(["ci", "-i", RESULTS, "--config", str(cfg)]) == EXIT_USAGE
    capsys.readouterr()


def test_data_errors(capsys, tmp_path):
    assert run(["report", "-i", str(tmp_path / "missing.jsonl")]) == EXIT_DATA
    assert run(["report", "-i", RESULTS]) == EXIT_DATA  # two models, none picked
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json}\n")
    assert run(["report", "-i", str(bad)]) == EXIT_DATA
    assert run(["report", "-i", RESULTS, "--model", "model-a", "-o", str(tmp_path / "no" / "dir" / "x")]) == EXIT_DATA
    capsys.readouterr()


def test_output_file(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run(["report", "-i", RESULTS, "--model", "model-a", "--format", "json", "-o", str(out)]) == EXIT_OK
    assert capsys.readouterr().out == ""
    assert json.loads(out.read_text())["command"] == "report"


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nreplicates = 30\nalpha = 0.1\nresample-axes = false\nmodel = model-a\n")
    env, _ = _json(capsys, ["ci", "-i", RESULTS, "--seed", "1", "--config", str(cfg)])
    p = env["params"]
    assert (p["replicates"], p["alpha"], p["resample_axes"], p["model"]) == (30, 0.1, False, "model-a")
    env, _ = _json(capsys, ["ci", "-i", RESULTS, "--seed", "1", "--config", str(cfg), "-B", "40", "--resample-axes"])
    assert (env["params"]["replicates"], env["params"]["resample_axes"], env["params"]["alpha"]) == (40, True, 0.1)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hierbench.cli", "simulate-replay", "--p", "1", "--k", "2",
                           "--mc", "10000", "--seed", "0", "--format", "delimited"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0].split("\t")[0] == "k"
    bad = subprocess.run([sys.executable, "-m", "hierbench.cli", "ci"], capture_output=True, text=True)
    assert bad.returncode == 2
