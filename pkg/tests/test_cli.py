from __future__ import annotations

import json

from click.testing import CliRunner

from localsched import __version__
from localsched.cli import main

FAST_KNOBS = {"l": 2, "k": 2, "reps": 1, "max_L": 16}


def invoke(*args, env=None):
    return CliRunner().invoke(main, [str(a) for a in args], env=env, catch_exceptions=False)


def gen(tmp_path, kind, *params, seed=0):
    res = invoke("gen", kind, *[f"--param={p}" for p in params], "--seed", seed, "--out", tmp_path)
    assert res.exit_code == 0, res.output
    return json.loads(res.output)


def test_version():
    res = invoke("--version")
    assert res.exit_code == 0 and __version__ in res.output


def test_gen_prints_manifest(tmp_path):
    m = gen(tmp_path, "signal-plus-noise", "signal=4", "beta=4")
    assert m["signal_ids"] == [1, 2, 3, 4] and (tmp_path / "manifest.json").exists()
    res = invoke("gen", "random-paths", "--param", "machines")
    assert res.exit_code == 2 and "key=value" in res.output


def test_run_ok_and_deterministic(tmp_path):
    gen(tmp_path, "random-paths", "machines=8", "jobs=10")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": "schedule", "instance": "instance.json", "knobs": FAST_KNOBS}))
    a = invoke("run", "--config", cfg, "--seed", 3)
    b = invoke("run", "--config", cfg, "--seed", 3)
    assert a.exit_code == 0
    ra, rb = json.loads(a.output), json.loads(b.output)
    ra.pop("timing"), rb.pop("timing")
    assert ra == rb and ra["config"]["master_seed"] == 3


def test_run_missing_instance(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": "schedule", "instance": "absent.json"}))
    res = invoke("run", "--config", cfg)
    assert res.exit_code == 2
    assert "instance not found" in res.output


def test_run_invalid_config_lists_violations(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": "verify-hash", "instance": "x.json", "L": 3, "extra": 1}))
    res = invoke("run", "--config", cfg)
    assert res.exit_code == 2
    assert "unknown key 'extra'" in res.output and "mode verify-hash needs 'l'" in res.output


def test_run_writes_csv_and_env_override(tmp_path):
    gen(tmp_path, "random-paths", "machines=6", "jobs=4")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": "schedule", "instance": "instance.json", "knobs": FAST_KNOBS}))
    out = tmp_path / "o"
    assert invoke("run", "--config", cfg, "--out", out, "--csv").exit_code == 0
    assert (out / "trace.csv").exists()
    env_out = tmp_path / "e"
    assert invoke("run", "--config", cfg, "--out", out, env={"LOCALSCHED_OUT": str(env_out)}).exit_code == 0
    assert (env_out / "report.json").exists()


def test_verify_and_estimate(tmp_path):
    gen(tmp_path, "random-paths", "machines=6", "jobs=4")
    inst = tmp_path / "instance.json"
    res = invoke("verify", "--instance", inst, "--L", 8, "--l", 1, "--knob-k", 3)
    doc = json.loads(res.output)
    assert len(doc["results"]["verdicts"]) == 3
    res = invoke("estimate", "--instance", inst, "--L", 8, "--l", 1, "--trials", 50)
    est = json.loads(res.output)["results"]["estimate"]
    assert est["trials"] == 50
    res = invoke("estimate", "--instance", inst, "--L", 8, "--l", 1, "--trials", 0)
    assert res.exit_code == 2 and "trials must be >= 1" in res.output


def test_certify_and_reverify(tmp_path):
    inst = tmp_path / "inst.json"
    inst.write_text(json.dumps({"machines": 4, "jobs": [{"ind": 1, "seq": [0]}, {"ind": 2, "seq": [1, 2]}]}))
    out = tmp_path / "c"
    res = invoke("certify", "--instance", inst, "--L", 8, "--l", 1, "--knob-k", 3, "--trials", 20, "--out", out)
    assert res.exit_code == 0, res.output
    cert = out / "certificate.json"
    assert cert.exists()
    res = invoke("certify", "--reverify", cert)
    assert res.exit_code == 0 and json.loads(res.output)["reverified"]
    res = invoke("certify", "--instance", inst, "--L", 8, "--l", 1, "--budget", 0)
    assert res.exit_code == 2


def test_route_config(tmp_path):
    gen(tmp_path, "tree-demand", "nodes=8", "pairs=4")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "mode": "route", "graph": "graph.json", "demand": "demand.json",
        "knobs": {"l": 1, "k": 3, "reps": 2, "max_L": 64}, "reference_regime": False,
    }))
    res = invoke("run", "--config", cfg)
    doc = json.loads(res.output)
    assert res.exit_code == (0 if doc["ok"] else 1)
    assert doc["invariants"]["endpoints"]


def test_bench(tmp_path):
    gen(tmp_path, "random-paths", "machines=6", "jobs=4")
    res = invoke("bench", "--instance", tmp_path / "instance.json", "--trials", 2, "--knob-l", 2, "--knob-k", 2)
    assert res.exit_code == 0
    assert len(json.loads(res.output)["results"]["runs"]) == 2
