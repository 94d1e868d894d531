import csv
import json
import subprocess
import sys

import pytest

from cornn.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def test_help_exits_zero():
    proc = subprocess.run([sys.executable, "-m", "cornn", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "verify" in proc.stdout


def test_unknown_flag_is_usage_error():
    proc = subprocess.run([sys.executable, "-m", "cornn", "generate", "adding", "--bogus"],
                          capture_output=True, text=True)
    assert proc.returncode == 1 and "usage" in proc.stderr


def test_missing_subcommand():
    with pytest.raises(SystemExit) as info:
        run()
    assert info.value.code == 1


def test_generate_adding(tmp_path):
    out = tmp_path / "a.jsonl"
    assert run("generate", "adding", "--T", 50, "--count", 20, "--seed", 7, "--out", out) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 21 and json.loads(lines[0])["header"]["seed"] == 7
    out2 = tmp_path / "b.jsonl"
    run("generate", "adding", "--T", 50, "--count", 20, "--seed", 7, "--out", out2)
    assert out.read_text().splitlines()[1:] == out2.read_text().splitlines()[1:]


def test_generate_lorenz(tmp_path):
    out = tmp_path / "l.jsonl"
    assert run("generate", "lorenz96", "--F", 8, "--count", 2, "--length", 10, "--out", out) == 0
    rec = json.loads(out.read_text().splitlines()[1])
    assert len(rec["inputs"][0]) == 5


def _config(tmp_path, **kw):
    cfg = {"task": "adding", "hidden_size": 8, "dt": 0.05, "gamma": 2.0, "eps": 2.0, "lr": 0.01,
           "batch": 4, "epochs": 2, "steps_per_epoch": 3, "T": 10, "valid_count": 8,
           "test_count": 8}
    cfg.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_train_and_evaluate(tmp_path, capsys):
    cfg = _config(tmp_path)
    out = tmp_path / "run"
    assert run("train", "--config", cfg, "--out", out, "--quiet") == 0
    for name in ("metrics.csv", "checkpoint.bin", "config.json", "summary.json"):
        assert (out / name).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["steps"] == 6 and 0 <= summary["eta_fraction_sqrt_dt"] <= 1
    capsys.readouterr()
    assert run("evaluate", "--config", cfg, "--checkpoint", out / "checkpoint.bin") == 0
    value = json.loads(capsys.readouterr().out)["value"]
    assert value == pytest.approx(summary["test_metric"], rel=1e-12)


def test_train_missing_field(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"task": "adding", "hidden_size": 8}))
    assert run("train", "--config", path, "--out", tmp_path / "x") == 1
    assert "missing required field" in capsys.readouterr().err


def test_train_divergence_exit_code(tmp_path):
    cfg = _config(tmp_path, lr=1e300, optimizer="sgd", gamma=1.0, eps=1.0)
    assert run("train", "--config", cfg, "--out", tmp_path / "d", "--quiet") == 3
    assert (tmp_path / "d" / "checkpoint.bin").exists()


def test_simulate(tmp_path):
    sho, uc, ordc = tmp_path / "sho.csv", tmp_path / "uc.csv", tmp_path / "ord.csv"
    assert run("simulate", "SHO", "--T", 1, "--h", 0.01, "--out", sho) == 0
    assert run("simulate", "UC", "--T", 5, "--h", 0.01, "--out", uc) == 0
    assert run("simulate", "ord", "--T", 5, "--h", 0.01, "--out", ordc) == 0

    def first_col(p):
        rows = list(csv.reader(p.read_text().splitlines()[1:]))
        return [r[1] for r in rows[1:]]

    assert first_col(uc) == first_col(ordc)


def test_simulate_duffing_blowup(tmp_path, capsys):
    assert run("simulate", "DUFF", "--T", 10, "--h", 0.001, "--out", tmp_path / "d.csv") == 3
    assert "blow-up" in capsys.readouterr().err


def test_verify_gradcheck(tmp_path):
    out = tmp_path / "g.jsonl"
    assert run("verify", "gradcheck", "--trials", 50, "--seed", 1, "--out", out) == 0
    assert len(out.read_text().splitlines()) == 1 + 100


def test_verify_energy_precondition_not_met(tmp_path, capsys):
    code = run("verify", "energy", "--variant", "explicit", "--eps", 0.3, "--trials", 3,
               "--out", tmp_path / "e.jsonl")
    assert code == 0
    assert "condition not met" in capsys.readouterr().out


@pytest.mark.parametrize("suite", ["energy", "sensitivity", "jacobian"])
def test_verify_suites_pass(tmp_path, suite):
    assert run("verify", suite, "--trials", 3, "--N", 40, "--out", tmp_path / "v.jsonl") == 0


def test_verify_ltd(tmp_path):
    prof = tmp_path / "ltd.csv"
    assert run("verify", "ltd", "--task", "adding", "--T", 200, "--csv", prof,
               "--out", tmp_path / "l.jsonl") == 0
    rows = prof.read_text().splitlines()
    assert rows[1] == "n,k,magnitude,reference,tanh_magnitude" and len(rows) == 2 + 200


def test_verify_ode_bounds(tmp_path):
    assert run("verify", "ode-bounds", "--trials", 3, "--T", 2, "--out", tmp_path / "o.jsonl") == 0


def test_verify_reports_violation(tmp_path, monkeypatch):
    import cornn.cli as cli
    from cornn.diagnostics import BoundReport

    monkeypatch.setattr(cli, "_verify_energy", lambda args, rng: [BoundReport("x", 2.0, 1.0)])
    assert run("verify", "energy", "--out", tmp_path / "v.jsonl") == 2


def test_sweep(tmp_path):
    cfg = _config(tmp_path, epochs=1)
    out = tmp_path / "s.csv"
    assert run("sweep", "--config", cfg, "--grid", "eps=2,1", "gamma=3,1", "--out", out) == 0
    rows = list(csv.reader(out.read_text().splitlines()[1:]))
    assert rows[0] == ["eps", "gamma", "metric", "value", "diverged"]
    keys = [(float(r[0]), float(r[1])) for r in rows[1:]]
    assert keys == sorted(keys) and len(keys) == 4


def test_sweep_single_point_equals_train(tmp_path):
    from cornn.train import TrainConfig, train

    cfg = _config(tmp_path, epochs=1)
    out = tmp_path / "s.csv"
    run("sweep", "--config", cfg, "--grid", "eps=2", "gamma=2", "--out", out)
    row = list(csv.reader(out.read_text().splitlines()[2:]))[0]
    assert float(row[3]) == train(TrainConfig.load(cfg)).test_metric


def test_sweep_bad_grid(tmp_path):
    cfg = _config(tmp_path)
    assert run("sweep", "--config", cfg, "--grid", "eps=-1") == 1
