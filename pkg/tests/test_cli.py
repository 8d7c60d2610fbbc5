import json

import pytest

from smoothswitch.cli import main

BASE = {"n_samples": 1000, "worker_count": 5, "time_budget": 2.0, "eval_interval": 0.5,
        "rounds": 2, "step_size": 20}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(BASE))
    return path


def test_run_writes_series(config_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(config_file), "--out", str(out)]) == 0
    assert (out / "series_hybrid.csv").exists() and (out / "summary.csv").exists()
    lines = (out / "series_asynchronous.csv").read_text().splitlines()
    assert lines[0].startswith("policy,round,time")
    assert len(lines) == 1 + 2 * 4
    assert "hybrid" in capsys.readouterr().out


def test_run_policies_and_seed_flags(config_file, tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", str(config_file), "--out", str(out), "--seed", "4",
                 "--policies", "async,hybrid:K=1"]) == 0
    a = (out / "series_asynchronous.csv").read_text().splitlines()[1:]
    h = (out / "series_hybrid_K_1.csv").read_text().splitlines()[1:]
    assert [l.split(",", 1)[1] for l in a] == [l.split(",", 1)[1] for l in h]
    assert json.loads((out / "config.json").read_text())["config"]["seed"] == 4


def test_run_is_byte_deterministic(config_file, tmp_path):
    for d in ("a", "b"):
        assert main(["run", "--config", str(config_file), "--out", str(tmp_path / d)]) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_sweep_command(config_file, tmp_path, capsys):
    out = tmp_path / "sw"
    code = main(["sweep", "--config", str(config_file), "--out", str(out),
                 "--axis", "delay_std", "--values", "0.25,0.5"])
    assert code == 0
    table = (out / "sweep_delay_std.csv").read_text().splitlines()
    assert table[0] == "metric,0.25,0.5"
    assert (out / "sweep_delay_std_summary.csv").exists()


def test_compare_command(config_file, tmp_path, capsys):
    out = tmp_path / "o"
    main(["run", "--config", str(config_file), "--out", str(out)])
    code = main(["compare", str(out / "series_hybrid.csv"), str(out / "series_asynchronous.csv"),
                 "--out", str(tmp_path / "cmp")])
    assert code == 0
    produced = (tmp_path / "cmp" / "summary.csv").read_text().splitlines()
    expected = [l for l in (out / "summary.csv").read_text().splitlines()
                if l.startswith("hybrid,asynchronous")]
    # values recomputed from the 9-digit CSVs agree with the in-memory summary to display precision
    got = [float(v) for v in produced[1].split(",")[2:5]]
    want = [float(v) for v in expected[0].split(",")[2:5]]
    assert got == pytest.approx(want, rel=1e-6, abs=1e-9)


def test_config_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"mystery": 3}))
    assert main(["run", "--config", str(bad)]) == 1
    assert "mystery" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["sweep", "--config", str(bad)]) == 1


def test_runtime_error_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**BASE, "lr": 1e308}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "NumericError" in capsys.readouterr().err


def test_compare_mixed_policies_is_config_error(config_file, tmp_path):
    out = tmp_path / "o"
    main(["run", "--config", str(config_file), "--out", str(out), "--policies", "async,hybrid"])
    from smoothswitch.harness import emit_csv, read_series_csv
    both = read_series_csv(out / "series_hybrid.csv") + read_series_csv(out / "series_asynchronous.csv")
    emit_csv(both, tmp_path / "mixed.csv")
    assert main(["compare", str(tmp_path / "mixed.csv"), str(out / "series_asynchronous.csv")]) == 1
    assert main(["compare", str(tmp_path / "mixed.csv"), str(out / "series_asynchronous.csv"),
                 "--ours-policy", "hybrid", "--out", str(tmp_path)]) == 0
