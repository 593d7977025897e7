import json

import pytest

from qekf.cli import main

LINEAR = {
    "scenario": "linear",
    "params": {"gamma": 4.0, "basis": 8},
    "sim": {"dt": 1e-3, "T": 0.05, "seed": 1},
    "filters": ["qekf", {"kind": "sme", "basis": 8}],
    "trials": 2,
}


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_simulate_writes_records(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", write_config(tmp_path, LINEAR), "--out", str(out)]) == 0
    assert (out / "record_0000.csv").exists() and (out / "record_0001.csv").exists()
    assert (out / "manifest.json").exists()


def test_filter_on_saved_record(tmp_path):
    cfg = write_config(tmp_path, LINEAR)
    sim = tmp_path / "sim"
    assert main(["simulate", "--config", cfg, "--out", str(sim), "--trials", "1"]) == 0
    out = tmp_path / "filt"
    code = main(["filter", "--config", cfg, "--out", str(out),
                 "--record", str(sim / "record_0000.csv")])
    assert code == 0
    assert (out / "qekf.csv").exists() and (out / "sme-8.csv").exists()
    assert main(["filter", "--config", cfg, "--out", str(tmp_path / "f2")]) == 0
    assert (tmp_path / "f2" / "record.csv").exists()


def test_compare_is_reproducible_from_manifest(tmp_path, capsys):
    cfg = write_config(tmp_path, LINEAR)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["compare", "--config", cfg, "--out", str(a)]) == 0
    assert "qekf" in capsys.readouterr().out
    assert main(["compare", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    assert (a / "bands.csv").read_bytes() == (b / "bands.csv").read_bytes()


def test_seed_override_changes_results(tmp_path):
    cfg = write_config(tmp_path, LINEAR)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["compare", "--config", cfg, "--out", str(a)]) == 0
    assert main(["compare", "--config", cfg, "--out", str(b), "--seed", "99"]) == 0
    assert (a / "metrics.csv").read_bytes() != (b / "metrics.csv").read_bytes()
    manifest = json.loads((b / "manifest.json").read_text())
    assert manifest["seeds"]["master_seed"] == 99


def test_sweep(tmp_path, capsys):
    doc = {**LINEAR, "trials": 1, "sweep": {"param": "gamma", "values": [2.0, 4.0]}}
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", write_config(tmp_path, doc), "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "param,value,filter_name,mise,divergences,trials"
    assert len(lines) == 1 + 2 * 2
    assert (out / "gamma-2.0" / "metrics.csv").exists()


def test_bench(tmp_path, capsys):
    doc = {"scenario": "kerr", "bench": {"bases": [4, 6], "modes": [1], "repeats": 5}}
    out = tmp_path / "bench"
    assert main(["bench", "--config", write_config(tmp_path, doc), "--out", str(out)]) == 0
    assert len((out / "timing.csv").read_text().splitlines()) == 3
    assert "slope" in capsys.readouterr().out


@pytest.mark.parametrize(
    "doc",
    [{"scenario": "opo"}, {"filters": ["ukf"]}, {"sim": {"dt": -1}}, {"params": {"basis": 2}}],
)
def test_bad_config_exits_2(tmp_path, doc, capsys):
    assert main(["compare", "--config", write_config(tmp_path, doc)]) == 2
    assert "config error" in capsys.readouterr().err


def test_missing_inputs_exit_2(tmp_path):
    assert main(["compare", "--config", str(tmp_path / "none.json")]) == 2
    cfg = write_config(tmp_path, LINEAR)
    assert main(["filter", "--config", cfg, "--out", str(tmp_path),
                 "--record", str(tmp_path / "none.csv")]) == 2


def test_simulation_breakdown_exits_3(tmp_path, capsys):
    doc = {"scenario": "counting", "params": {"basis": 8}, "sim": {"dt": 0.1, "T": 1.0}}
    assert main(["simulate", "--config", write_config(tmp_path, doc),
                 "--out", str(tmp_path / "o")]) == 3
    assert "diverged" in capsys.readouterr().err


def test_usage_error():
    with pytest.raises(SystemExit):
        main([])
