import csv
import json

from matpipe import model_ir as mir
from matpipe import planner as pln
from matpipe.cli import main

from test_orchestrator import exhaustive_dataset, stump_spec


def test_full_command_chain(tmp_path, capsys):
    model = tmp_path / "model.json"
    entries = tmp_path / "entries.jsonl"
    topo_file = tmp_path / "net.json"
    plan_file = tmp_path / "plan.json"
    data_file = tmp_path / "data.csv"
    report_file = tmp_path / "report.json"

    spec = stump_spec()
    mir.save_model(spec, model)
    mir.save_dataset_csv(exhaustive_dataset(spec), data_file)

    assert main(["topo-gen", "fat_tree", "-p", "k=4", "-o", str(topo_file)]) == 0
    assert "20 devices" in capsys.readouterr().out

    assert main(["translate", str(model), "-o", str(entries)]) == 0
    out = capsys.readouterr().out
    assert "dt model" in out and "TCAM" in out

    assert main([
        "plan", "--entries", str(entries), "--topology", str(topo_file),
        "-o", str(plan_file),
    ]) == 0
    out = capsys.readouterr().out
    assert "objective:" in out and "solver:" in out
    plan = pln.load_plan(plan_file)
    assert len(plan.placements) == 2  # stump: one layer stage plus predict

    assert main([
        "deploy", "--entries", str(entries), "--topology", str(topo_file),
        "--plan", str(plan_file),
    ]) == 0
    out = capsys.readouterr().out
    assert "stages used" in out and "dt_layer[0]" in out

    assert main([
        "infer", "--model", str(model), "--topology", str(topo_file),
        "--features", "0,3", "--features", "2,0",
    ]) == 0
    out = capsys.readouterr().out
    assert "0: 0,3 -> 0" in out
    assert "1: 2,0 -> 1" in out

    assert main([
        "eval", "--model", str(model), "--topology", str(topo_file),
        "--dataset", str(data_file), "--out", str(report_file),
    ]) == 0
    out = capsys.readouterr().out
    assert "kappa_vs_oracle: 1.000000" in out
    assert "accuracy: 1.000000" in out
    report = json.loads(report_file.read_text())
    assert report["metrics"]["kappa_vs_oracle"] == 1.0
    assert report["counters"]["rows"] == 16


def test_bench_command_writes_csv(tmp_path, capsys):
    out_csv = tmp_path / "bench.csv"
    assert main([
        "bench", "--setup", "fat_tree:k=4", "--stages", "2,5",
        "--path-limit", "8", "--out", str(out_csv),
    ]) == 0
    printed = capsys.readouterr().out
    assert "worst instance:" in printed
    with open(out_csv, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0][0] == "topology"
    assert len(rows) == 3  # header + two program sizes


def test_cli_error_paths(tmp_path, capsys):
    assert main(["translate", str(tmp_path / "missing.json"), "-o", "x"]) == 2
    assert "error:" in capsys.readouterr().err

    model = tmp_path / "model.json"
    mir.save_model(stump_spec(), model)
    assert main([
        "infer", "--model", str(model), "--topology", "fat_tree:k=4",
    ]) == 2
    assert "--features or --dataset" in capsys.readouterr().err

    entries = tmp_path / "entries.jsonl"
    assert main(["translate", str(model), "-o", str(entries)]) == 0
    capsys.readouterr()
    assert main([
        "plan", "--entries", str(entries), "--topology", "fat_tree:k=4",
        "--w-latency", "-1", "-o", str(tmp_path / "p.json"),
    ]) == 2
    assert "positive" in capsys.readouterr().err


def test_weights_are_normalized(tmp_path, capsys):
    model = tmp_path / "model.json"
    entries = tmp_path / "entries.jsonl"
    plan_file = tmp_path / "plan.json"
    mir.save_model(stump_spec(), model)
    assert main(["translate", str(model), "-o", str(entries)]) == 0
    assert main([
        "plan", "--entries", str(entries), "--topology", "fat_tree:k=4",
        "--w-latency", "2", "--w-devices", "5", "--w-overhead", "3",
        "-o", str(plan_file),
    ]) == 0
    assert plan_file.exists()


def test_topo_gen_capacity_overrides(tmp_path):
    out = tmp_path / "net.json"
    assert main([
        "topo-gen", "fat_tree", "-p", "k=4", "--stage-count", "7",
        "--tcam", "99", "-o", str(out),
    ]) == 0
    from matpipe import topology as topo

    net = topo.load_network(out)
    info = next(iter(net.devices.values()))
    assert info.stage_count == 7
    assert info.tcam_capacity == 99
