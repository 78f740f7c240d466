import csv
import json

import pytest

from tempshift.cli import main

from test_metrics import MLP_ORIGINAL, MLP_RANDOM


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    path = root / "synth.csv"
    assert main(["synth-gen", "--out", str(path), "--set", "synth.n=1500", "--set", "synth.days=30"]) == 0
    return path


def _cfg(tmp_path, data, extra=""):
    p = tmp_path / "exp.cfg"
    p.write_text(
        f"""# small experiment
data.path = {data}
data.label = label
split.presets = original, ours
model.hidden = 8
train.max_epochs = 3
train.batch_size = 256
seeds = 0, 1, 2
{extra}"""
    )
    return p


def test_synth_gen_writes_sidecar(data):
    side = json.loads(data.with_suffix(".json").read_text())
    assert side["n"] == 1500
    with data.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:2] == ["timestamp", "x0"] and rows[0][-1] == "label"
    assert len(rows) == 1501


def test_run_counts_and_artifacts(tmp_path, data):
    out = tmp_path / "out"
    assert main(["run", "--config", str(_cfg(tmp_path, data)), "--out", str(out)]) == 0
    with (out / "scores.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    assert {r["split"] for r in rows} == {"original", "ours"}
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["presets"]) == {"original", "ours"}
    assert summary["presets"]["original"]["pct_improvement"] == 0
    assert summary["presets"]["ours"]["training_lag_seconds"] <= summary["presets"]["original"]["training_lag_seconds"]
    assert (out / "splitplan_ours.json").exists()


def test_diagnostics_and_byte_reproducibility(tmp_path, data):
    extra = "diagnostics.heatmaps = true\ndiagnostics.loss_curves = true\ndiagnostics.pgm = true\n"
    cfg = _cfg(tmp_path, data, extra)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(b), "--jobs", "2"]) == 0
    names = sorted(p.name for p in a.iterdir())
    for expected in ("heatmap_raw.csv", "heatmap_raw.pgm", "heatmap_repr_ours.csv", "loss_curve_original.csv"):
        assert expected in names
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_failed_run_writes_error_manifest(tmp_path, data):
    cfg = _cfg(tmp_path, data, "data.features = x0, nope\n")
    out = tmp_path / "bad"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) != 0
    doc = json.loads((out / "errors.json").read_text())
    assert doc["errors"]


def test_unknown_key_is_config_error(tmp_path, data):
    assert main(["run", "--config", str(_cfg(tmp_path, data, "train.lrr = 1\n"))]) == 2
    assert main(["run", "--config", str(_cfg(tmp_path, data)), "--set", "train.lr=abc"]) == 2


def test_split_inspect(tmp_path, data, capsys):
    assert main(["split-inspect", "--set", f"data.path={data}", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS  val(a) = val(b)" in out
    assert (tmp_path / "splitplan_random.json").exists()


def test_heatmap_command(tmp_path, data, capsys):
    assert main(["heatmap", "--set", f"data.path={data}", "--out", str(tmp_path), "--max-lag", "10"]) == 0
    assert (tmp_path / "heatmap_raw.csv").exists()
    assert "detected periods" in capsys.readouterr().out


def test_compare_published_rows(tmp_path, capsys):
    header = "method,split,dataset,seed,task,metric,value,best_epoch,epochs_run\n"
    names = ["HI", "EO", "HD", "SH", "CT", "DE", "MR", "WE"]
    lines = [header]
    for split, vals in (("original", MLP_ORIGINAL), ("random", MLP_RANDOM)):
        for i, (name, v) in enumerate(zip(names, vals)):
            task, metric = ("classification", "auc") if i < 3 else ("regression", "rmse")
            lines.append(f"mlp,{split},{name},0,{task},{metric},{v},0,1\n")
    p = tmp_path / "scores.csv"
    p.write_text("".join(lines))
    assert main(["compare", str(p), "--baseline", "mlp/original"]) == 0
    out = capsys.readouterr().out
    row = next(l for l in out.splitlines() if l.startswith("mlp/random"))
    assert abs(float(row.split()[1]) - 4.30) <= 0.02
