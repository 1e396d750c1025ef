"""End-to-end command tests through main(); exit codes and artifacts."""

import json

import pytest

from locgclstm.cli import main
from locgclstm.data import SampleSet

from conftest import write_toy_dataset


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture
def prepared(tmp_path, toy_dataset):
    flow, adj = toy_dataset
    out = tmp_path / "prep"
    assert run(["prepare", "--flow", flow, "--adjacency", adj, "--out-dir", out]) == 0
    return out / "cache.bin"


def test_prepare_sample_count_and_summary(tmp_path, toy_dataset, capsys):
    flow, adj = toy_dataset
    out = tmp_path / "prep"
    code = run(["prepare", "--flow", flow, "--adjacency", adj, "--out-dir", out])
    assert code == 0
    printed = capsys.readouterr().out
    assert "nodes: 2" in printed
    assert "samples: 25" in printed  # 48 - 24 + 1
    assert "imputed: 0" in printed
    assert (out / "manifest.json").exists()
    samples = SampleSet.load(out / "cache.bin")
    assert len(samples) == 25
    assert samples.adjacency is not None


def test_prepare_reports_imputed_cells(tmp_path, capsys):
    flow, adj = write_toy_dataset(tmp_path, missing_cells={(10, 0)})
    out = tmp_path / "prep"
    assert run(["prepare", "--flow", flow, "--adjacency", adj, "--out-dir", out]) == 0
    assert "imputed: 1" in capsys.readouterr().out


def test_prepare_rejects_adjacency_node_outside_flow(tmp_path, capsys):
    flow, adj = write_toy_dataset(tmp_path, nodes=2, edges=((1, 0), (5, 0)))
    out = tmp_path / "prep"
    code = run(["prepare", "--flow", flow, "--adjacency", adj, "--out-dir", out])
    assert code == 2
    assert "no records" in capsys.readouterr().err


def test_prepare_test_days_mask(tmp_path, capsys):
    flow, adj = write_toy_dataset(tmp_path, steps=600)  # spans two days
    out = tmp_path / "prep"
    assert (
        run(
            ["prepare", "--flow", flow, "--adjacency", adj, "--out-dir", out,
             "--test-days", "2024-07-02"]
        )
        == 0
    )
    samples = SampleSet.load(out / "cache.bin")
    assert samples.test_mask is not None
    assert 0 < samples.test_mask.sum() < len(samples)


def train_args(cache, out, **kw):
    args = [
        "train", "--cache", cache, "--out-dir", out,
        "--epochs", kw.pop("epochs", 2), "--batch-size", 8,
        "--lr-max", 1e-3, "--lr-min", 1e-4, "--calra-cycles", 1,
        "--gcn-units", 4, "--units", 6, "--seed", kw.pop("seed", 7),
    ]
    for flag, value in kw.items():
        args += [f"--{flag.replace('_', '-')}", value]
    return args


def test_train_writes_artifacts(tmp_path, prepared):
    out = tmp_path / "run"
    assert run(train_args(prepared, out)) == 0
    assert (out / "checkpoint.bin").exists()
    assert (out / "checkpoint_best.bin").exists()
    history = (out / "history.csv").read_text().splitlines()
    assert history[0] == "epoch,lr,train_loss,val_RMSE,val_MAE,val_MAPE"
    assert len(history) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["settings"]["epochs"] == 2


def test_train_same_seed_bit_identical(tmp_path, prepared):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run(train_args(prepared, out_a, seed=7)) == 0
    assert run(train_args(prepared, out_b, seed=7)) == 0
    assert (out_a / "checkpoint.bin").read_bytes() == (out_b / "checkpoint.bin").read_bytes()
    assert (out_a / "history.csv").read_text() == (out_b / "history.csv").read_text()


def test_train_lstm_ablation_and_static_normalization(tmp_path, prepared):
    out = tmp_path / "ablate"
    assert run(train_args(prepared, out, model="lstm")) == 0
    from locgclstm.training import load_checkpoint

    model, cfg, _ = load_checkpoint(out / "checkpoint.bin")
    assert model.use_gcn is False

    out2 = tmp_path / "static"
    assert run(train_args(prepared, out2, normalization="static")) == 0
    model2, cfg2, _ = load_checkpoint(out2 / "checkpoint.bin")
    assert model2.normalization_mode == "static"
    assert cfg2.normalization_mode == "static"


def test_evaluate_neural_checkpoint(tmp_path, prepared):
    run_dir = tmp_path / "run"
    assert run(train_args(prepared, run_dir)) == 0
    out = tmp_path / "eval"
    code = run(
        ["evaluate", "--cache", prepared, "--checkpoint", run_dir / "checkpoint_best.bin",
         "--out-dir", out, "--per-road", "--chart", "--seed", 7]
    )
    assert code == 0
    assert (out / "metrics.csv").exists()
    assert (out / "metrics.txt").exists()
    pairs = (out / "pairs.csv").read_text().splitlines()
    assert pairs[0] == "sample,node,horizon,prediction,truth"
    per_road = (out / "per_road.csv").read_text().splitlines()
    assert len(per_road) == 1 + 2  # header + one row per node
    svg = (out / "chart.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg


def test_evaluate_persistence_needs_no_checkpoint(tmp_path, prepared, capsys):
    out = tmp_path / "eval"
    code = run(
        ["evaluate", "--cache", prepared, "--model", "persistence", "--out-dir", out,
         "--seed", 7]
    )
    assert code == 0
    assert "RMSE" in capsys.readouterr().out
    assert (out / "metrics.csv").exists()


def test_evaluate_neural_without_checkpoint_is_usage_error(tmp_path, prepared):
    assert (
        run(["evaluate", "--cache", prepared, "--out-dir", tmp_path / "x"]) == 4
    )


def test_evaluate_checkpoint_cache_mismatch(tmp_path, prepared):
    run_dir = tmp_path / "run"
    assert run(train_args(prepared, run_dir)) == 0
    other = tmp_path / "other"
    other.mkdir()
    flow2, adj2 = write_toy_dataset(other, nodes=3, edges=((1, 0), (2, 0)))
    prep2 = tmp_path / "prep2"
    assert run(["prepare", "--flow", flow2, "--adjacency", adj2, "--out-dir", prep2]) == 0
    code = run(
        ["evaluate", "--cache", prep2 / "cache.bin",
         "--checkpoint", run_dir / "checkpoint.bin", "--out-dir", tmp_path / "bad"]
    )
    assert code == 2


def test_predict_single_sample(tmp_path, prepared):
    run_dir = tmp_path / "run"
    assert run(train_args(prepared, run_dir)) == 0
    out = tmp_path / "pred"
    code = run(
        ["predict", "--cache", prepared, "--checkpoint", run_dir / "checkpoint.bin",
         "--sample", 3, "--out-dir", out]
    )
    assert code == 0
    rows = (out / "predictions.csv").read_text().splitlines()
    assert rows[0] == "sample,node,horizon,prediction"
    assert len(rows) == 1 + 2 * 12


def test_grid_search_single_cell(tmp_path, prepared):
    out = tmp_path / "grid"
    code = run(
        ["grid-search", "--cache", prepared, "--out-dir", out,
         "--batch-sizes", "8", "--units", "4", "--layers", "3",
         "--epochs", 1, "--lr-max", 1e-3, "--lr-min", 1e-4,
         "--calra-cycles", 1, "--gcn-units", 4, "--seed", 7]
    )
    assert code == 0
    rows = (out / "grid.csv").read_text().splitlines()
    assert rows[0].startswith("layers,units,batch_size,MSE,RMSE,MAE,MAPE,MdAE,MdAPE")
    assert len(rows) == 2
    assert rows[1].rstrip().endswith("*")


def test_grid_search_four_cells(tmp_path, prepared):
    out = tmp_path / "grid"
    code = run(
        ["grid-search", "--cache", prepared, "--out-dir", out,
         "--batch-sizes", "8,16", "--units", "4,6", "--layers", "3",
         "--epochs", 1, "--lr-max", 1e-3, "--lr-min", 1e-4,
         "--calra-cycles", 1, "--gcn-units", 4, "--seed", 7]
    )
    assert code == 0
    rows = (out / "grid.csv").read_text().splitlines()
    assert len(rows) == 5
    assert sum(row.rstrip().endswith("*") for row in rows[1:]) == 1


def test_compare_single_model(tmp_path, prepared, capsys):
    out = tmp_path / "cmp"
    code = run(
        ["compare", "--cache", prepared, "--models", "persistence", "--out-dir", out,
         "--seed", 7]
    )
    assert code == 0
    table = (out / "compare.csv").read_text().splitlines()
    assert table[0] == "metric,persistence"
    assert len(table) == 6


def test_compare_deduplicates_with_warning(tmp_path, prepared, capsys):
    out = tmp_path / "cmp"
    code = run(
        ["compare", "--cache", prepared, "--models", "persistence,persistence",
         "--out-dir", out, "--seed", 7]
    )
    assert code == 0
    assert "duplicate model" in capsys.readouterr().err


def test_compare_unknown_model_usage_error(tmp_path, prepared, capsys):
    code = run(
        ["compare", "--cache", prepared, "--models", "arima", "--out-dir", tmp_path / "x"]
    )
    assert code == 4
    assert "unknown model" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path, toy_dataset, capsys):
    flow, adj = toy_dataset
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# toy config\nstride = 2\nimpute_k = 3\n")
    out = tmp_path / "prep"
    assert (
        run(["prepare", "--flow", flow, "--adjacency", adj, "--out-dir", out,
             "--config", cfg]) == 0
    )
    assert "samples: 13" in capsys.readouterr().out  # (48-24)//2 + 1
    out2 = tmp_path / "prep2"
    assert (
        run(["prepare", "--flow", flow, "--adjacency", adj, "--out-dir", out2,
             "--config", cfg, "--stride", 4]) == 0
    )
    assert "samples: 7" in capsys.readouterr().out  # flag beats config file


def test_config_env_var(tmp_path, toy_dataset, capsys, monkeypatch):
    flow, adj = toy_dataset
    cfg = tmp_path / "env.cfg"
    cfg.write_text("stride = 3\n")
    monkeypatch.setenv("LOCGCLSTM_CONFIG", str(cfg))
    out = tmp_path / "prep"
    assert run(["prepare", "--flow", flow, "--adjacency", adj, "--out-dir", out]) == 0
    assert "samples: 9" in capsys.readouterr().out  # (48-24)//3 + 1


def test_bad_config_key_rejected(tmp_path, toy_dataset):
    flow, adj = toy_dataset
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("warp_speed = 9\n")
    assert (
        run(["prepare", "--flow", flow, "--adjacency", adj,
             "--out-dir", tmp_path / "o", "--config", cfg]) == 2
    )


def test_missing_file_is_validation_error(tmp_path):
    code = run(
        ["prepare", "--flow", tmp_path / "nope.csv", "--adjacency", tmp_path / "nah.csv",
         "--out-dir", tmp_path / "o"]
    )
    assert code == 2


def test_evaluate_memorized_training_fold_near_zero(tmp_path):
    # a heavily overfit checkpoint scored on its own training fold
    flow, adj = write_toy_dataset(tmp_path, steps=28)  # 5 samples
    prep = tmp_path / "prep"
    assert run(["prepare", "--flow", flow, "--adjacency", adj, "--out-dir", prep]) == 0
    cache = prep / "cache.bin"
    run_dir = tmp_path / "run"
    assert (
        run(["train", "--cache", cache, "--out-dir", run_dir, "--epochs", 800,
             "--batch-size", 4, "--lr-max", 1e-2, "--lr-min", 1e-2,
             "--calra-cycles", 1, "--gcn-units", 4, "--units", 8,
             "--bias-l2-lambda", 0.0, "--seed", 7]) == 0
    )
    out = tmp_path / "eval"
    assert (
        run(["evaluate", "--cache", cache, "--checkpoint", run_dir / "checkpoint.bin",
             "--out-dir", out, "--eval-on", "train", "--seed", 7]) == 0
    )
    import csv as csv_mod

    with open(out / "metrics.csv") as fh:
        values = {row["metric"]: row["value"] for row in csv_mod.DictReader(fh)}
    flow_scale = 20.0  # toy flows sit around 20
    assert float(values["RMSE"]) < 0.05 * flow_scale


def test_train_with_fixed_test_days_split(tmp_path):
    flow, adj = write_toy_dataset(tmp_path, steps=600)
    prep = tmp_path / "prep"
    assert (
        run(["prepare", "--flow", flow, "--adjacency", adj, "--out-dir", prep,
             "--test-days", "2024-07-02"]) == 0
    )
    out = tmp_path / "run"
    code = run(
        ["train", "--cache", prep / "cache.bin", "--out-dir", out, "--split", "fixed",
         "--epochs", 1, "--batch-size", 32, "--lr-max", 1e-3, "--lr-min", 1e-4,
         "--calra-cycles", 1, "--gcn-units", 4, "--units", 6, "--seed", 3]
    )
    assert code == 0
    # a cache without the mask cannot be trained with the fixed split
    prep2 = tmp_path / "prep2"
    assert run(["prepare", "--flow", flow, "--adjacency", adj, "--out-dir", prep2]) == 0
    assert (
        run(["train", "--cache", prep2 / "cache.bin", "--out-dir", tmp_path / "r2",
             "--split", "fixed", "--epochs", 1, "--seed", 3]) == 2
    )


def test_grid_search_flags_failed_cells_and_continues(tmp_path, prepared):
    out = tmp_path / "grid"
    code = run(
        ["grid-search", "--cache", prepared, "--out-dir", out,
         "--batch-sizes", "0,8", "--units", "4", "--layers", "3",
         "--epochs", 1, "--lr-max", 1e-3, "--lr-min", 1e-4,
         "--calra-cycles", 1, "--gcn-units", 4, "--seed", 7]
    )
    assert code == 0
    rows = (out / "grid.csv").read_text().splitlines()
    assert len(rows) == 3
    assert "batch_size" in rows[0]
    failed = [r for r in rows[1:] if "batch_size must be" in r]
    assert len(failed) == 1
