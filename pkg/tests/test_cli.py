import json

from dncf.cli import main

from conftest import rating_lines


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def data_args(paths):
    return ["--train", str(paths.train), "--test", str(paths.test),
            "--negatives", str(paths.negatives)]


def test_usage_errors_exit_1(capsys):
    code, _, err = run_cli(capsys, "train")
    assert code == 1 and "error" in err
    code, _, err = run_cli(capsys, "train", "--bogus-flag")
    assert code == 1


def test_missing_files_exit_2(capsys, tmp_path):
    code, _, err = run_cli(capsys, "train",
                           "--train", str(tmp_path / "no.train.rating"),
                           "--test", str(tmp_path / "no.test.rating"),
                           "--negatives", str(tmp_path / "no.test.negative"))
    assert code == 2


def test_train_then_eval_checkpoint(capsys, synth_paths, tmp_path):
    ckpt = tmp_path / "m.ckpt"
    metrics = tmp_path / "m.jsonl"
    code, out, _ = run_cli(capsys, "train", *data_args(synth_paths),
                           "--model", "dgmf", "--factors", "8",
                           "--epochs", "4", "--lr", "0.01", "--batch", "64",
                           "--seed", "5", "--deterministic",
                           "--checkpoint", str(ckpt), "--metrics", str(metrics))
    assert code == 0
    summary = json.loads(out.strip())
    assert {"best_epoch", "best_val_hr10", "epochs_run", "test_hr10",
            "test_ndcg10", "seconds"} <= set(summary)
    assert summary["seconds"] == 0.0

    lines = [json.loads(l) for l in metrics.read_text().splitlines()]
    assert lines[0]["epoch"] == 0
    assert all(set(l) == {"epoch", "hr", "ndcg", "users", "seconds"}
               for l in lines)

    code, out, _ = run_cli(capsys, "eval", *data_args(synth_paths),
                           "--checkpoint", str(ckpt), "--deterministic")
    assert code == 0
    report = json.loads(out.strip())
    # the saved checkpoint reproduces the in-run test evaluation exactly
    assert report["hr"][9] == summary["test_hr10"]
    assert report["ndcg"][9] == summary["test_ndcg10"]


def test_eval_itempop_without_checkpoint(capsys, synth_paths):
    code, out, _ = run_cli(capsys, "eval", *data_args(synth_paths),
                           "--model", "itempop")
    assert code == 0
    report = json.loads(out.strip())
    assert len(report["hr"]) == 10
    assert report["users"] == 30


def test_eval_dimension_mismatch_exits_2(capsys, synth_paths, tmp_path):
    other = tmp_path / "other"
    from dncf import generate_dataset
    paths2 = generate_dataset(other, num_users=12, num_items=60,
                              min_interactions=5, max_interactions=9, seed=9)
    ckpt = tmp_path / "small.ckpt"
    code, _, _ = run_cli(capsys, "train", *data_args(paths2),
                         "--model", "dgmf", "--factors", "4", "--epochs", "0",
                         "--checkpoint", str(ckpt))
    assert code == 0
    code, _, err = run_cli(capsys, "eval", *data_args(synth_paths),
                           "--checkpoint", str(ckpt))
    assert code == 2
    assert "expects" in err


def test_eval_requires_model_or_checkpoint(capsys, synth_paths):
    code, _, err = run_cli(capsys, "eval", *data_args(synth_paths))
    assert code == 1


def test_config_file_and_flag_precedence(capsys, synth_paths, tmp_path):
    cfg_file = tmp_path / "run.json"
    cfg_file.write_text(json.dumps({
        "model": "dgmf", "factors": 8, "epochs": 1, "lr": 0.01,
        "batch_size": 64, "seed": 2, "deterministic": True,
    }))
    # config-file epochs=1; the flag overrides to 2
    code, out, _ = run_cli(capsys, "train", *data_args(synth_paths),
                           "--config", str(cfg_file), "--epochs", "2")
    assert code == 0
    assert json.loads(out.strip())["epochs_run"] == 2


def test_config_file_unknown_key(capsys, synth_paths, tmp_path):
    cfg_file = tmp_path / "run.json"
    cfg_file.write_text(json.dumps({"momentum": 0.9}))
    code, _, err = run_cli(capsys, "train", *data_args(synth_paths),
                           "--config", str(cfg_file))
    assert code == 1
    assert "momentum" in err


def test_sweep_writes_csv_and_figure(capsys, synth_paths, tmp_path):
    out_csv = tmp_path / "sweep.csv"
    code, out, _ = run_cli(capsys, "sweep", *data_args(synth_paths),
                           "--model", "dgmf", "--epochs", "1", "--lr", "0.01",
                           "--batch", "64", "--deterministic",
                           "--axis", "factors", "--values", "4,8",
                           "--out", str(out_csv))
    assert code == 0
    info = json.loads(out.strip())
    assert info["rows"] == 2
    assert out_csv.exists()
    assert (tmp_path / "sweep.png").exists()
    header = out_csv.read_text().splitlines()[0]
    assert header == "axis_value,hr@10,ndcg@10,epochs,seconds"


def test_sweep_layers_values_parsing(capsys, synth_paths, tmp_path):
    out_csv = tmp_path / "layers.csv"
    code, out, _ = run_cli(capsys, "sweep", *data_args(synth_paths),
                           "--model", "dmlp", "--factors", "4",
                           "--epochs", "1", "--lr", "0.01", "--batch", "64",
                           "--deterministic", "--axis", "layers",
                           "--values", "8,4;0", "--out", str(out_csv),
                           "--no-figures")
    assert code == 0
    rows = out_csv.read_text().splitlines()
    assert rows[1].startswith("8x4,")
    assert rows[2].startswith("0,")


def test_report_renders_figures(capsys, synth_paths, tmp_path):
    metrics = tmp_path / "m.jsonl"
    code, _, _ = run_cli(capsys, "train", *data_args(synth_paths),
                         "--model", "dgmf", "--factors", "4", "--epochs", "2",
                         "--lr", "0.01", "--batch", "64", "--deterministic",
                         "--metrics", str(metrics))
    assert code == 0
    code, out, _ = run_cli(capsys, "report", "--metrics", str(metrics),
                           "--out-dir", str(tmp_path / "figs"))
    assert code == 0
    figures = json.loads(out.strip())["figures"]
    assert len(figures) == 2
    for f in figures:
        assert f.endswith(".png")


def test_report_requires_an_input(capsys):
    code, _, err = run_cli(capsys, "report", "--out-dir", "x")
    assert code == 1


def test_synth_roundtrip(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "synth", "--out-dir", str(tmp_path / "d"),
                           "--users", "10", "--items", "50",
                           "--min-interactions", "4", "--max-interactions", "8",
                           "--seed", "2")
    assert code == 0
    paths = json.loads(out.strip())
    assert len(rating_lines(paths["train"])) > 0
    from dncf import load_dataset
    store, instances = load_dataset(paths["train"], paths["test"],
                                    paths["negatives"])
    assert store.num_users == 10
    assert len(instances) == 10


def test_pretrain_fuse_cli(capsys, synth_paths, tmp_path):
    code, out, _ = run_cli(capsys, "pretrain-fuse", *data_args(synth_paths),
                           "--factors", "4", "--layers", "16,8,4",
                           "--epochs", "2", "--lr", "0.01", "--batch", "64",
                           "--deterministic", "--seed", "3",
                           "--checkpoint", str(tmp_path / "fused.ckpt"))
    assert code == 0
    summary = json.loads(out.strip())
    assert {"dgmf_test_hr10", "dmlp_test_hr10", "fused_val_hr10",
            "dnmf_test_hr10"} <= set(summary)
    assert (tmp_path / "fused.ckpt").exists()


def test_pretrain_fuse_rejects_mismatched_embed(capsys, synth_paths):
    code, _, err = run_cli(capsys, "pretrain-fuse", *data_args(synth_paths),
                           "--factors", "4", "--dmlp-embed", "8",
                           "--epochs", "1")
    assert code == 1
