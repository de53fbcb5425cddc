"""End-to-end command-line flows, run in process via main(argv)."""

import json

import pytest

from tailadapt.cli import main
from tailadapt.data import read_dataset


def _config_file(tmp_path, data_path, **extra):
    cfg = {
        "dataset": {"kind": "file", "path": str(data_path)},
        "epochs_a": 2,
        "epochs_b": 1,
        "batch_size": 16,
        "checkpoint_path": str(tmp_path / "model.ltck"),
        "log_path": str(tmp_path / "log.jsonl"),
        "metrics_path": str(tmp_path / "metrics.json"),
    }
    cfg.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path, cfg


def _gen(tmp_path, capsys, classes=6, seed=3):
    out = tmp_path / "data.ltds"
    rc = main(["gen-data", "--kind", "exp", "--classes", str(classes),
               "--n-max", "40", "--rho", "10", "--dim", "8",
               "--test-per-class", "8", "--seed", str(seed), "--out", str(out)])
    assert rc == 0
    capsys.readouterr()
    return out


def test_gen_data_writes_a_readable_file(tmp_path, capsys):
    out = _gen(tmp_path, capsys)
    ds = read_dataset(out)
    assert ds.num_classes == 6
    assert ds.class_counts[0] == 40
    assert ds.feature_dim == 8


def test_gen_data_pareto_kind(tmp_path, capsys):
    out = tmp_path / "p.ltds"
    rc = main(["gen-data", "--kind", "pareto", "--classes", "5", "--n-max", "30",
               "--alpha", "3", "--dim", "6", "--out", str(out)])
    assert rc == 0
    ds = read_dataset(out)
    assert ds.class_counts[0] == 30
    assert all(a >= b for a, b in zip(ds.class_counts, ds.class_counts[1:]))


def test_train_eval_flow(tmp_path, capsys):
    data = _gen(tmp_path, capsys)
    cfg_path, cfg = _config_file(tmp_path, data)
    rc = main(["train", "--config", str(cfg_path)])
    out = capsys.readouterr().out
    assert rc == 0
    record = json.loads(out.splitlines()[0])
    assert record["mode"] == "two_phase"
    assert 0.0 <= record["overall"] <= 1.0

    rc = main(["eval", "--checkpoint", cfg["checkpoint_path"], "--data", str(data)])
    out = capsys.readouterr().out
    assert rc == 0
    metrics = json.loads(out)
    assert metrics["overall"] == record["overall"]


def test_train_mode_and_seed_overrides(tmp_path, capsys):
    data = _gen(tmp_path, capsys)
    cfg_path, _ = _config_file(tmp_path, data)
    rc = main(["train", "--config", str(cfg_path), "--mode", "phase_a_only",
               "--seed", "17"])
    out = capsys.readouterr().out
    assert rc == 0
    record = json.loads(out.splitlines()[0])
    assert record["mode"] == "phase_a_only" and record["seed"] == 17


def test_eval_lambda_override_changes_blend(tmp_path, capsys):
    data = _gen(tmp_path, capsys)
    cfg_path, cfg = _config_file(tmp_path, data, lam=0.5)
    # config files accept the spelled-out key as well
    raw = json.loads(cfg_path.read_text())
    raw["lambda"] = raw.pop("lam")
    cfg_path.write_text(json.dumps(raw))
    assert main(["train", "--config", str(cfg_path)]) == 0
    capsys.readouterr()

    rc = main(["eval", "--checkpoint", cfg["checkpoint_path"], "--data", str(data),
               "--lambda", "0.0"])
    zero = json.loads(capsys.readouterr().out)
    assert rc == 0
    rc = main(["eval", "--checkpoint", cfg["checkpoint_path"], "--data", str(data)])
    asis = json.loads(capsys.readouterr().out)
    assert rc == 0
    assert zero["per_class"] is not None and asis["per_class"] is not None


def test_eval_lambda_on_adapterless_checkpoint(tmp_path, capsys):
    data = _gen(tmp_path, capsys)
    cfg_path, cfg = _config_file(tmp_path, data)
    assert main(["train", "--config", str(cfg_path), "--mode", "phase_a_only"]) == 0
    capsys.readouterr()
    rc = main(["eval", "--checkpoint", cfg["checkpoint_path"], "--data", str(data),
               "--lambda", "0.4"])
    captured = capsys.readouterr()
    assert rc == 1
    assert "no adapter" in captured.err
    rc = main(["eval", "--checkpoint", cfg["checkpoint_path"], "--data", str(data),
               "--lambda", "0"])
    assert rc == 0


def test_unknown_config_key_is_a_diagnostic_failure(tmp_path, capsys):
    data = _gen(tmp_path, capsys)
    cfg_path, _ = _config_file(tmp_path, data)
    raw = json.loads(cfg_path.read_text())
    raw["optimizer"] = "adam"
    cfg_path.write_text(json.dumps(raw))
    rc = main(["train", "--config", str(cfg_path)])
    captured = capsys.readouterr()
    assert rc == 1
    assert "optimizer" in captured.err


def test_malformed_json_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    rc = main(["train", "--config", str(bad)])
    captured = capsys.readouterr()
    assert rc == 1 and "error:" in captured.err


def test_missing_files_fail_nonzero(tmp_path, capsys):
    rc = main(["train", "--config", str(tmp_path / "absent.json")])
    assert rc == 1
    rc = main(["eval", "--checkpoint", str(tmp_path / "absent.ltck"),
               "--data", str(tmp_path / "absent.ltds")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_sweep_lambda_table_output(tmp_path, capsys):
    data = _gen(tmp_path, capsys)
    cfg_path, _ = _config_file(tmp_path, data)
    rc = main(["sweep-lambda", "--config", str(cfg_path),
               "--values", "0,0.5", "--table"])
    out = capsys.readouterr().out
    assert rc == 0
    lines = out.splitlines()
    assert lines[0].startswith("lambda")
    assert len(lines) == 4  # header, rule, two rows


def test_sweep_lambda_jsonl_output(tmp_path, capsys):
    data = _gen(tmp_path, capsys)
    cfg_path, _ = _config_file(tmp_path, data)
    rc = main(["sweep-lambda", "--config", str(cfg_path), "--values", "0.2"])
    out = capsys.readouterr().out
    assert rc == 0
    row = json.loads(out)
    assert row["lambda"] == 0.2


def test_sweep_lambda_rejects_bad_values(tmp_path, capsys):
    data = _gen(tmp_path, capsys)
    cfg_path, _ = _config_file(tmp_path, data)
    with pytest.raises(SystemExit):
        main(["sweep-lambda", "--config", str(cfg_path), "--values", "0,zebra"])
    rc = main(["sweep-lambda", "--config", str(cfg_path), "--values", "0,7"])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_ablate_axes(tmp_path, capsys):
    data = _gen(tmp_path, capsys)
    cfg_path, _ = _config_file(tmp_path, data)
    rc = main(["ablate", "--config", str(cfg_path), "--axes", "balance_phase_b"])
    out = capsys.readouterr().out
    assert rc == 0
    rows = [json.loads(line) for line in out.splitlines()]
    assert {r["balance_phase_b"] for r in rows} == {True, False}

    rc = main(["ablate", "--config", str(cfg_path), "--axes", "nonsense"])
    captured = capsys.readouterr()
    assert rc == 1 and "nonsense" in captured.err


def test_unknown_subcommand_exits_nonzero():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
