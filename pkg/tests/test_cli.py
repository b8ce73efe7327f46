from __future__ import annotations

import json
from dataclasses import replace

import pytest

from noshow.cli import main
from noshow.config import dump_kv
from noshow.datagen import config_to_kv, default_config


@pytest.fixture(scope="module")
def tiny_config_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "clinic.kv"
    config = replace(
        default_config(seed=1234),
        n_providers=2,
        n_patients=300,
        horizon_days=90,
        pending_days=5,
    )
    dump_kv(config_to_kv(config), path)
    return path


@pytest.fixture(scope="module")
def generated(tmp_path_factory, tiny_config_file):
    ws = tmp_path_factory.mktemp("ws")
    raw = ws / "data" / "raw.csv"
    code = main(["--config", str(tiny_config_file), "--workspace", str(ws), "generate", "--out", str(raw)])
    assert code == 0
    return ws, raw


def test_generate_writes_records_and_truth(generated):
    ws, raw = generated
    assert raw.exists()
    truth = raw.with_name("raw-truth.csv")
    assert truth.exists()
    header = raw.read_text().splitlines()[0]
    assert header.startswith("appointment_id,provider_id")


def test_generate_seed_override_changes_output(tmp_path, tiny_config_file, generated):
    _, raw = generated
    other = tmp_path / "raw2.csv"
    main(["--config", str(tiny_config_file), "--seed", "999", "generate", "--out", str(other)])
    assert other.read_bytes() != raw.read_bytes()


@pytest.fixture(scope="module")
def trained_model(tmp_path_factory, generated):
    ws, raw = generated
    model_path = ws / "models" / "forest.json"
    code = main(
        [
            "train",
            "--data", str(raw),
            "--model-out", str(model_path),
            "--n-trees", "20",
            "--min-leaf-size", "20",
        ]
    )
    assert code == 0
    return model_path


def test_train_freezes_loadable_model(trained_model):
    from noshow.forest import load_model

    model = load_model(trained_model)
    assert model.metadata["global_rate"] > 0
    assert "validation_auc" in model.metadata


def test_train_tune_picks_from_grid(tmp_path, generated, monkeypatch, capsys):
    import noshow.forest

    _, raw = generated
    monkeypatch.setattr(
        noshow.forest,
        "DEFAULT_TUNING_GRID",
        ({"n_trees": 5, "min_leaf_size": 10}, {"n_trees": 8, "min_leaf_size": 40}),
    )
    model_path = tmp_path / "tuned.json"
    assert main(["train", "--data", str(raw), "--model-out", str(model_path), "--tune"]) == 0
    out = capsys.readouterr().out
    assert out.count("candidate") == 2

    from noshow.forest import load_model

    model = load_model(model_path)
    assert (model.hyperparams.n_trees, model.hyperparams.min_leaf_size) in {(5, 10), (8, 40)}


def test_predict_and_heatmap_roundtrip(tmp_path, generated, trained_model):
    ws, raw = generated
    scored = tmp_path / "scored.csv"
    assert main(["predict", "--model", str(trained_model), "--data", str(raw), "--out", str(scored)]) == 0
    heat = tmp_path / "heat.json"
    assert main(["heatmap", "--scored", str(scored), "--out", str(heat)]) == 0
    doc = json.loads(heat.read_text())
    assert doc["cells"]
    total = sum(c["expected"] for c in doc["cells"])
    assert total > 0


def test_pipeline_run_and_serve(tmp_path, generated, trained_model, tiny_config_file):
    ws, raw = generated
    pipeline_cfg = tmp_path / "pipeline.kv"
    dump_kv({"raw_csv": str(raw), "model": str(trained_model)}, pipeline_cfg)
    workspace = tmp_path / "pipe-ws"

    assert main(["--config", str(pipeline_cfg), "--workspace", str(workspace), "run"]) == 0
    pointer = workspace / "snapshots" / "current.json"
    assert pointer.exists()
    snapshot_id = json.loads(pointer.read_text())["snapshot_id"]
    assert (workspace / "snapshots" / snapshot_id / "scored.csv").exists()

    # rerun is an all-skip no-op with identical outputs
    before = (workspace / "build" / "scored.csv").read_bytes()
    assert main(["--config", str(pipeline_cfg), "--workspace", str(workspace), "run"]) == 0
    assert (workspace / "build" / "scored.csv").read_bytes() == before

    from fastapi.testclient import TestClient

    from noshow.service import create_app

    app = create_app(workspace / "snapshots")
    with TestClient(app) as client:
        health = client.get("/healthz")
        assert health.status_code == 200
        assert health.json()["snapshot_id"] == snapshot_id
        heat = client.get("/api/v1/heatmap")
        assert heat.status_code == 200
        assert heat.json()["cells"]


def test_pipeline_failure_exit_code(tmp_path, trained_model):
    pipeline_cfg = tmp_path / "pipeline.kv"
    bad_raw = tmp_path / "missing.csv"
    dump_kv({"raw_csv": str(bad_raw), "model": str(trained_model)}, pipeline_cfg)
    code = main(["--config", str(pipeline_cfg), "--workspace", str(tmp_path / "ws"), "run"])
    assert code != 0


def test_simulate_subcommand(tmp_path, tiny_config_file):
    out = tmp_path / "report.json"
    code = main(
        [
            "--config", str(tiny_config_file),
            "simulate",
            "--policies", "no-overbook,oracle-floor",
            "--replications", "10",
            "--out", str(out),
        ]
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert {row["policy"] for row in doc} == {"no-overbook", "oracle-floor"}


def test_ingest_subcommand_identity(tmp_path, generated):
    _, raw = generated
    out = tmp_path / "canonical.csv"
    assert main(["ingest", "--raw", str(raw), "--out", str(out)]) == 0
    assert out.read_bytes() == raw.read_bytes()  # generator emits sorted canonical CSV


def test_unknown_model_path_fails_cleanly(tmp_path):
    code = main(["predict", "--model", str(tmp_path / "nope.json"), "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "out.csv")])
    assert code == 1
