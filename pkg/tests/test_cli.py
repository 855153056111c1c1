import json

import pytest
import torch

from dynsep.harness import ExperimentConfig
from dynsep.harness.cli import main
from dynsep.harness.workbench import build_models, save_models

SMALL = dict(voice_categories=1, music_categories=1, background_categories=0,
             clips_per_category=4, scene_seeds=[3],
             budget=2, episodes=1, seeds=[0], agent="stand")


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    path.write_text(json.dumps(SMALL))
    return path


@pytest.fixture(scope="module")
def model_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("models")
    torch.manual_seed(0)
    separator, policy = build_models(ExperimentConfig(**{
        k: tuple(v) if isinstance(v, list) else v for k, v in SMALL.items()}))
    save_models(out, separator, policy)
    return out


def test_gen_bank_writes_bank_and_manifest(config_path, tmp_path, capsys):
    out = tmp_path / "bank"
    assert main(["gen-bank", "--config", str(config_path),
                 "--out", str(out)]) == 0
    assert (out / "bank_manifest.json").exists() or any(out.iterdir())
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["command"] == "gen-bank"
    assert "wrote" in capsys.readouterr().out


def test_eval_smoke(config_path, model_dir, tmp_path, capsys):
    out = tmp_path / "eval"
    assert main(["eval", "--config", str(config_path), "--out", str(out),
                 "--models", str(model_dir)]) == 0
    assert (out / "eval.csv").exists()
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["command"] == "eval"
    assert "SI-SDR" in capsys.readouterr().out


def test_trace_smoke(config_path, model_dir, tmp_path):
    out = tmp_path / "trace"
    assert main(["trace", "--config", str(config_path), "--out", str(out),
                 "--models", str(model_dir)]) == 0
    lines = (out / "trace.jsonl").read_text().strip().splitlines()
    assert len(lines) == SMALL["budget"]


def test_invalid_config_exits_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"k": 1}))
    code = main(["gen-bank", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert code == 1
    record = json.loads(capsys.readouterr().err.strip())
    assert record["error"] == "ConfigurationError"
    assert "k" in record["message"]


def test_missing_config_file_exits_nonzero(tmp_path, capsys):
    code = main(["gen-bank", "--config", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "o")])
    assert code == 1
    record = json.loads(capsys.readouterr().err.strip())
    assert record["error"] == "FileNotFoundError"
