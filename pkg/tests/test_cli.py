import json

import numpy as np
import pytest
from click.testing import CliRunner

from drfg.cli import main
from drfg.metrics import read_trials_csv
from drfg.store import read_feature_store


def invoke(*args):
    result = CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)
    return result


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    res = invoke("demo-setup", root, "--per-class", 10, "--seed", 1)
    assert res.exit_code == 0, res.output
    return root


@pytest.fixture(scope="module")
def extracted(workspace):
    res = invoke("extract", "--config", workspace / "config.json")
    assert res.exit_code == 0, res.output
    return workspace


def test_demo_setup_layout(workspace):
    cfg = json.loads((workspace / "config.json").read_text())
    assert cfg["dataset"] == "dataset"
    assert sorted(p.name for p in (workspace / "dataset").iterdir()) == \
        ["COVID", "Normal", "Viral Pneumonia"]
    assert len(list((workspace / "backbones").glob("*.onnx"))) == 8


def test_extract_writes_store(extracted):
    fs = read_feature_store(extracted / "features.bin")
    assert fs.values.shape == (30, 9984)
    assert fs.classes == ["COVID", "Normal", "Viral Pneumonia"]
    assert fs.sample_ids[0].startswith("COVID/")


def test_experiment_and_metrics(extracted, tmp_path):
    res = invoke("experiment", "--config", extracted / "config.json", "--trials", 2)
    assert res.exit_code == 0, res.output
    out = extracted / "results"
    rows = read_trials_csv(out / "trials.csv")
    assert {name for _, name, _ in rows} == {"slp", "mlp", "svm"} and len(rows) == 6
    assert (out / "tsne_test.csv").is_file()

    res = invoke("metrics", "--trials", out / "trials.csv", "--out", tmp_path / "agg.json")
    assert res.exit_code == 0
    printed = json.loads(res.output)
    assert printed["svm"]["n_trials"] == 2
    assert json.loads((tmp_path / "agg.json").read_text())["classifiers"]["slp"]["n_trials"] == 2


@pytest.mark.filterwarnings("ignore:precision undefined")
def test_benchmark(extracted):
    res = invoke("benchmark", "--config", extracted / "config.json", "--backbone", "mobilenet",
                 "--trials", 1)
    assert res.exit_code == 0, res.output
    assert read_feature_store(extracted / "benchmark_mobilenet.bin").dim == 1024
    assert (extracted / "results/benchmark_mobilenet/trials.csv").is_file()


def test_benchmark_unknown_backbone(extracted):
    res = CliRunner().invoke(main, ["benchmark", "--config", str(extracted / "config.json"),
                                    "--backbone", "alexnet"])
    assert res.exit_code == 1 and "alexnet" in res.output


def test_encode_then_reuse(extracted, tmp_path):
    out = tmp_path / "enc"
    res = invoke("encode", "--config", extracted / "config.json", "--out-dir", out)
    assert res.exit_code == 0, res.output
    train, test = read_feature_store(out / "latent_train.bin"), read_feature_store(out / "latent_test.bin")
    assert train.dim == test.dim == 16 and len(train) + len(test) == 30
    assert (out / "autoencoder.ckpt").is_file()

    again = tmp_path / "enc2"
    res = invoke("encode", "--config", extracted / "config.json", "--out-dir", again,
                 "--checkpoint-dir", out)
    assert "loaded checkpoints" in res.output
    # float32 checkpoint round trip
    np.testing.assert_allclose(read_feature_store(again / "latent_test.bin").values, test.values,
                               rtol=1e-4, atol=1e-4)


def test_tsne_command(extracted, tmp_path):
    res = invoke("tsne", "--store", extracted / "features.bin", "--out", tmp_path / "e.csv",
                 "--perplexity", 5, "--iterations", 260, "--standardize")
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "sample_id,label,x,y" and len(lines) == 31


def test_tsne_infeasible_perplexity(extracted, tmp_path):
    res = CliRunner().invoke(main, ["tsne", "--store", str(extracted / "features.bin"),
                                    "--out", str(tmp_path / "e.csv")])
    assert res.exit_code == 1 and "error" in res.output
