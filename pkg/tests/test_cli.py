"""Operator-surface tests: subcommands, exit codes, artifacts, replay."""

import filecmp
import json
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from histocount.cli import main
from histocount.network import CountHistogramNet, ModelConfig, load_model
from histocount.rng import stream
from histocount.svgplot import histogram_pair_svg, line_chart_svg


def tree_bytes(root):
    """Relative path -> content bytes, for whole-tree comparisons."""
    out = {}
    for base, _dirs, files in os.walk(root):
        for name in files:
            path = os.path.join(base, name)
            out[os.path.relpath(path, root)] = open(path, "rb").read()
    return out


GEN_ARGS = ["--size", "32", "--preset", "desk", "--seed", "7"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("data") / "ds")
    assert main(["gen", "--n", "12", *GEN_ARGS, "--out", out]) == 0
    return out


@pytest.fixture(scope="module")
def trained(tmp_path_factory, dataset):
    out = str(tmp_path_factory.mktemp("run") / "train")
    code = main([
        "train", "--data", dataset, "--epochs", "1", "--seed", "3",
        "--augment", "off", "--out", out,
    ])
    assert code == 0
    return out


class TestGen:
    def test_byte_identical_reruns(self, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(["gen", "--n", "10", *GEN_ARGS, "--out", a]) == 0
        assert main(["gen", "--n", "10", *GEN_ARGS, "--out", b]) == 0
        ta, tb = tree_bytes(a), tree_bytes(b)
        assert ta.keys() == tb.keys()
        assert all(ta[k] == tb[k] for k in ta)

    def test_n_zero_valid_empty_dataset(self, tmp_path):
        out = str(tmp_path / "empty")
        assert main(["gen", "--n", "0", *GEN_ARGS, "--out", out]) == 0
        manifest = json.load(open(os.path.join(out, "manifest.json")))
        assert manifest["n_scenes"] == 0

    def test_run_json_written(self, dataset):
        run = json.load(open(os.path.join(dataset, "run.json")))
        assert run["command"] == "gen"
        assert run["params"]["generator"]["width"] == 32

    def test_config_override_file(self, tmp_path):
        cfg_path = tmp_path / "over.json"
        cfg_path.write_text(json.dumps({"count_mean": 2.0, "count_std": 0.0}))
        out = str(tmp_path / "ds")
        assert main(["gen", "--n", "3", *GEN_ARGS, "--config", str(cfg_path),
                     "--out", out]) == 0
        run = json.load(open(os.path.join(out, "run.json")))
        assert run["params"]["generator"]["count_mean"] == 2.0


class TestTrain:
    def test_epochs_zero_checkpoints_initialization(self, tmp_path, dataset):
        out = str(tmp_path / "t0")
        assert main(["train", "--data", dataset, "--epochs", "0", "--seed", "3",
                     "--out", out]) == 0
        net = load_model(os.path.join(out, "model.ckpt"))
        fresh = CountHistogramNet(ModelConfig.desk(image_size=32), stream(3, 0))
        for name in fresh.param_names():
            assert net.params[name].data.tobytes() == fresh.params[name].data.tobytes()

    def test_log_schema_plain(self, trained):
        lines = open(os.path.join(trained, "train_log.jsonl")).read().splitlines()
        assert len(lines) == 1
        entry = json.loads(lines[0])
        assert {"l_count", "l_kl", "l_wl", "l_total"} <= set(entry["train"])
        assert "l_kl2" not in entry["train"]

    def test_log_schema_dsn(self, tmp_path, dataset):
        out = str(tmp_path / "tdsn")
        assert main(["train", "--data", dataset, "--epochs", "1", "--dsn", "on",
                     "--seed", "3", "--augment", "off", "--out", out]) == 0
        entry = json.loads(open(os.path.join(out, "train_log.jsonl")).readline())
        assert {"l_kl2", "l_wl2", "l_kl4", "l_wl4"} <= set(entry["train"])

    def test_missing_dataset_exits_2(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nope"), "--epochs", "1",
                     "--out", str(tmp_path / "o")]) == 2


class TestEval:
    def test_baseline_average_on_training_set(self, tmp_path, dataset):
        out = str(tmp_path / "ev")
        assert main(["eval", "--data", dataset, "--baseline", "average",
                     "--out", out]) == 0
        report = json.load(open(os.path.join(out, "metrics.json")))
        # MAE of the mean predictor on its own fit data = mean absolute deviation
        from histocount.datasets import read_dataset

        scenes, _, _ = read_dataset(dataset)
        counts = np.array([s.count for s in scenes], dtype=float)
        mad = np.abs(counts - counts.mean()).mean()
        assert report["mae"] == pytest.approx(mad, abs=1e-9)
        csv = open(os.path.join(out, "metrics.csv")).read().splitlines()
        assert csv[0] == "method,MAE,kld,wt_L1,isec,chi2,corr,bhatt"
        assert csv[1].startswith("average8,")

    def test_model_eval_and_svgs(self, tmp_path, dataset, trained):
        out = str(tmp_path / "evm")
        ckpt = os.path.join(trained, "model.ckpt")
        assert main(["eval", "--data", dataset, "--ckpt", ckpt, "--out", out]) == 0
        svgs = sorted(os.listdir(os.path.join(out, "svg")))
        assert len(svgs) == 12
        for name in svgs[:3]:
            tree = ET.parse(os.path.join(out, "svg", name))
            assert tree.getroot().tag.endswith("svg")
        row = open(os.path.join(out, "metrics.csv")).read().splitlines()[1]
        assert row.startswith("histocount8,")

    def test_bins_mismatch_exits_2(self, tmp_path, dataset, trained):
        out = str(tmp_path / "evb")
        ckpt = os.path.join(trained, "model.ckpt")
        assert main(["eval", "--data", dataset, "--ckpt", ckpt, "--bins", "16",
                     "--out", out]) == 2

    def test_eval_is_deterministic(self, tmp_path, dataset, trained):
        ckpt = os.path.join(trained, "model.ckpt")
        outs = []
        for tag in ("x", "y"):
            out = str(tmp_path / tag)
            assert main(["eval", "--data", dataset, "--ckpt", ckpt, "--out", out]) == 0
            outs.append(tree_bytes(out))
        assert outs[0] == outs[1]


class TestPredict:
    def test_outputs_and_schema(self, tmp_path, dataset, trained):
        out = str(tmp_path / "pred")
        ckpt = os.path.join(trained, "model.ckpt")
        assert main(["predict", "--data", dataset, "--ckpt", ckpt,
                     "--limit", "3", "--out", out]) == 0
        preds = sorted(os.listdir(os.path.join(out, "predictions")))
        assert preds == ["000000.json", "000001.json", "000002.json"]
        first = json.load(open(os.path.join(out, "predictions", preds[0])))
        assert set(first) >= {"count", "hist", "map_side", "map_sum"}
        assert len(first["hist"]) == 8


class TestReplay:
    def test_gen_replay_matches_bytes(self, tmp_path, dataset):
        out = str(tmp_path / "replayed")
        assert main(["replay", "--run", os.path.join(dataset, "run.json"),
                     "--out", out]) == 0
        ta, tb = tree_bytes(dataset), tree_bytes(out)
        assert ta.keys() == tb.keys()
        assert all(ta[k] == tb[k] for k in ta)


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["gen", "--n", "1", "--frobnicate", "--out", "/tmp/x"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_command_is_usage_error(self):
        assert main(["explode"]) == 1

    def test_bad_fraction_is_usage_error(self, tmp_path, dataset):
        assert main(["ablate", "--data", dataset, "--fractions", "0,1.0",
                     "--epochs", "1", "--out", str(tmp_path / "ab")]) == 1

    def test_numeric_failure_exits_3_and_keeps_checkpoint(self, tmp_path, dataset):
        out = str(tmp_path / "nan")
        code = main(["train", "--data", dataset, "--epochs", "40", "--lr", "1e150",
                     "--seed", "3", "--augment", "off", "--out", out])
        assert code == 3
        assert os.path.exists(os.path.join(out, "model.ckpt"))
        load_model(os.path.join(out, "model.ckpt"))  # still parseable


class TestSvgEmission:
    def test_histogram_chart_well_formed(self):
        svg = histogram_pair_svg([1, 2, 0], [0.5, 1.5, 1.0], [0, 10, 20, 30], "demo")
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")
        assert "demo" in svg

    def test_line_chart_well_formed(self):
        svg = line_chart_svg([0.25, 0.5, 1.0], {"MAE": [3.0, 2.0, 1.5]},
                             title="t", xlabel="x", ylabel="y")
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")

    def test_charts_are_deterministic(self):
        a = histogram_pair_svg([1, 2], [2, 1], [0, 1, 2], "s")
        b = histogram_pair_svg([1, 2], [2, 1], [0, 1, 2], "s")
        assert a == b
