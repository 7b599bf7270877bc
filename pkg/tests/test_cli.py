import json
from pathlib import Path

import numpy as np
import pytest

from megdecode.cli import main
from megdecode.io_utils import read_json, write_json


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Shared tiny dataset + one trained run for the eval-family commands."""
    root = tmp_path_factory.mktemp("cli")
    spec = {
        "task": "windows",
        "channels": 8,
        "samples": 40,
        "sample_rate_hz": 250.0,
        "snr": 1.0,
        "splits": {
            "train": {"per_class_counts": [30, 30, 30, 30]},
            "validation": {"per_class_counts": [10, 10, 10, 10]},
            "test": {"per_class_counts": [10, 10, 10, 10]},
        },
    }
    write_json(root / "gen.json", spec)
    assert main(["gen-data", "--spec", str(root / "gen.json"),
                 "--out", str(root / "data"), "--seed", "5"]) == 0
    run = {
        "task": "phoneme",
        "preset": "tiny",
        "data": {
            "train": str(root / "data/train.megw"),
            "validation": str(root / "data/validation.megw"),
            "test": str(root / "data/test.megw"),
        },
        "model": {"num_layers": 1, "hidden": 16, "num_heads": 2, "ffn_dim": 32,
                  "depthwise_kernel": 5},
        "train": {"learning_rate": 0.003, "batch_size": 32, "patience": 5,
                  "max_epochs": 10},
        "seeds": [0, 1],
        "out_dir": str(root / "run"),
    }
    write_json(root / "run.json", run)
    assert main(["train", "--config", str(root / "run.json")]) == 0
    return root


class TestGenData:
    def test_byte_identical_for_same_spec_and_seed(self, workspace, tmp_path):
        spec_path = workspace / "gen.json"
        for out in ("a", "b"):
            assert main(["gen-data", "--spec", str(spec_path),
                         "--out", str(tmp_path / out), "--seed", "12"]) == 0
        a = (tmp_path / "a" / "train.megw").read_bytes()
        b = (tmp_path / "b" / "train.megw").read_bytes()
        assert a == b

    def test_prints_class_counts(self, workspace, tmp_path, capsys):
        spec = {
            "task": "windows", "channels": 2, "samples": 8, "sample_rate_hz": 250.0,
            "splits": {"train": {"per_class_counts": [97, 3]}},
        }
        write_json(tmp_path / "gen.json", spec)
        assert main(["gen-data", "--spec", str(tmp_path / "gen.json"),
                     "--out", str(tmp_path / "out"), "--seed", "1"]) == 0
        out = capsys.readouterr().out
        assert "[97, 3]" in out

    def test_malformed_spec_exits_2(self, tmp_path, capsys):
        write_json(tmp_path / "bad.json", {"task": "windows", "splits": {"train": {"bogus": 1}}})
        code = main(["gen-data", "--spec", str(tmp_path / "bad.json"),
                     "--out", str(tmp_path / "out")])
        assert code == 2
        assert "bogus" in capsys.readouterr().err

    def test_missing_spec_exits_3(self, tmp_path):
        code = main(["gen-data", "--spec", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "out"), "--seed", "0"])
        assert code == 3

    def test_seed_echoed_when_drawn(self, tmp_path, capsys):
        spec = {
            "task": "windows", "channels": 2, "samples": 8, "sample_rate_hz": 250.0,
            "splits": {"train": {"per_class_counts": [2]}},
        }
        write_json(tmp_path / "gen.json", spec)
        assert main(["gen-data", "--spec", str(tmp_path / "gen.json"),
                     "--out", str(tmp_path / "out")]) == 0
        assert "seed:" in capsys.readouterr().out


class TestTrain:
    def test_outputs_exist(self, workspace):
        run_dir = workspace / "run"
        assert (run_dir / "manifest.json").exists()
        assert (run_dir / "seed0.megc").exists()
        assert (run_dir / "seed1.megc").exists()
        assert (run_dir / "seed0.log.jsonl").exists()
        assert (run_dir / "effective_config.json").exists()
        manifest = read_json(run_dir / "manifest.json")
        assert len(manifest["seeds"]) == 2
        assert all(e["status"] == "ok" for e in manifest["seeds"])

    def test_prints_best_validation_f1(self, workspace, capsys, tmp_path):
        run = read_json(workspace / "run.json")
        run["seeds"] = [0]
        run["out_dir"] = str(tmp_path / "run")
        write_json(tmp_path / "run.json", run)
        assert main(["train", "--config", str(tmp_path / "run.json")]) == 0
        out = capsys.readouterr().out
        assert "validation F1-macro" in out

    def test_flag_overrides_config(self, workspace, tmp_path):
        run = read_json(workspace / "run.json")
        run["out_dir"] = str(tmp_path / "ignored")
        write_json(tmp_path / "run.json", run)
        assert main(["train", "--config", str(tmp_path / "run.json"),
                     "--seeds", "0", "--out", str(tmp_path / "actual")]) == 0
        assert (tmp_path / "actual" / "seed0.megc").exists()
        assert not (tmp_path / "ignored").exists()

    def test_paper_preset_model_dimensions(self, workspace, tmp_path):
        # instantiating the full-size presets just to inspect the config
        from megdecode.cli import _preset_model

        phon = _preset_model("phoneme", "paper")
        assert (phon.num_layers, phon.num_heads, phon.ffn_dim, phon.depthwise_kernel) == (7, 12, 2048, 127)
        speech = _preset_model("speech", "paper")
        assert (speech.num_layers, speech.num_heads, speech.ffn_dim, speech.depthwise_kernel) == (16, 4, 576, 31)

    def test_missing_data_path_exits_2(self, tmp_path):
        write_json(tmp_path / "run.json", {"task": "phoneme", "data": {}})
        assert main(["train", "--config", str(tmp_path / "run.json")]) == 2


class TestEval:
    def test_single_checkpoint(self, workspace, tmp_path):
        report = tmp_path / "report.json"
        assert main(["eval",
                     "--checkpoint", str(workspace / "run/seed0.megc"),
                     "--data", str(workspace / "data/test.megw"),
                     "--out", str(report)]) == 0
        doc = read_json(report)
        assert doc["kind"] == "single"
        assert 0.0 <= doc["metrics"]["f1_macro"] <= 1.0

    def test_ensemble_votes_and_predictions_csv(self, workspace, tmp_path):
        report = tmp_path / "report.json"
        preds = tmp_path / "preds.csv"
        assert main(["eval",
                     "--checkpoint", str(workspace / "run/seed0.megc"),
                     "--checkpoint", str(workspace / "run/seed1.megc"),
                     "--data", str(workspace / "data/test.megw"),
                     "--out", str(report), "--predictions", str(preds)]) == 0
        doc = read_json(report)
        assert doc["kind"] == "ensemble"
        header = preds.read_text().splitlines()[0]
        assert header == "index,predicted_class,vote_0,vote_1"

    def test_averaged_path(self, workspace, tmp_path):
        report = tmp_path / "report.json"
        assert main(["eval",
                     "--checkpoint", str(workspace / "run/seed0.megc"),
                     "--data", str(workspace / "data/test.megw"),
                     "--out", str(report), "--averaged", "--group-size", "5"]) == 0
        doc = read_json(report)
        assert doc["averaged"] is True

    def test_head_mismatch_exits_2(self, workspace, tmp_path):
        # binary-relabeled dataset has 2 classes; checkpoint head expects 4
        from megdecode.data import load_dataset, map_to_feature, FeatureMap, save_dataset

        ds = load_dataset(workspace / "data/test.megw")
        binary = map_to_feature(ds, FeatureMap("x", frozenset({0})))
        save_dataset(tmp_path / "binary.megw", binary)
        code = main(["eval",
                     "--checkpoint", str(workspace / "run/seed0.megc"),
                     "--data", str(tmp_path / "binary.megw"),
                     "--out", str(tmp_path / "r.json")])
        assert code == 2


class TestGradcheckCommand:
    def test_pass_and_report(self, tmp_path, capsys):
        report = tmp_path / "grad.json"
        assert main(["gradcheck", "--skip-model", "--out", str(report)]) == 0
        doc = read_json(report)
        assert doc["passed"] is True
        names = [r["name"] for r in doc["results"]]
        assert len(names) == len(set(names))  # each primitive exactly once
        for required in ("matmul", "conv1d", "depthwise_conv1d", "softmax",
                         "layer_norm", "glu", "swish", "mean_pool", "dropout_eval"):
            assert required in names

    def test_fault_injection_fails_and_names_op(self, capsys):
        code = main(["gradcheck", "--skip-model", "--inject-fault", "depthwise_conv1d"])
        assert code == 1
        captured = capsys.readouterr()
        assert "depthwise_conv1d" in captured.err


class TestAnalyzeRms:
    def test_outputs_and_bimodal_flag(self, tmp_path, capsys):
        from megdecode.data import Dataset, GeneratorConfig, save_dataset, synthesize_dataset

        def at_gain(g, split):
            cfg = GeneratorConfig(channels=4, samples=30, sample_rate_hz=250.0,
                                  per_class_counts=(60,), snr=5.0, gain_drift=(g, g))
            return synthesize_dataset(cfg, 1, split=split)

        low, high = at_gain(0.5, "holdout"), at_gain(2.0, "holdout")
        mixture = Dataset(
            np.concatenate([low.data, high.data]),
            np.zeros(120, dtype=np.int64), 250.0, "holdout", ("c0",),
        )
        save_dataset(tmp_path / "holdout.megw", mixture)
        save_dataset(tmp_path / "test.megw", at_gain(1.0, "test"))
        prefix = str(tmp_path / "rms")
        assert main(["analyze-rms", str(tmp_path / "holdout.megw"),
                     str(tmp_path / "test.megw"), "--out-prefix", prefix]) == 0
        summary = read_json(prefix + "_summary.json")
        assert summary["holdout"]["bimodal"] is True
        assert summary["test"]["bimodal"] is False
        hist = Path(prefix + "_hist.csv").read_text().splitlines()
        assert hist[0].startswith("bin_left,bin_right,")

    def test_unreadable_file_exits_3(self, tmp_path):
        assert main(["analyze-rms", str(tmp_path / "missing.megw"),
                     "--out-prefix", str(tmp_path / "x")]) == 3

    def test_identical_files_identical_rows(self, tmp_path):
        from megdecode.data import GeneratorConfig, save_dataset, synthesize_dataset

        cfg = GeneratorConfig(channels=3, samples=20, sample_rate_hz=250.0,
                              per_class_counts=(50,), snr=3.0)
        ds = synthesize_dataset(cfg, 2, split="test")
        save_dataset(tmp_path / "test.megw", ds)
        save_dataset(tmp_path / "copy_test.megw", ds)
        prefix = str(tmp_path / "rms")
        assert main(["analyze-rms", str(tmp_path / "test.megw"),
                     str(tmp_path / "copy_test.megw"), "--out-prefix", prefix]) == 0
        rows = Path(prefix + "_hist.csv").read_text().splitlines()[1:]
        for row in rows:
            cells = row.split(",")
            assert cells[2] == cells[3]


class TestAblateAndSweep:
    def test_ablate_table(self, workspace, tmp_path, capsys):
        run = read_json(workspace / "run.json")
        run["grouping"] = {"group_size": 10}
        run["train"]["max_epochs"] = 4
        run["train"]["patience"] = 4
        run["seeds"] = [0, 1, 2]
        write_json(tmp_path / "run.json", run)
        assert main(["ablate", "--config", str(tmp_path / "run.json"),
                     "--variants", "no_weights,fixed_groups",
                     "--out", str(tmp_path / "ab")]) == 0
        table = (tmp_path / "ab" / "ablation.txt").read_text()
        assert "baseline" in table and "no_weights" in table and "fixed_groups" in table
        csv_text = (tmp_path / "ab" / "ablation.csv").read_text()
        assert csv_text.splitlines()[0].startswith("variant,mean,std")

    def test_sweep_curve(self, workspace, tmp_path):
        run = read_json(workspace / "run.json")
        run["train"]["max_epochs"] = 3
        run["train"]["patience"] = 3
        write_json(tmp_path / "run.json", run)
        assert main(["sweep", "--config", str(tmp_path / "run.json"),
                     "--fractions", "0.25,0.5,1.0", "--seeds", "0",
                     "--out", str(tmp_path / "sw")]) == 0
        rows = (tmp_path / "sw" / "sweep.csv").read_text().splitlines()
        assert rows[0] == "fraction,n_train,mean,std"
        assert len(rows) == 4

    def test_unknown_variant_exits_2(self, workspace, tmp_path):
        assert main(["ablate", "--config", str(workspace / "run.json"),
                     "--variants", "warp_drive",
                     "--out", str(tmp_path / "ab")]) == 2


class TestAugmentPreview:
    def test_writes_windows_and_responses(self, workspace, tmp_path):
        out = tmp_path / "preview"
        assert main(["augment-preview", "--data", str(workspace / "data/test.megw"),
                     "--out", str(out), "--seed", "3", "--count", "2"]) == 0
        assert (out / "window0_before.csv").exists()
        assert (out / "window0_after.csv").exists()
        for band in ("theta", "alpha", "beta", "gamma", "high_gamma"):
            path = out / f"bandstop_{band}.csv"
            assert path.exists()
            assert path.read_text().splitlines()[0] == "frequency_hz,magnitude_db"


class TestSpeechPipeline:
    def test_speech_train_and_eval(self, tmp_path, capsys):
        spec = {
            "task": "speech_series",
            "channels": 6,
            "sample_rate_hz": 250.0,
            "snr": 1.5,
            "segment_samples": [150, 400],
            "splits": {
                "train": {"length_samples": 6000},
                "validation": {"length_samples": 2500},
                "test": {"length_samples": 2500},
            },
        }
        write_json(tmp_path / "gen.json", spec)
        assert main(["gen-data", "--spec", str(tmp_path / "gen.json"),
                     "--out", str(tmp_path / "sdata"), "--seed", "4"]) == 0
        run = {
            "task": "speech",
            "preset": "tiny",
            "model": {"window_samples": 100, "in_channels": 6, "num_layers": 1,
                      "hidden": 16, "num_heads": 2, "ffn_dim": 32,
                      "depthwise_kernel": 5, "dropout": 0.0},
            "data": {
                "train": str(tmp_path / "sdata/train.megs"),
                "validation": str(tmp_path / "sdata/validation.megs"),
                "test": str(tmp_path / "sdata/test.megs"),
            },
            "train": {"learning_rate": 0.005, "batch_size": 32, "patience": 4,
                      "max_epochs": 5},
            "augment": {"time_mask_count": 2, "time_mask_max_width": 30,
                        "bandstop_probability": 0.2},
            "stride": 50,
            "seeds": [0],
            "out_dir": str(tmp_path / "srun"),
        }
        write_json(tmp_path / "run.json", run)
        assert main(["train", "--config", str(tmp_path / "run.json")]) == 0
        report = tmp_path / "sreport.json"
        preds = tmp_path / "spreds.csv"
        assert main(["eval", "--checkpoint", str(tmp_path / "srun/seed0.megc"),
                     "--data", str(tmp_path / "sdata/test.megs"),
                     "--out", str(report), "--stride", "10",
                     "--smooth-min-run", "60",
                     "--predictions", str(preds)]) == 0
        doc = read_json(report)
        assert doc["kind"] == "speech"
        assert "jaccard" in doc["metrics"]
        header = preds.read_text().splitlines()[0]
        assert header == "index,probability,raw_label,smoothed_label"
