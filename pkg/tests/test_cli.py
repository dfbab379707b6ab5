import hashlib
import json
import os

import numpy as np
import pytest

from surgdepth.checkpoint import load_checkpoint
from surgdepth.cli import (EXIT_MISMATCH, EXIT_OK, EXIT_USAGE,
                           EXIT_VERIFY_FAIL, main, read_config_file)
from surgdepth.errors import UsageError

TOY_FLAGS = ["--size", "16", "--patch", "4", "--embed-dim", "16",
             "--encoder-blocks", "1", "--heads", "2", "--fusion-k", "2",
             "--decoder-blocks", "1", "--classes", "4"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    code = main(["gen-data", "--n", "4", "--size", "16", "--out", str(d)])
    assert code == EXIT_OK
    return str(d)


def _sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


class TestUsage:
    def test_no_command_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == EXIT_USAGE

    def test_unknown_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as err:
            main(["train", "--bogus"])
        assert err.value.code == EXIT_USAGE

    def test_bad_config_key_is_usage_error(self, tmp_path, dataset, capsys):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("bogus_key=1\n")
        code = main(["train", "--config", str(cfg), "--data", dataset,
                     "--out", str(tmp_path / "run")])
        assert code == EXIT_USAGE

    def test_invalid_geometry_is_mismatch(self, tmp_path, dataset, capsys):
        code = main(["train", "--size", "17", "--data", dataset,
                     "--out", str(tmp_path / "run")])
        assert code == EXIT_MISMATCH


class TestConfigFile:
    def test_parse_values_and_comments(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("# comment\nlr = 0.5\nbatch_size=4\n\n")
        assert read_config_file(str(path)) == {"lr": "0.5", "batch_size": "4"}

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("just words\n")
        with pytest.raises(UsageError):
            read_config_file(str(path))

    def test_flags_override_file(self, tmp_path, dataset, capsys):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("epochs=0\n" + "\n".join(
            f"{k}={v}" for k, v in [("image_h", 16), ("image_w", 16),
                                    ("patch", 4), ("embed_dim", 16),
                                    ("depth_blocks", 1), ("heads", 2),
                                    ("fusion_k", 2), ("decoder_blocks", 1)]))
        out = tmp_path / "run"
        code = main(["train", "--config", str(cfg), "--data", dataset,
                     "--out", str(out)])
        assert code == EXIT_OK
        assert (out / "best.ckpt").exists()


class TestGenData:
    def test_writes_manifest_and_reports_fraction(self, tmp_path, capsys):
        out = tmp_path / "d"
        code = main(["gen-data", "--n", "3", "--size", "16", "--out", str(out)])
        assert code == EXIT_OK
        assert (out / "manifest.txt").exists()
        captured = capsys.readouterr().out
        assert "rgb-ambiguous pixel fraction" in captured

    def test_deterministic_output(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            main(["gen-data", "--n", "2", "--size", "16", "--out", str(out)])
        for name in sorted(os.listdir(a)):
            assert _sha(a / name) == _sha(b / name)


class TestTrainEval:
    def test_epochs_zero_writes_initial_checkpoint(self, tmp_path, dataset, capsys):
        out = tmp_path / "run"
        code = main(["train", *TOY_FLAGS, "--epochs", "0",
                     "--data", dataset, "--out", str(out)])
        assert code == EXIT_OK
        assert load_checkpoint(out / "best.ckpt")

    def test_lr_zero_checkpoint_equals_initial(self, tmp_path, dataset, capsys):
        run0 = tmp_path / "r0"
        run1 = tmp_path / "r1"
        main(["train", *TOY_FLAGS, "--epochs", "0", "--data", dataset,
              "--out", str(run0)])
        code = main(["train", *TOY_FLAGS, "--lr", "0", "--weight-decay", "0",
                     "--epochs", "2", "--max-steps", "4", "--no-augment",
                     "--data", dataset, "--out", str(run1)])
        assert code == EXIT_OK
        assert _sha(run0 / "best.ckpt") == _sha(run1 / "best.ckpt")

    def test_train_twice_same_seed_same_checkpoint(self, tmp_path, dataset, capsys):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            code = main(["train", *TOY_FLAGS, "--epochs", "2", "--max-steps",
                         "4", "--data", dataset, "--out", str(out)])
            assert code == EXIT_OK
            outs.append(out)
        assert _sha(outs[0] / "best.ckpt") == _sha(outs[1] / "best.ckpt")

    def test_eval_untrained_near_chance(self, tmp_path, dataset, capsys):
        out = tmp_path / "eval.json"
        code = main(["eval", *TOY_FLAGS, "--data", dataset, "--split", "train",
                     "--out", str(out)])
        assert code == EXIT_OK
        miou = json.load(open(out))["miou"]
        # untrained predictions hover near the 1/K chance level
        assert 0.0 <= miou <= 3.0 / 4

    def test_eval_twice_identical_json(self, tmp_path, dataset, capsys):
        paths = [tmp_path / "e1.json", tmp_path / "e2.json"]
        for p in paths:
            assert main(["eval", *TOY_FLAGS, "--data", dataset,
                         "--out", str(p)]) == EXIT_OK
        assert paths[0].read_text() == paths[1].read_text()

    def test_eval_mismatched_checkpoint_exits_3(self, tmp_path, dataset, capsys):
        run = tmp_path / "run"
        main(["train", *TOY_FLAGS, "--epochs", "0", "--data", dataset,
              "--out", str(run)])
        code = main(["eval", *TOY_FLAGS[:-2], "--classes", "4",
                     "--decoder-blocks", "2", "--data", dataset,
                     "--ckpt", str(run / "best.ckpt")])
        assert code == EXIT_MISMATCH

    def test_class_count_mismatch_exits_3(self, tmp_path, dataset, capsys):
        code = main(["train", *TOY_FLAGS[:-2], "--classes", "5",
                     "--data", dataset, "--out", str(tmp_path / "run")])
        assert code == EXIT_MISMATCH


class TestAblate:
    def test_decoder_depth_csv(self, tmp_path, dataset, capsys):
        out = tmp_path / "table.csv"
        code = main(["ablate", *TOY_FLAGS, "--study", "decoder-depth",
                     "--epochs", "1", "--max-steps", "1",
                     "--data", dataset, "--out", str(out)])
        assert code == EXIT_OK
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 5
        assert lines[0].startswith("blocks,miou,params,")
        assert "reference_iou" in lines[0]
        refs = [line.split(",")[-1] for line in lines[1:]]
        assert refs == ["0.843", "0.851", "0.862", "0.856"]

    def test_decoder_input_csv(self, tmp_path, dataset, capsys):
        out = tmp_path / "table.csv"
        code = main(["ablate", *TOY_FLAGS, "--study", "decoder-input",
                     "--epochs", "1", "--max-steps", "1",
                     "--data", dataset, "--out", str(out)])
        assert code == EXIT_OK
        rows = out.read_text().strip().splitlines()[1:]
        assert [r.split(",")[0] for r in rows] == ["rgb_only", "rgb_and_depth"]
        assert int(rows[0].split(",")[2]) < int(rows[1].split(",")[2])


class TestVerify:
    def test_sabotaged_kernel_detected(self, capsys):
        assert main(["verify", "--sabotage", "bilinear_resize"]) == EXIT_VERIFY_FAIL
