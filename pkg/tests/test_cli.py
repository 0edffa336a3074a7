import json

import pytest
import torch
from click.testing import CliRunner

from iste.cli import main
from iste.data import save_corpus, synth_corpus

TINY = {
    "train": {
        "patch": 12,
        "samples_per_patch": 16,
        "epochs": 1,
        "batch": 1,
        "max_steps": 2,
    },
    "model": {
        "channels": 8,
        "n_blocks": 1,
        "attn_dim": 8,
        "texture_channels": 8,
        "fusion_dim": 8,
        "phase_hidden": 8,
        "lpd_hidden": [8],
        "ltd_hidden": [8],
        "block_size": 64,
    },
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Corpus directory, config file, and a trained tiny checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    corpus_dir = root / "corpus"
    g = torch.Generator().manual_seed(0)
    save_corpus([torch.rand(3, 64, 64, generator=g) for _ in range(2)], corpus_dir)
    config_path = root / "config.json"
    config_path.write_text(json.dumps(TINY))
    run_dir = root / "train-run"
    result = CliRunner().invoke(
        main,
        [
            "train",
            "--config", str(config_path),
            "--corpus", str(corpus_dir),
            "--out", str(run_dir),
        ],
    )
    assert result.exit_code == 0, result.output
    return {
        "root": root,
        "corpus": corpus_dir,
        "config": config_path,
        "run": run_dir,
        "ckpt": run_dir / "model.ckpt",
    }


class TestTrain:
    def test_artifacts_written(self, workspace):
        assert workspace["ckpt"].exists()
        assert (workspace["run"] / "loss.csv").exists()
        run = json.loads((workspace["run"] / "run.json").read_text())
        assert run["command"] == "train"
        assert run["train"]["patch"] == 12
        assert run["model"]["channels"] == 8

    def test_override_reflected_in_run_json(self, workspace, tmp_path):
        result = CliRunner().invoke(
            main,
            [
                "train",
                "--config", str(workspace["config"]),
                "--override", "model.use_ltd=false",
                "--override", "train.max_steps=1",
                "--corpus", str(workspace["corpus"]),
                "--out", str(tmp_path),
            ],
        )
        assert result.exit_code == 0, result.output
        run = json.loads((tmp_path / "run.json").read_text())
        assert run["model"]["use_ltd"] is False
        assert run["train"]["max_steps"] == 1

    def test_variant_flag(self, workspace, tmp_path):
        result = CliRunner().invoke(
            main,
            [
                "train",
                "--config", str(workspace["config"]),
                "--corpus", str(workspace["corpus"]),
                "--variant", "no-stf",
                "--out", str(tmp_path),
            ],
        )
        assert result.exit_code == 0, result.output
        run = json.loads((tmp_path / "run.json").read_text())
        assert run["model"]["use_stf"] is False

    def test_unknown_config_key_exit_2(self, workspace, tmp_path):
        result = CliRunner().invoke(
            main,
            [
                "train",
                "--config", str(workspace["config"]),
                "--override", "learning_rate=0.1",
                "--corpus", str(workspace["corpus"]),
                "--out", str(tmp_path),
            ],
        )
        assert result.exit_code == 2
        assert "unknown config key" in result.output

    def test_missing_corpus_exit_2(self, workspace, tmp_path):
        result = CliRunner().invoke(
            main,
            [
                "train",
                "--config", str(workspace["config"]),
                "--corpus", str(tmp_path / "nope"),
                "--out", str(tmp_path / "out"),
            ],
        )
        assert result.exit_code == 2

    def test_missing_config_file_exit_2(self, workspace, tmp_path):
        result = CliRunner().invoke(
            main,
            [
                "train",
                "--config", str(tmp_path / "absent.json"),
                "--corpus", str(workspace["corpus"]),
                "--out", str(tmp_path / "out"),
            ],
        )
        assert result.exit_code == 2


class TestInfer:
    def test_writes_scaled_image(self, workspace, tmp_path):
        src = next(iter(sorted(workspace["corpus"].glob("*.png"))))
        out = tmp_path / "up.png"
        result = CliRunner().invoke(
            main,
            [
                "infer",
                "--image", str(src),
                "--scale", "2.0",
                "--checkpoint", str(workspace["ckpt"]),
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        from PIL import Image

        with Image.open(out) as im:
            assert im.size == (128, 128)

    def test_fractional_scale_dims(self, workspace, tmp_path):
        src = next(iter(sorted(workspace["corpus"].glob("*.png"))))
        out = tmp_path / "up.png"
        result = CliRunner().invoke(
            main,
            [
                "infer",
                "--image", str(src),
                "--scale", "1.3",
                "--checkpoint", str(workspace["ckpt"]),
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        from PIL import Image

        with Image.open(out) as im:
            assert im.size == (83, 83)  # round(1.3 * 64)

    def test_scale_out_of_range_exit_2(self, workspace, tmp_path):
        src = next(iter(sorted(workspace["corpus"].glob("*.png"))))
        result = CliRunner().invoke(
            main,
            [
                "infer",
                "--image", str(src),
                "--scale", "20",
                "--checkpoint", str(workspace["ckpt"]),
                "--out", str(tmp_path / "x.png"),
            ],
        )
        assert result.exit_code == 2

    def test_missing_checkpoint_exit_2(self, workspace, tmp_path):
        src = next(iter(sorted(workspace["corpus"].glob("*.png"))))
        result = CliRunner().invoke(
            main,
            [
                "infer",
                "--image", str(src),
                "--scale", "2",
                "--checkpoint", str(tmp_path / "no.ckpt"),
                "--out", str(tmp_path / "x.png"),
            ],
        )
        assert result.exit_code == 2


class TestEval:
    def test_report_and_output(self, workspace, tmp_path):
        # evaluation degrades with the default 48-px patch, so the corpus
        # must be large enough for a 96-px crop at scale 2
        eval_dir = tmp_path / "eval-corpus"
        save_corpus(synth_corpus(1, seed=2), eval_dir)
        result = CliRunner().invoke(
            main,
            [
                "eval",
                "--checkpoint", str(workspace["ckpt"]),
                "--corpus", str(eval_dir),
                "--scales", "2",
                "--out", str(tmp_path),
            ],
        )
        assert result.exit_code == 0, result.output
        assert "x2 psnr" in result.output
        assert "x2 ssim" in result.output
        assert (tmp_path / "report.csv").exists()
        assert (tmp_path / "psnr_vs_scale.png").exists()
        assert (tmp_path / "run.json").exists()


class TestAblate:
    def test_prints_param_count(self, workspace, tmp_path):
        result = CliRunner().invoke(
            main,
            [
                "ablate",
                "--variant", "no-ltd",
                "--config", str(workspace["config"]),
                "--corpus", str(workspace["corpus"]),
                "--scales", "2",
                "--out", str(tmp_path),
            ],
        )
        assert result.exit_code == 0, result.output
        assert "parameters" in result.output
        assert (tmp_path / "report.csv").exists()

    def test_unknown_variant_exit_2(self, workspace, tmp_path):
        result = CliRunner().invoke(
            main,
            [
                "ablate",
                "--variant", "no-encoder",
                "--corpus", str(workspace["corpus"]),
                "--out", str(tmp_path),
            ],
        )
        assert result.exit_code == 2


class TestVisualize:
    def test_maps_written(self, workspace, tmp_path):
        big = tmp_path / "big"
        save_corpus(synth_corpus(1, seed=5), big)
        src = next(iter(big.glob("*.png")))
        out = tmp_path / "viz"
        result = CliRunner().invoke(
            main,
            [
                "visualize",
                "--checkpoint", str(workspace["ckpt"]),
                "--image", str(src),
                "--scale", "2",
                "--retrieval",
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        assert (out / "prediction.png").exists()
        assert (out / "error_map.png").exists()
        assert (out / "retrieval_map.png").exists()
        assert "PSNR" in result.output


class TestSynth:
    def test_writes_n_images(self, tmp_path):
        result = CliRunner().invoke(
            main, ["synth", "--n", "2", "--out", str(tmp_path / "s")]
        )
        assert result.exit_code == 0, result.output
        assert len(list((tmp_path / "s").glob("*.png"))) == 2

    def test_bad_size_exit_2(self, tmp_path):
        result = CliRunner().invoke(
            main, ["synth", "--n", "1", "--size", "32", "--out", str(tmp_path / "s")]
        )
        assert result.exit_code == 2
