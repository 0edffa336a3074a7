"""Command-line entry point: train / eval / infer / ablate / visualize /
synth / serve.

Configuration comes from an optional JSON file plus repeatable
--override key=value flags (dotted keys: train.epochs=3, model.use_ltd=false).
Every run directory receives a run.json with the effective configuration.
Exit codes: 0 success, 2 usage/config error, 3 runtime abort.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np
import torch

from .data import TrainConfig, load_corpus, save_corpus, synth_corpus, train
from .errors import ConfigError, CorpusError, IsteError, RangeError, TrainingDivergedError
from .evalkit import DEFAULT_SCALES, error_map, evaluate, retrieval_map
from .model import VARIANTS, IsteModel, ModelConfig, load_model

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _apply_overrides(config: dict, overrides) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, raw = item.split("=", 1)
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = _parse_value(raw)
    return config


def _load_config(config_path, overrides) -> dict:
    config = {}
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        config = json.loads(path.read_text())
    return _apply_overrides(config, overrides)


def _split_configs(config: dict, variant: str | None = None):
    train_keys = {f.name for f in TrainConfig.__dataclass_fields__.values()}
    model_keys = {f.name for f in ModelConfig.__dataclass_fields__.values()}
    train_d = dict(config.get("train", {}))
    model_d = dict(config.get("model", {}))
    for k, v in config.items():
        if k in ("train", "model"):
            continue
        if k in train_keys:
            train_d[k] = v
        elif k in model_keys:
            model_d[k] = v
        else:
            raise ConfigError(f"unknown config key {k!r}")
    tc = TrainConfig(**train_d)
    if variant is not None:
        mc = ModelConfig.for_variant(variant, **model_d)
    else:
        mc = ModelConfig(**model_d)
    return tc, mc


def _default_out(out) -> Path:
    if out:
        return Path(out)
    return Path("runs") / time.strftime("%Y%m%d-%H%M%S")


def _write_run_json(out_dir: Path, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run.json").write_text(json.dumps(payload, indent=2, sort_keys=True))


def _load_image(path) -> torch.Tensor:
    from PIL import Image

    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except Exception as exc:
        raise ConfigError(f"cannot read image {path}: {exc}")
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def _save_image(tensor: torch.Tensor, path) -> None:
    from PIL import Image

    arr = (tensor.permute(1, 2, 0).numpy() * 255.0).round().clip(0, 255).astype("uint8")
    Image.fromarray(arr).save(path)


@click.group()
def main():
    """Arbitrary-scale super-resolution toolkit."""


def _run(fn):
    try:
        fn()
    except (ConfigError, CorpusError, RangeError, click.ClickException) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (TrainingDivergedError, IsteError, OSError) as exc:
        click.echo(f"runtime error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)


@main.command("train")
@click.option("--config", "config_path", default=None, help="JSON config file")
@click.option("--override", multiple=True, help="dotted key=value overrides")
@click.option("--corpus", "corpus_dir", required=True, help="directory of PNGs")
@click.option("--out", default=None, help="output directory")
@click.option("--variant", default="full", type=click.Choice(VARIANTS))
def cmd_train(config_path, override, corpus_dir, out, variant):
    """Train a model and write checkpoint, loss CSV, and run.json."""

    def body():
        config = _load_config(config_path, override)
        tc, mc = _split_configs(config, variant)
        corpus = load_corpus(corpus_dir)
        out_dir = _default_out(out)
        _write_run_json(
            out_dir,
            {
                "command": "train",
                "variant": variant,
                "corpus": str(corpus_dir),
                "train": tc.to_dict(),
                "model": mc.to_dict(),
            },
        )
        _, ckpt, losses = train(tc, mc, corpus, out_dir)
        click.echo(f"checkpoint: {ckpt} (final loss {losses[-1]:.5f})")

    _run(body)


@main.command("infer")
@click.option("--image", "image_path", required=True)
@click.option("--scale", type=float, required=True)
@click.option("--checkpoint", required=True)
@click.option("--out", "out_path", required=True)
def cmd_infer(image_path, scale, checkpoint, out_path):
    """Super-resolve one image at an arbitrary scale in [1, 12]."""

    def body():
        if not 1.0 <= scale <= 12.0:
            raise ConfigError(f"scale must be in [1, 12], got {scale}")
        if not Path(checkpoint).is_file():
            raise ConfigError(f"checkpoint not found: {checkpoint}")
        model = load_model(checkpoint)
        image = _load_image(image_path)
        pred = model.predict_image(image, scale)
        _save_image(pred, out_path)
        click.echo(f"wrote {out_path} ({pred.shape[-2]}x{pred.shape[-1]})")

    _run(body)


@main.command("eval")
@click.option("--checkpoint", required=True)
@click.option("--corpus", "corpus_dir", required=True)
@click.option("--scales", default=",".join(f"{s:g}" for s in DEFAULT_SCALES))
@click.option("--seed", type=int, default=1234)
@click.option("--out", default=None)
def cmd_eval(checkpoint, corpus_dir, scales, seed, out):
    """Evaluate a checkpoint on a corpus; writes report.csv and figures."""

    def body():
        if not Path(checkpoint).is_file():
            raise ConfigError(f"checkpoint not found: {checkpoint}")
        scale_list = [float(s) for s in scales.split(",") if s]
        model = load_model(checkpoint)
        corpus = load_corpus(corpus_dir)
        out_dir = _default_out(out)
        _write_run_json(
            out_dir,
            {
                "command": "eval",
                "checkpoint": str(checkpoint),
                "corpus": str(corpus_dir),
                "scales": scale_list,
                "seed": seed,
            },
        )
        report = evaluate(model, corpus, scale_list, seed=seed, out_dir=out_dir)
        for scale, metric, value, _ in report.rows:
            click.echo(f"x{scale:g} {metric} {value:.4f}")

    _run(body)


@main.command("ablate")
@click.option("--variant", required=True)
@click.option("--config", "config_path", default=None)
@click.option("--override", multiple=True)
@click.option("--corpus", "corpus_dir", required=True)
@click.option("--eval-corpus", "eval_dir", default=None)
@click.option("--scales", default="2,3,4")
@click.option("--out", default=None)
def cmd_ablate(variant, config_path, override, corpus_dir, eval_dir, scales, out):
    """Train and evaluate one ablation variant; emits a per-scale CSV."""

    def body():
        if variant not in VARIANTS:
            raise ConfigError(
                f"unknown variant {variant!r}; valid: {', '.join(VARIANTS)}"
            )
        config = _load_config(config_path, override)
        tc, mc = _split_configs(config, variant)
        corpus = load_corpus(corpus_dir)
        out_dir = _default_out(out)
        _write_run_json(
            out_dir,
            {
                "command": "ablate",
                "variant": variant,
                "train": tc.to_dict(),
                "model": mc.to_dict(),
            },
        )
        model, ckpt, _ = train(tc, mc, corpus, out_dir)
        click.echo(f"variant {variant}: {model.n_params()} parameters")
        eval_corpus = load_corpus(eval_dir) if eval_dir else corpus
        scale_list = [float(s) for s in scales.split(",") if s]
        report = evaluate(
            model, eval_corpus, scale_list, out_dir=out_dir, train_config=tc
        )
        for scale, metric, value, _ in report.rows:
            click.echo(f"x{scale:g} {metric} {value:.4f}")

    _run(body)


@main.command("visualize")
@click.option("--checkpoint", required=True)
@click.option("--image", "image_path", required=True)
@click.option("--scale", type=float, default=2.0)
@click.option("--retrieval", is_flag=True, help="also emit the retrieval map")
@click.option("--out", default=None)
def cmd_visualize(checkpoint, image_path, scale, retrieval, out):
    """Emit error and (optionally) retrieval maps for one image."""

    def body():
        from .coords import make_coord_set
        from .data import TrainConfig, degrade
        from .evalkit import psnr

        if not Path(checkpoint).is_file():
            raise ConfigError(f"checkpoint not found: {checkpoint}")
        model = load_model(checkpoint)
        image = _load_image(image_path)
        out_dir = _default_out(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        gen = torch.Generator().manual_seed(0)
        lr_patch, hr_patch = degrade(image, scale, TrainConfig(), gen)
        pred = model.predict_image(lr_patch, scale)
        _save_image(pred, out_dir / "prediction.png")
        error_map(pred, hr_patch, out_dir / "error_map.png")
        if retrieval and model.config.use_stf:
            cs = make_coord_set(lr_patch.shape[-2:], scale=scale)
            with torch.no_grad():
                model(lr_patch, cs)
            res = model.last_retrieval
            retrieval_map(
                res.index_map, res.confidence, cs.hr_dims, out_dir / "retrieval_map.png"
            )
        _write_run_json(
            out_dir,
            {"command": "visualize", "image": str(image_path), "scale": scale},
        )
        click.echo(f"PSNR x{scale:g}: {psnr(pred, hr_patch):.2f} dB -> {out_dir}")

    _run(body)


@main.command("synth")
@click.option("--n", type=int, required=True)
@click.option("--size", type=int, default=192)
@click.option("--seed", type=int, default=0)
@click.option("--out", required=True)
def cmd_synth(n, size, seed, out):
    """Generate the synthetic periodic-texture corpus as PNG files."""

    def body():
        paths = save_corpus(synth_corpus(n, size, seed), out)
        click.echo(f"wrote {len(paths)} images to {out}")

    _run(body)


@main.command("serve")
@click.option("--checkpoint", required=True)
@click.option("--images", "images_dir", required=True)
@click.option("--port", type=int, default=8080)
@click.option("--host", default="127.0.0.1")
@click.option("--workers", type=int, default=0, help="0 = CPU count")
@click.option("--cors-origin", default=None)
@click.option("--frontend", "frontend_dir", default=None, help="static viewer assets")
def cmd_serve(checkpoint, images_dir, port, host, workers, cors_origin, frontend_dir):
    """Serve super-resolved tiles over HTTP for the interactive viewer."""

    def body():
        import uvicorn

        from .service import create_app

        app = create_app(
            checkpoint,
            images_dir,
            workers=workers or None,
            cors_origin=cors_origin,
            frontend_dir=frontend_dir,
        )
        uvicorn.run(app, host=host, port=port)

    _run(body)


if __name__ == "__main__":
    main()
