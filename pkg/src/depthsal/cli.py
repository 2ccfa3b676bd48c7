"""Command-line entry points: search, train, eval, predict, decompose-viz, synth.

Exit codes: 0 on success, 2 on validation errors (bad arguments, unreadable
inputs, malformed datasets).
"""

from __future__ import annotations

import os
import sys

import click
import numpy as np
from PIL import Image

from .config import Config
from .data import SynthConfig, load_dataset, load_depth, load_rgb, save_dataset, synth_generate
from .genotype import Genotype
from .metrics import MetricReport, evaluate_dataset, score_pair
from .regions import DepthMap, decompose_depth
from .search import run_search, write_history_csv
from .training import load_checkpoint, predict_from_arrays, predict_sample, train_full


def _load_config(config_path, overrides) -> Config:
    try:
        cfg = Config.from_file(config_path) if config_path else Config()
        cfg.apply_overrides(list(overrides))
        return cfg
    except (ValueError, OSError) as err:
        raise click.UsageError(str(err))


def _load_samples(data: str, cfg: Config):
    size = tuple(cfg.backbone.input_size)
    try:
        if data == "synthetic":
            sc = SynthConfig(num_samples=cfg.data.num_samples, image_size=size[0],
                             num_distractors=cfg.data.num_distractors,
                             depth_noise_std=cfg.data.depth_noise_std,
                             seed=cfg.data.seed)
            return synth_generate(sc)
        return load_dataset(data, size)
    except (ValueError, FileNotFoundError) as err:
        raise click.UsageError(str(err))


@click.group()
def main():
    """Depth-sensitive RGB-D salient object detection."""


@main.command()
@click.option("--data", required=True, help="dataset directory or 'synthetic'")
@click.option("--epochs", type=int, default=None, help="override search epochs")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", required=True, help="genotype output file")
@click.option("--history", "history_path", default=None, help="history CSV path")
@click.option("--config", "config_path", default=None, help="YAML config file")
@click.option("--workdir", default=None, help="checkpoint directory")
@click.option("--resume", default=None, help="resume from a search checkpoint")
@click.option("--set", "overrides", multiple=True, help="config override key=value")
def search(data, epochs, seed, out_path, history_path, config_path, workdir,
           resume, overrides):
    """Run the architecture search and write the discovered genotype."""
    cfg = _load_config(config_path, overrides)
    if epochs is not None:
        cfg.search.epochs = epochs
    samples = _load_samples(data, cfg)
    genotype, history = run_search(cfg, samples, seed=seed, workdir=workdir,
                                   resume_from=resume)
    genotype.save(out_path)
    if history_path:
        write_history_csv(history, history_path)
    last = history[-1] if history else {}
    click.echo(f"search done: {len(history)} epochs, "
               f"val_loss={last.get('val_loss', float('nan')):.4f}, "
               f"genotype -> {out_path}")


@main.command()
@click.option("--genotype", "genotype_path", required=True)
@click.option("--data", required=True)
@click.option("--config", "config_path", default=None)
@click.option("--out", "out_dir", required=True, help="checkpoint directory")
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--resume", default=None)
@click.option("--set", "overrides", multiple=True)
def train(genotype_path, data, config_path, out_dir, epochs, seed, resume, overrides):
    """Retrain the full network with a discovered genotype."""
    cfg = _load_config(config_path, overrides)
    if epochs is not None:
        cfg.train.epochs = epochs
    try:
        genotype = Genotype.load(genotype_path)
    except (ValueError, OSError) as err:
        raise click.UsageError(f"bad genotype file: {err}")
    samples = _load_samples(data, cfg)
    def log(row):
        line = f"epoch {row['epoch']}: loss={row['loss']:.4f}"
        if "f" in row:
            line += f" F={row['f']:.3f} MAE={row['mae']:.4f}"
        click.echo(line)

    result = train_full(genotype, samples, cfg, seed=seed, workdir=out_dir,
                        resume_from=resume, log=log)
    click.echo(f"best epoch {result['best_epoch']}; checkpoint -> "
               f"{result.get('best_path', out_dir)}")


@main.command("eval")
@click.option("--ckpt", "ckpt_path", default=None)
@click.option("--data", required=True)
@click.option("--pred-dir", default=None,
              help="score precomputed saliency maps instead of a checkpoint")
@click.option("--report", "report_path", required=True)
@click.option("--set", "overrides", multiple=True)
def eval_cmd(ckpt_path, data, pred_dir, report_path, overrides):
    """Evaluate a checkpoint (or precomputed maps) over a dataset."""
    if (ckpt_path is None) == (pred_dir is None):
        raise click.UsageError("provide exactly one of --ckpt or --pred-dir")
    if ckpt_path:
        try:
            net, cfg, _, _ = load_checkpoint(ckpt_path)
        except ValueError as err:
            raise click.UsageError(str(err))
        cfg.apply_overrides(list(overrides))
        samples = _load_samples(data, cfg)
        report = evaluate_dataset(samples, lambda s: predict_sample(net, s, cfg),
                                  config=cfg.to_dict())
    else:
        cfg = _load_config(None, overrides)
        samples = _load_samples(data, cfg)
        report = MetricReport(config=None)
        for sample in sorted(samples, key=lambda s: s.id):
            path = os.path.join(pred_dir, sample.id + ".png")
            if not os.path.exists(path):
                report.missing.append(sample.id)
                continue
            pred = np.asarray(Image.open(path).convert("L"), dtype=np.float64) / 255.0
            row = score_pair(pred, sample.gt, image_id=sample.id)
            if row["f"] is None:
                report.n_f_skipped += 1
            report.rows.append(row)
            report.n_images += 1
        if report.missing:
            click.echo("missing predictions: " + ", ".join(report.missing), err=True)
    report.write_csv(report_path)
    m = report.means
    click.echo(f"{report.n_images} images: F={m['f']:.4f} MAE={m['mae']:.4f} "
               f"S={m['s']:.4f} E={m['e']:.4f} -> {report_path}")


@main.command()
@click.option("--ckpt", "ckpt_path", required=True)
@click.option("--rgb", "rgb_path", required=True)
@click.option("--depth", "depth_path", required=True)
@click.option("--out", "out_path", required=True)
def predict(ckpt_path, rgb_path, depth_path, out_path):
    """Predict a saliency map for one RGB-D pair (8-bit grayscale PNG out)."""
    try:
        net, cfg, _, _ = load_checkpoint(ckpt_path)
        size = tuple(cfg.backbone.input_size)
        rgb = load_rgb(rgb_path, size)
        depth = load_depth(depth_path, size)
    except (ValueError, OSError, FileNotFoundError) as err:
        raise click.UsageError(str(err))
    saliency = predict_from_arrays(net, cfg, rgb, depth)
    out = np.clip(np.round(saliency * 255), 0, 255).astype(np.uint8)
    Image.fromarray(out).save(out_path)
    click.echo(f"saliency map -> {out_path}")


@main.command("decompose-viz")
@click.option("--depth", "depth_path", required=True)
@click.option("--out-dir", required=True)
@click.option("--regions", type=int, default=3, help="number of masks (T+1)")
@click.option("--bins", type=int, default=64)
@click.option("--smooth-width", type=int, default=5)
@click.option("--mask-mode", type=click.Choice(["soft", "binary"]), default="soft")
def decompose_viz(depth_path, out_dir, regions, bins, smooth_width, mask_mode):
    """Write the region masks of a depth image as grayscale PNGs."""
    try:
        img = Image.open(depth_path)
    except OSError as err:
        raise click.UsageError(str(err))
    arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr[..., 0]
    try:
        masks = decompose_depth(DepthMap.from_raw(arr.astype(np.float64)),
                                regions=regions, bins=bins,
                                smooth_width=smooth_width, mode=mask_mode)
    except ValueError as err:
        raise click.UsageError(str(err))
    os.makedirs(out_dir, exist_ok=True)
    for m in masks:
        out = np.clip(np.round(m.weights * 255), 0, 255).astype(np.uint8)
        path = os.path.join(out_dir, f"region_{m.region_index}.png")
        Image.fromarray(out).save(path)
    click.echo(f"{len(masks)} masks -> {out_dir}")


@main.command()
@click.option("--out", "out_dir", required=True)
@click.option("--num", type=int, default=32)
@click.option("--size", type=int, default=64)
@click.option("--distractors", type=int, default=4)
@click.option("--noise", type=float, default=1.0)
@click.option("--seed", type=int, default=0)
def synth(out_dir, num, size, distractors, noise, seed):
    """Generate a synthetic RGB-D dataset in the loadable layout."""
    if num < 1 or size < 16:
        raise click.UsageError("need num >= 1 and size >= 16")
    samples = synth_generate(SynthConfig(num_samples=num, image_size=size,
                                         num_distractors=distractors,
                                         depth_noise_std=noise, seed=seed))
    save_dataset(samples, out_dir)
    click.echo(f"{len(samples)} samples -> {out_dir}")


if __name__ == "__main__":
    sys.exit(main())
