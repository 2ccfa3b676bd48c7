"""Retraining with a fixed genotype, augmentation, checkpoints, prediction.

Two loss modes are supported: `paper_sum` (pixel-summed BCE with the matching
tiny learning rate 1e-10, only sensible at full 256x256 scale) and
`desk_mean` (pixel-mean BCE, lr 0.025), which is the tested CPU-scale default.
"""

from __future__ import annotations

import os

import numpy as np
import torch
from scipy import ndimage

from .config import Config
from .data import Sample
from .genotype import Genotype
from .metrics import f_measure, mae
from .network import SaliencyNet, build_network, collate_batch
from .regions import DepthMap


def bce_loss(pred: torch.Tensor, gt: torch.Tensor, mode: str = "desk_mean") -> torch.Tensor:
    """Binary cross-entropy, summed or averaged over pixels."""
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    p = pred.clamp(1e-7, 1 - 1e-7)
    pointwise = -(gt * torch.log(p) + (1 - gt) * torch.log(1 - p))
    if mode == "paper_sum":
        return pointwise.sum()
    if mode == "desk_mean":
        return pointwise.mean()
    raise ValueError(f"unknown loss mode: {mode!r}")


def _resize_2d(arr: np.ndarray, size: tuple[int, int], nearest: bool) -> np.ndarray:
    # keep float64 depth values bit-exact through nearest resampling
    dtype = np.float64 if arr.dtype == np.float64 else np.float32
    t = torch.from_numpy(np.ascontiguousarray(arr, dtype=dtype))[None, None]
    mode = "nearest-exact" if nearest else "bilinear"
    kwargs = {} if nearest else {"align_corners": False}
    out = torch.nn.functional.interpolate(t, size=size, mode=mode, **kwargs)
    return out[0, 0].numpy()


def augment(sample: Sample, rng: np.random.Generator, flip=True, crop=True,
            rotate=True) -> Sample:
    """Random flip / crop / rotate applied identically to RGB, depth, and GT.

    RGB resamples bilinearly; depth and GT use nearest neighbour so raw depth
    readings and the binary mask survive untouched. Output size equals input.
    """
    rgb = sample.rgb.copy()
    depth = sample.depth.values.copy()
    valid = sample.depth.valid.copy()
    gt = np.asarray(sample.gt, dtype=np.float32).copy()

    if flip and rng.random() < 0.5:
        rgb = rgb[:, :, ::-1].copy()
        depth = depth[:, ::-1].copy()
        valid = valid[:, ::-1].copy()
        gt = gt[:, ::-1].copy()

    if rotate:
        angle = float(rng.uniform(-10.0, 10.0))
        if angle != 0.0:
            rgb = np.stack([
                ndimage.rotate(ch, angle, reshape=False, order=1, mode="nearest")
                for ch in rgb
            ])
            depth = ndimage.rotate(depth, angle, reshape=False, order=0, mode="nearest")
            valid = ndimage.rotate(valid.astype(np.uint8), angle, reshape=False,
                                   order=0, mode="nearest").astype(bool)
            gt = ndimage.rotate(gt, angle, reshape=False, order=0, mode="nearest")

    if crop:
        h, w = gt.shape
        scale = float(rng.uniform(0.8, 1.0))
        ch, cw = max(1, int(round(h * scale))), max(1, int(round(w * scale)))
        top = int(rng.integers(0, h - ch + 1))
        left = int(rng.integers(0, w - cw + 1))
        rgb = np.stack([
            _resize_2d(c[top:top + ch, left:left + cw], (h, w), nearest=False)
            for c in rgb
        ])
        depth = _resize_2d(depth[top:top + ch, left:left + cw], (h, w), nearest=True)
        valid = _resize_2d(valid[top:top + ch, left:left + cw].astype(np.float32),
                           (h, w), nearest=True) > 0.5
        gt = _resize_2d(gt[top:top + ch, left:left + cw], (h, w), nearest=True)

    return Sample(rgb=np.clip(rgb, 0, 1).astype(np.float32),
                  depth=DepthMap(values=depth.astype(np.float64), valid=valid),
                  gt=(gt > 0.5).astype(np.float32), id=sample.id)


def save_checkpoint(path: str, net: SaliencyNet, optimizer, epoch: int,
                    config: Config, genotype: Genotype | None,
                    extra: dict | None = None) -> None:
    payload = {
        "net": net.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "epoch": epoch,
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "genotype": genotype.emit() if genotype is not None else None,
        "fusion_kind": net.fusion_kind,
        "use_attention": net.use_attention,
    }
    payload.update(extra or {})
    torch.save(payload, path)


def load_checkpoint(path: str):
    try:
        state = torch.load(path, weights_only=False)
    except Exception as err:
        raise ValueError(f"cannot read checkpoint {path}: {err}") from err
    config = Config.from_dict(state["config"])
    genotype = Genotype.parse(state["genotype"]) if state.get("genotype") else None
    net = build_network(config, genotype=genotype,
                        fusion_kind=state.get("fusion_kind", "cells"),
                        use_attention=state.get("use_attention", True))
    net.load_state_dict(state["net"])
    net.eval()
    return net, config, genotype, state


def train_full(genotype: Genotype | None, dataset: list[Sample], config: Config,
               seed: int = 0, workdir: str | None = None,
               resume_from: str | None = None, fusion_kind: str = "cells",
               use_attention: bool = True, log=None, eval_every: int = 1,
               stop_when=None) -> dict:
    """Train all weights on the whole dataset; keep the best-MAE checkpoint.

    Metrics are computed every `eval_every` epochs (and on the last one);
    `stop_when(row)` may end the run early once a target is reached. Returns
    {"net", "history", "best_epoch", "best_path"}; the best checkpoint is
    also written to workdir when given.
    """
    tc = config.train
    net = build_network(config, genotype=genotype, seed=seed,
                        fusion_kind=fusion_kind, use_attention=use_attention)
    optimizer = torch.optim.SGD(net.parameters(), lr=tc.resolved_lr,
                                momentum=tc.momentum, weight_decay=tc.weight_decay)
    start_epoch = 0
    history = []
    best = {"mae": float("inf"), "state": None, "epoch": -1}
    if resume_from:
        from .search import _resume_key

        _, ckpt_config, _, state = load_checkpoint(resume_from)
        if _resume_key(ckpt_config.to_dict()) != _resume_key(config.to_dict()):
            raise ValueError("resume checkpoint config mismatch")
        net.load_state_dict(state["net"])
        optimizer.load_state_dict(state["optimizer"])
        start_epoch = state["epoch"]
        history = list(state.get("history", []))
        best = state.get("best", best)

    batch = min(tc.batch_size, len(dataset))
    for epoch in range(start_epoch, tc.epochs):
        rng = np.random.default_rng((seed, epoch))
        order = rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(dataset) - batch + 1, batch):
            picked = [dataset[i] for i in order[start:start + batch]]
            if tc.flip or tc.crop or tc.rotate:
                picked = [
                    augment(s, np.random.default_rng((seed, epoch, int(i))),
                            flip=tc.flip, crop=tc.crop, rotate=tc.rotate)
                    for s, i in zip(picked, order[start:start + batch])
                ]
            rgb, depth, masks, gt = collate_batch(picked, config)
            optimizer.zero_grad()
            pred = net(rgb, depth, masks)
            loss = bce_loss(pred, gt, mode=tc.loss_mode)
            if not torch.isfinite(loss):
                raise RuntimeError(f"non-finite training loss at epoch {epoch}: {loss}")
            loss.backward()
            optimizer.step()
            losses.append(loss.detach().item())

        row = {"epoch": epoch + 1, "loss": float(np.mean(losses))}
        if (epoch + 1) % eval_every == 0 or epoch + 1 == tc.epochs:
            scores = evaluate_training_set(net, dataset, config)
            row.update(scores)
            if scores["mae"] < best["mae"]:
                best = {"mae": scores["mae"], "epoch": epoch + 1,
                        "state": {k: v.clone() for k, v in net.state_dict().items()}}
        history.append(row)
        if log:
            log(row)
        if workdir:
            os.makedirs(workdir, exist_ok=True)
            save_checkpoint(os.path.join(workdir, "last.pt"), net, optimizer,
                            epoch + 1, config, genotype,
                            extra={"history": history, "best": best})
        if stop_when is not None and "mae" in row and stop_when(row):
            break

    # materialize the best checkpoint
    final = {"history": history, "best_epoch": best["epoch"]}
    if best["state"] is not None:
        net.load_state_dict(best["state"])
    if workdir:
        best_path = os.path.join(workdir, "best.pt")
        save_checkpoint(best_path, net, optimizer, best["epoch"], config, genotype,
                        extra={"history": history})
        final["best_path"] = best_path
    final["net"] = net
    return final


@torch.no_grad()
def evaluate_training_set(net: SaliencyNet, dataset: list[Sample],
                          config: Config) -> dict:
    net.eval()
    f_vals, m_vals = [], []
    for s in dataset:
        pred = predict_sample(net, s, config)
        m_vals.append(mae(pred, s.gt))
        if (np.asarray(s.gt) > 0.5).any():
            f_vals.append(f_measure(pred, s.gt))
    net.train()
    return {"f": float(np.mean(f_vals)) if f_vals else float("nan"),
            "mae": float(np.mean(m_vals))}


@torch.no_grad()
def predict_sample(net: SaliencyNet, sample: Sample, config: Config) -> np.ndarray:
    was_training = net.training
    net.eval()
    rgb, depth, masks, _ = collate_batch([sample], config)
    pred = net(rgb, depth, masks)[0, 0].numpy().astype(np.float64)
    if was_training:
        net.train()
    return pred


def predict_from_arrays(net: SaliencyNet, config: Config, rgb: np.ndarray,
                        depth: DepthMap) -> np.ndarray:
    """Inference on raw arrays: decomposition, normalization, forward."""
    gt = np.zeros(depth.values.shape, dtype=np.float32)
    sample = Sample(rgb=rgb.astype(np.float32), depth=depth, gt=gt, id="query")
    return predict_sample(net, sample, config)
