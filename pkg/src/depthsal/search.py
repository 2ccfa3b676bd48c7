"""Bi-level architecture search.

Each step first updates the architecture logits with one Adam step on the
validation loss (first-order: network weights are treated as constants),
then updates the network weights with one momentum-SGD step on the training
loss evaluated under the just-updated architecture. Half of the data is held
out as the validation split.

Runs are reproducible bit-for-bit: initialization, the train/val split, and
per-epoch batch orders are all pure functions of the configured seeds, and
per-epoch checkpoints restore optimizer state exactly.
"""

from __future__ import annotations

import csv
import math
import os

import numpy as np
import torch

from .cells import ArchParams
from .config import Config
from .genotype import Genotype, discretize
from .network import SaliencyNet, build_network, collate_batch


def bce(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Pixel-mean binary cross-entropy with clamped predictions."""
    p = pred.clamp(1e-7, 1 - 1e-7)
    return -(gt * torch.log(p) + (1 - gt) * torch.log(1 - p)).mean()


def _resume_key(config_dict: dict) -> dict:
    """Config identity for resume checks; the epoch target may change."""
    key = {k: dict(v) for k, v in config_dict.items()}
    key["search"].pop("epochs", None)
    key["train"].pop("epochs", None)
    return key


def split_train_val(dataset: list, seed: int) -> tuple[list, list]:
    """Deterministic disjoint halves (first half gets the odd extra)."""
    if len(dataset) < 2:
        raise ValueError("need at least 2 samples to split")
    order = np.random.default_rng(seed).permutation(len(dataset))
    cut = (len(dataset) + 1) // 2
    train = [dataset[i] for i in order[:cut]]
    val = [dataset[i] for i in order[cut:]]
    return train, val


class SearchEngine:
    def __init__(self, config: Config, seed: int = 0):
        self.config = config
        self.seed = seed
        self.net: SaliencyNet = build_network(config, seed=seed)
        with torch.random.fork_rng():
            torch.manual_seed(seed + 1)
            self.alpha = ArchParams(self.net.specs)
        s = config.search
        self.alpha_opt = torch.optim.Adam(
            self.alpha.parameters(), lr=s.alpha_lr, betas=tuple(s.alpha_betas),
            weight_decay=s.alpha_weight_decay,
        )
        self.w_opt = torch.optim.SGD(
            self.net.parameters(), lr=s.w_lr, momentum=s.w_momentum,
            weight_decay=s.w_weight_decay,
        )
        self.history: list[dict] = []
        self.epochs_done = 0

    def _forward_loss(self, batch) -> torch.Tensor:
        rgb, depth, masks, gt = batch
        pred = self.net(rgb, depth, masks, alpha=self.alpha)
        return bce(pred, gt)

    def step(self, train_batch, val_batch) -> dict:
        """One alternating update; returns the two losses."""
        self.alpha_opt.zero_grad()
        self.w_opt.zero_grad()
        val_loss = self._forward_loss(val_batch)
        if not torch.isfinite(val_loss):
            raise RuntimeError(f"non-finite validation loss: {val_loss.item()}")
        val_loss.backward()
        self.alpha_opt.step()

        self.alpha_opt.zero_grad()
        self.w_opt.zero_grad()
        train_loss = self._forward_loss(train_batch)
        if not torch.isfinite(train_loss):
            raise RuntimeError(f"non-finite training loss: {train_loss.item()}")
        train_loss.backward()
        self.w_opt.step()
        self.w_opt.zero_grad()
        self.alpha_opt.zero_grad()
        return {"train_loss": train_loss.detach().item(),
                "val_loss": val_loss.detach().item()}

    def set_epoch_lr(self, epoch: int):
        s = self.config.search
        if s.lr_schedule == "cosine":
            lr = 0.5 * (1 + math.cos(math.pi * epoch / max(1, s.epochs))) * s.w_lr
            for group in self.w_opt.param_groups:
                group["lr"] = lr

    def save(self, path: str):
        torch.save({
            "epoch": self.epochs_done,
            "net": self.net.state_dict(),
            "alpha": self.alpha.state_dict(),
            "w_opt": self.w_opt.state_dict(),
            "alpha_opt": self.alpha_opt.state_dict(),
            "history": self.history,
            "config": self.config.to_dict(),
            "seed": self.seed,
        }, path)

    def load(self, path: str):
        state = torch.load(path, weights_only=False)
        if _resume_key(state["config"]) != _resume_key(self.config.to_dict()):
            raise ValueError("checkpoint config does not match current config")
        self.net.load_state_dict(state["net"])
        self.alpha.load_state_dict(state["alpha"])
        self.w_opt.load_state_dict(state["w_opt"])
        self.alpha_opt.load_state_dict(state["alpha_opt"])
        self.history = list(state["history"])
        self.epochs_done = state["epoch"]

    def genotype(self) -> Genotype:
        return discretize(self.alpha, top2_prune=self.config.cells.top2_prune)


def _batches(tensors, order, batch_size):
    rgb, depth, masks, gt = tensors
    starts = range(0, len(order) - batch_size + 1, batch_size)
    for start in starts if len(starts) else [0]:
        idx = torch.as_tensor(order[start:start + batch_size])
        yield rgb[idx], depth[idx], masks[idx], gt[idx]


def run_search(config: Config, dataset: list, seed: int = 0,
               workdir: str | None = None,
               resume_from: str | None = None) -> tuple[Genotype, list[dict]]:
    """Alternating search over `config.search.epochs` epochs.

    Returns the discretized genotype and the per-epoch history. With a
    workdir, writes one checkpoint per epoch; `resume_from` continues an
    interrupted run and reproduces the uninterrupted result exactly.
    """
    engine = SearchEngine(config, seed=seed)
    if resume_from:
        engine.load(resume_from)
    train_set, val_set = split_train_val(dataset, config.search.split_seed)
    train_tensors = collate_batch(train_set, config)
    val_tensors = collate_batch(val_set, config)
    batch = min(config.search.batch_size, len(train_set), len(val_set))

    for epoch in range(engine.epochs_done, config.search.epochs):
        engine.set_epoch_lr(epoch)
        rng = np.random.default_rng((seed, config.search.split_seed, epoch))
        train_order = rng.permutation(len(train_set))
        val_order = rng.permutation(len(val_set))
        if len(val_order) < len(train_order):
            reps = -(-len(train_order) // len(val_order))
            val_order = np.tile(val_order, reps)[: len(train_order)]
        train_losses, val_losses = [], []
        for tb, vb in zip(_batches(train_tensors, train_order, batch),
                          _batches(val_tensors, val_order, batch)):
            losses = engine.step(tb, vb)
            train_losses.append(losses["train_loss"])
            val_losses.append(losses["val_loss"])
        entropies = engine.alpha.entropies()
        engine.history.append({
            "epoch": epoch + 1,
            "train_loss": float(np.mean(train_losses)),
            "val_loss": float(np.mean(val_losses)),
            "entropy_mm": entropies["mm"],
            "entropy_ms": entropies["ms"],
            "entropy_ga": entropies["ga"],
            "entropy_sr": entropies["sr"],
            "genotype": engine.genotype().emit(),
        })
        engine.epochs_done = epoch + 1
        if workdir:
            os.makedirs(workdir, exist_ok=True)
            engine.save(os.path.join(workdir, f"search_epoch{epoch + 1:03d}.pt"))

    return engine.genotype(), engine.history


HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "entropy_mm",
                   "entropy_ms", "entropy_ga", "entropy_sr")


def write_history_csv(history: list[dict], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow([row[c] for c in HISTORY_COLUMNS])
