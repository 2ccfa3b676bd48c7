"""Saliency evaluation: mean F-measure, MAE, S-measure, E-measure.

Conventions that shift absolute numbers and are therefore worth stating up
front:

* F-measure binarizes at the adaptive threshold min(2 * mean(pred), 1) and
  uses beta^2 = 0.3. Mean-F under this thresholding is what `f_measure`
  returns; there is no max-F sweep here.
* S-measure follows the structure-measure definition (object term plus a
  4-way region split at the ground-truth centroid), alpha = 0.5. Degenerate
  ground truths fall back to 1 - mean(pred) (all background) or mean(pred)
  (all foreground).
* E-measure is the enhanced-alignment measure on the adaptively binarized
  prediction, normalized by the pixel count so the perfect prediction scores
  exactly 1.0. Degenerate ground truths use mean(1 - pred_bin) / mean(pred_bin).

All functions take 2-D numpy arrays; predictions in [0, 1], ground truth
binary {0, 1}.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

_EPS = np.finfo(np.float64).eps


def _check_pair(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if pred.ndim != 2:
        raise ValueError("maps must be 2-D")
    return pred, gt


def adaptive_binarize(pred: np.ndarray) -> np.ndarray:
    """Threshold at min(2 * mean, 1); an all-zero map stays all background."""
    thr = min(2.0 * float(pred.mean()), 1.0)
    if thr <= 0.0:
        return pred > 0.0
    return pred >= thr


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _check_pair(pred, gt)
    return float(np.abs(pred - gt).mean())


def f_measure(pred: np.ndarray, gt: np.ndarray, beta2: float = 0.3) -> float:
    """Mean F at the adaptive threshold; requires a non-empty ground truth."""
    pred, gt = _check_pair(pred, gt)
    gt_fg = gt > 0.5
    if not gt_fg.any():
        raise ValueError("empty ground truth: F-measure undefined")
    binary = adaptive_binarize(pred)
    tp = float(np.count_nonzero(binary & gt_fg))
    n_pred = float(np.count_nonzero(binary))
    n_gt = float(np.count_nonzero(gt_fg))
    precision = tp / n_pred if n_pred > 0 else 0.0
    recall = tp / n_gt
    if precision + recall == 0.0:
        return 0.0
    return float((1.0 + beta2) * precision * recall / (beta2 * precision + recall))


def _object_score(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    x = float(values.mean())
    sigma = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + _EPS)


def _s_object(pred: np.ndarray, gt_fg: np.ndarray) -> float:
    fg = np.where(gt_fg, pred, 0.0)
    bg = np.where(gt_fg, 0.0, 1.0 - pred)
    u = float(gt_fg.mean())
    o_fg = _object_score(fg[gt_fg])
    o_bg = _object_score(bg[~gt_fg])
    return u * o_fg + (1.0 - u) * o_bg


def _centroid(gt_fg: np.ndarray) -> tuple[int, int]:
    """1-indexed split sizes (cols to the left block, rows to the top block)."""
    rows, cols = gt_fg.shape
    total = float(gt_fg.sum())
    if total == 0:
        return int(round(cols / 2)), int(round(rows / 2))
    i = np.arange(1, cols + 1)
    j = np.arange(1, rows + 1)
    x = int(round(float((gt_fg.sum(axis=0) * i).sum()) / total))
    y = int(round(float((gt_fg.sum(axis=1) * j).sum()) / total))
    return x, y


def _region_ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    if n == 0:
        return 1.0
    x = float(pred.mean())
    y = float(gt.mean())
    denom = n - 1 + _EPS
    sigma_x2 = float(((pred - x) ** 2).sum()) / denom
    sigma_y2 = float(((gt - y) ** 2).sum()) / denom
    sigma_xy = float(((pred - x) * (gt - y)).sum()) / denom
    alpha = 4.0 * x * y * sigma_xy
    beta = (x * x + y * y) * (sigma_x2 + sigma_y2)
    if alpha != 0.0:
        return alpha / (beta + _EPS)
    if beta == 0.0:
        return 1.0
    return 0.0


def _s_region(pred: np.ndarray, gt_fg: np.ndarray) -> float:
    rows, cols = gt_fg.shape
    x, y = _centroid(gt_fg)
    x = min(max(x, 0), cols)
    y = min(max(y, 0), rows)
    area = rows * cols
    w1 = (x * y) / area
    w2 = ((cols - x) * y) / area
    w3 = (x * (rows - y)) / area
    w4 = 1.0 - w1 - w2 - w3
    gt = gt_fg.astype(np.float64)
    blocks = [
        (pred[:y, :x], gt[:y, :x], w1),
        (pred[:y, x:], gt[:y, x:], w2),
        (pred[y:, :x], gt[y:, :x], w3),
        (pred[y:, x:], gt[y:, x:], w4),
    ]
    return sum(w * _region_ssim(p, g) for p, g, w in blocks)


def s_measure(pred: np.ndarray, gt: np.ndarray, alpha: float = 0.5) -> float:
    pred, gt = _check_pair(pred, gt)
    gt_fg = gt > 0.5
    u = float(gt_fg.mean())
    if u == 0.0:
        return 1.0 - float(pred.mean())
    if u == 1.0:
        return float(pred.mean())
    score = alpha * _s_object(pred, gt_fg) + (1.0 - alpha) * _s_region(pred, gt_fg)
    return float(max(score, 0.0))


def e_measure(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _check_pair(pred, gt)
    gt_fg = gt > 0.5
    binary = adaptive_binarize(pred)
    if np.array_equal(binary, gt_fg):
        return 1.0
    d_fm = binary.astype(np.float64)
    d_gt = gt_fg.astype(np.float64)
    if not gt_fg.any():
        enhanced = 1.0 - d_fm
    elif gt_fg.all():
        enhanced = d_fm
    else:
        a_fm = d_fm - d_fm.mean()
        a_gt = d_gt - d_gt.mean()
        align = 2.0 * a_gt * a_fm / (a_gt * a_gt + a_fm * a_fm + _EPS)
        enhanced = (align + 1.0) ** 2 / 4.0
    return float(np.clip(enhanced.mean(), 0.0, 1.0))


@dataclass
class MetricReport:
    """Per-image metric rows plus dataset means."""

    rows: list[dict] = field(default_factory=list)
    n_images: int = 0
    n_f_skipped: int = 0
    missing: list[str] = field(default_factory=list)
    config: dict | None = None

    @property
    def means(self) -> dict:
        out = {}
        for key in ("f", "mae", "s", "e"):
            vals = [r[key] for r in self.rows if r[key] is not None]
            out[key] = float(np.mean(vals)) if vals else float("nan")
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            if self.config is not None:
                import json

                fh.write("# config: " + json.dumps(self.config, sort_keys=True) + "\n")
            writer = csv.writer(fh)
            writer.writerow(["image", "F", "MAE", "S", "E"])
            for r in self.rows:
                writer.writerow([
                    r["id"],
                    "" if r["f"] is None else f"{r['f']:.6f}",
                    f"{r['mae']:.6f}",
                    f"{r['s']:.6f}",
                    f"{r['e']:.6f}",
                ])
            m = self.means
            writer.writerow(["mean", f"{m['f']:.6f}", f"{m['mae']:.6f}",
                             f"{m['s']:.6f}", f"{m['e']:.6f}"])


def score_pair(pred: np.ndarray, gt: np.ndarray, image_id: str = "") -> dict:
    """All four metrics for one image; F is None when the GT is empty."""
    row = {"id": image_id, "mae": mae(pred, gt), "s": s_measure(pred, gt),
           "e": e_measure(pred, gt)}
    try:
        row["f"] = f_measure(pred, gt)
    except ValueError:
        warnings.warn(f"empty ground truth for {image_id or 'image'}; F skipped")
        row["f"] = None
    return row


def evaluate_dataset(samples, predict_fn, config: dict | None = None) -> MetricReport:
    """Score every sample with `predict_fn(sample) -> saliency map`.

    Samples are processed in sorted-id order so reports are deterministic.
    """
    report = MetricReport(config=config)
    for sample in sorted(samples, key=lambda s: s.id):
        pred = np.asarray(predict_fn(sample), dtype=np.float64)
        row = score_pair(pred, sample.gt, image_id=sample.id)
        if row["f"] is None:
            report.n_f_skipped += 1
        report.rows.append(row)
        report.n_images += 1
    return report
