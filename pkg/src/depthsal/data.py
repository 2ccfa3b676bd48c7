"""Dataset ingestion and synthetic RGB-D scene generation.

Directory layout follows the usual saliency benchmark convention:

    root/
      RGB/<stem>.png     8-bit color
      depth/<stem>.png   8-bit or 16-bit single channel (0 = no reading)
      GT/<stem>.png      binary mask (binarized at 128)

Synthetic scenes place one salient shape in a near depth band and several
distractor shapes in a far band, all sharing the same color family, so depth
(not color) is what separates the salient object from the clutter.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .regions import DepthMap

IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass
class Sample:
    rgb: np.ndarray     # (3, H, W) float32 in [0,1]
    depth: DepthMap
    gt: np.ndarray      # (H, W) float32 binary
    id: str


@dataclass
class SynthConfig:
    num_samples: int = 32
    image_size: int = 64
    num_distractors: int = 4
    num_confusers: int = 0  # clutter inside the salient depth band
    depth_noise_std: float = 1.0
    seed: int = 0


def _nearest_resize(arr: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    h, w = arr.shape[:2]
    th, tw = size
    rows = np.minimum((np.arange(th) + 0.5) * h / th, h - 1).astype(int)
    cols = np.minimum((np.arange(tw) + 0.5) * w / tw, w - 1).astype(int)
    return arr[rows][:, cols]


def _find_stem(directory: str, stem: str) -> str | None:
    for ext in IMAGE_EXTS:
        path = os.path.join(directory, stem + ext)
        if os.path.exists(path):
            return path
    return None


def load_rgb(path: str, size: tuple[int, int]) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    if img.size != (size[1], size[0]):
        img = img.resize((size[1], size[0]), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


def load_depth(path: str, size: tuple[int, int]) -> DepthMap:
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr[..., 0]
    arr = arr.astype(np.float64)
    if arr.shape != tuple(size):
        arr = _nearest_resize(arr, size)
    return DepthMap.from_raw(arr)


def load_gt(path: str, size: tuple[int, int]) -> np.ndarray:
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr[..., 0]
    if arr.shape != tuple(size):
        arr = _nearest_resize(arr, size)
    return (arr >= 128).astype(np.float32)


def load_dataset(root_dir: str, input_size: tuple[int, int]) -> list[Sample]:
    rgb_dir = os.path.join(root_dir, "RGB")
    depth_dir = os.path.join(root_dir, "depth")
    gt_dir = os.path.join(root_dir, "GT")
    for d in (rgb_dir, depth_dir, gt_dir):
        if not os.path.isdir(d):
            raise FileNotFoundError(f"missing dataset subdirectory: {d}")
    stems = sorted(
        os.path.splitext(name)[0]
        for name in os.listdir(rgb_dir)
        if name.lower().endswith(IMAGE_EXTS)
    )
    if not stems:
        raise ValueError(f"no images found under {rgb_dir}")
    samples = []
    problems = []
    for stem in stems:
        rgb_path = _find_stem(rgb_dir, stem)
        depth_path = _find_stem(depth_dir, stem)
        gt_path = _find_stem(gt_dir, stem)
        if depth_path is None or gt_path is None:
            missing = [n for n, p in (("depth", depth_path), ("GT", gt_path))
                       if p is None]
            problems.append(f"{stem} (missing {', '.join(missing)})")
            continue
        samples.append(Sample(
            rgb=load_rgb(rgb_path, input_size),
            depth=load_depth(depth_path, input_size),
            gt=load_gt(gt_path, input_size),
            id=stem,
        ))
    if problems:
        raise ValueError("unmatched dataset stems: " + "; ".join(problems))
    return samples


def _disk(h: int, w: int, cy: float, cx: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def _box(h: int, w: int, cy: float, cx: float, half: float) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    return (np.abs(yy - cy) <= half) & (np.abs(xx - cx) <= half)


def synth_generate(config: SynthConfig) -> list[Sample]:
    """Deterministic synthetic scenes; GT is exactly the salient silhouette.

    Far distractors reuse the salient object's color (depth is needed to
    reject them). Optional confusers sit inside the salient depth band with
    their own colors (color is needed to reject those), so with confusers
    neither cue alone identifies the object.
    """
    samples = []
    for idx in range(config.num_samples):
        rng = np.random.default_rng((config.seed, idx))
        s = config.image_size
        depth = np.full((s, s), 210.0)
        base = rng.uniform(0.1, 0.9, size=3)
        obj_color = rng.uniform(0.1, 0.9, size=3)
        rgb = np.empty((3, s, s))
        for c in range(3):
            rgb[c] = base[c]

        def paint(mask, color, depth_value):
            depth[mask] = depth_value
            for c in range(3):
                rgb[c][mask] = color[c]

        for _ in range(config.num_distractors):
            r = rng.uniform(0.04, 0.08) * s
            cy, cx = rng.uniform(0, s, size=2)
            shape = _disk(s, s, cy, cx, r) if rng.random() < 0.5 else _box(s, s, cy, cx, r)
            jitter = np.clip(obj_color + rng.normal(0, 0.03, size=3), 0, 1)
            paint(shape, jitter, rng.uniform(140.0, 160.0))

        salient_depth = rng.uniform(50.0, 70.0)
        for _ in range(config.num_confusers):
            r = rng.uniform(0.04, 0.08) * s
            cy, cx = rng.uniform(0, s, size=2)
            shape = _disk(s, s, cy, cx, r) if rng.random() < 0.5 else _box(s, s, cy, cx, r)
            # push the confuser color away from the object color per channel
            offset = rng.uniform(0.25, 0.5, size=3) * rng.choice([-1, 1], size=3)
            color = np.clip(obj_color + offset, 0, 1)
            paint(shape, color, salient_depth + rng.uniform(-3.0, 3.0))

        r = rng.uniform(0.18, 0.25) * s
        margin = r + 2
        cy = rng.uniform(margin, s - margin)
        cx = rng.uniform(margin, s - margin)
        salient = _disk(s, s, cy, cx, r) if rng.random() < 0.5 else _box(s, s, cy, cx, r)
        paint(salient, obj_color, salient_depth)

        rgb += rng.normal(0, 0.05, size=rgb.shape)
        if config.depth_noise_std > 0:
            depth += rng.normal(0, config.depth_noise_std, size=depth.shape)
        depth = np.clip(depth, 1.0, None)

        samples.append(Sample(
            rgb=np.clip(rgb, 0, 1).astype(np.float32),
            depth=DepthMap(values=depth),
            gt=salient.astype(np.float32),
            id=f"synth_{idx:04d}",
        ))
    return samples


def save_dataset(samples: list[Sample], root_dir: str) -> None:
    """Write samples in the loadable directory layout (16-bit depth PNGs)."""
    for sub in ("RGB", "depth", "GT"):
        os.makedirs(os.path.join(root_dir, sub), exist_ok=True)
    for s in samples:
        rgb8 = np.clip(np.round(s.rgb.transpose(1, 2, 0) * 255), 0, 255).astype(np.uint8)
        Image.fromarray(rgb8).save(os.path.join(root_dir, "RGB", s.id + ".png"))
        depth16 = np.clip(np.round(s.depth.values), 0, 65535).astype(np.uint16)
        Image.fromarray(depth16).save(os.path.join(root_dir, "depth", s.id + ".png"))
        gt8 = (np.asarray(s.gt) > 0.5).astype(np.uint8) * 255
        Image.fromarray(gt8).save(os.path.join(root_dir, "GT", s.id + ".png"))
