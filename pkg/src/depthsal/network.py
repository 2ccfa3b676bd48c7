"""Full two-stream saliency network: backbones + attention + fusion."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .backbones import BackboneConfig, DepthStream, PyramidStream, RGBStream
from .cells import default_specs
from .config import Config
from .fusion import ConcatFusion, FusionModule
from .genotype import Genotype
from .regions import DepthMap, decompose_depth, masks_to_array


class SaliencyNet(nn.Module):
    """rgb (B,3,H,W) + normalized depth (B,1,H,W) + region masks (B,T+1,H,W)
    -> saliency (B,1,H,W).

    fusion_kind 'cells' uses the searchable module (mixed when no genotype is
    given); 'concat' is the fixed concatenation baseline. use_attention=False
    drops the depth-attention modules from the RGB stream (masks are ignored).
    """

    def __init__(self, config: Config, genotype: Genotype | None = None,
                 fusion_kind: str = "cells", use_attention: bool = True):
        super().__init__()
        self.config = config
        self.use_attention = use_attention
        bb = BackboneConfig(
            variant=config.backbone.variant,
            rgb_channels=tuple(config.backbone.rgb_channels),
            depth_channels=tuple(config.backbone.depth_channels),
            input_size=tuple(config.backbone.input_size),
        )
        if use_attention:
            self.rgb_stream = RGBStream(bb, regions=config.dsam.regions,
                                        fusion=config.dsam.fusion)
        else:
            self.rgb_stream = PyramidStream(3, bb.rgb_channels, bb.convs_per_stage)
        self.depth_stream = DepthStream(bb)
        specs = default_specs(
            width=config.cells.width,
            num_nodes={"mm": config.cells.mm_nodes, "ms": config.cells.ms_nodes,
                       "ga": config.cells.ga_nodes, "sr": config.cells.sr_nodes},
        )
        self.specs = specs
        if fusion_kind == "cells":
            self.fusion = FusionModule(bb.rgb_channels, bb.depth_channels, specs,
                                       genotype=genotype)
        elif fusion_kind == "concat":
            self.fusion = ConcatFusion(bb.rgb_channels, bb.depth_channels,
                                       config.cells.width)
        else:
            raise ValueError(f"unknown fusion kind: {fusion_kind!r}")
        self.fusion_kind = fusion_kind
        self.genotype = genotype

    def pyramids(self, rgb, depth_norm, masks):
        if self.use_attention:
            r = self.rgb_stream(rgb, masks)
        else:
            r = self.rgb_stream(rgb)
        d = self.depth_stream(depth_norm)
        return r, d

    def forward(self, rgb, depth_norm, masks, alpha=None, hard=None):
        r, d = self.pyramids(rgb, depth_norm, masks)
        _, _, _, saliency = self.fusion(r, d, alpha=alpha, hard=hard)
        return saliency


def build_network(config: Config, genotype: Genotype | None = None, seed: int = 0,
                  fusion_kind: str = "cells", use_attention: bool = True) -> SaliencyNet:
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        net = SaliencyNet(config, genotype=genotype, fusion_kind=fusion_kind,
                          use_attention=use_attention)
    return net


def sample_masks(depth: DepthMap, config: Config) -> np.ndarray:
    """Region masks for one sample as a (T+1, H, W) float32 array."""
    masks = decompose_depth(
        depth,
        regions=config.dsam.regions,
        bins=config.dsam.bins,
        smooth_width=config.dsam.smooth_width,
        mode=config.dsam.mask_mode,
    )
    arr = masks_to_array(masks)
    want = config.dsam.regions
    if arr.shape[0] < want:
        # fewer modes than requested: pad with empty masks before the remainder
        pad = np.zeros((want - arr.shape[0],) + arr.shape[1:], dtype=arr.dtype)
        arr = np.concatenate([arr[:-1], pad, arr[-1:]], axis=0)
    return arr


def normalize_depth(depth: DepthMap) -> np.ndarray:
    """Min-max depth over valid pixels to [0,1]; invalid pixels read 0."""
    vals = depth.values
    valid = depth.valid
    out = np.zeros(vals.shape, dtype=np.float32)
    if valid.any():
        v = vals[valid]
        lo, hi = float(v.min()), float(v.max())
        span = hi - lo if hi > lo else 1.0
        out[valid] = ((vals[valid] - lo) / span).astype(np.float32)
    return out


def collate_batch(samples, config: Config, device="cpu"):
    """Stack samples into (rgb, depth_norm, masks, gt) float32 tensors."""
    rgb = torch.from_numpy(np.stack([s.rgb for s in samples])).float()
    depth = torch.from_numpy(
        np.stack([normalize_depth(s.depth) for s in samples])
    ).unsqueeze(1)
    masks = torch.from_numpy(
        np.stack([sample_masks(s.depth, config) for s in samples])
    )
    gt = torch.from_numpy(
        np.stack([np.asarray(s.gt, dtype=np.float32) for s in samples])
    ).unsqueeze(1)
    return (rgb.to(device), depth.to(device), masks.to(device), gt.to(device))
