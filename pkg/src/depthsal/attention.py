"""Depth-region attention over RGB features.

Each depth region mask becomes one sub-branch: the mask is max-pooled down to
the feature resolution, combined with the features (element-wise multiply by
default), passed through that sub-branch's own 1x1 transition conv, and the
sub-branch outputs are summed and added back onto the input features as a
residual.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

FUSION_MODES = ("mul", "sum", "concat")


def align_mask(mask: torch.Tensor, target: tuple[int, int]) -> torch.Tensor:
    """Max-pool a (H, W) or (B, T, H, W) mask down to `target` = (h, w)."""
    squeeze = mask.dim() == 2
    if squeeze:
        mask = mask[None, None]
    h, w = mask.shape[-2:]
    th, tw = target
    if h % th != 0 or w % tw != 0:
        raise ValueError(f"mask size {(h, w)} is not an integer multiple of {target}")
    kh, kw = h // th, w // tw
    out = F.max_pool2d(mask, kernel_size=(kh, kw), stride=(kh, kw)) if (kh, kw) != (1, 1) else mask
    return out[0, 0] if squeeze else out


class DepthSensitiveAttention(nn.Module):
    """Residual feature enhancement from T+1 depth region masks.

    `fusion` selects how a mask meets the features before the transition conv:
    'mul' (spatial attention), 'sum', or 'concat' (mask appended as an extra
    channel, so the transition maps C+1 -> C).
    """

    def __init__(self, channels: int, regions: int, fusion: str = "mul"):
        super().__init__()
        if fusion not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode: {fusion!r}")
        self.channels = channels
        self.regions = regions
        self.fusion = fusion
        in_ch = channels + 1 if fusion == "concat" else channels
        self.transitions = nn.ModuleList(
            [nn.Conv2d(in_ch, channels, kernel_size=1) for _ in range(regions)]
        )
        self.reset_parameters()

    def reset_parameters(self):
        for conv in self.transitions:
            nn.init.normal_(conv.weight, std=0.01)
            nn.init.zeros_(conv.bias)

    def forward(self, feats: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
        """feats (B, C, h, w); masks (B, T+1, H, W) with H, W multiples of h, w."""
        if feats.dim() != 4 or masks.dim() != 4:
            raise ValueError("expected batched 4-D feats and masks")
        if masks.shape[1] != self.regions:
            raise ValueError(
                f"expected {self.regions} region masks, got {masks.shape[1]}"
            )
        if masks.shape[0] != feats.shape[0]:
            raise ValueError("batch size mismatch between feats and masks")
        aligned = align_mask(masks, feats.shape[-2:])
        enhanced = 0.0
        for t, conv in enumerate(self.transitions):
            p_t = aligned[:, t : t + 1]
            if self.fusion == "mul":
                branch = p_t * feats
            elif self.fusion == "sum":
                branch = p_t + feats
            else:
                branch = torch.cat([feats, p_t], dim=1)
            enhanced = enhanced + conv(branch)
        return feats + enhanced


def init_attention(
    channels: int, regions: int, rng_seed: int, fusion: str = "mul"
) -> DepthSensitiveAttention:
    """Build a module with seed-deterministic small-variance initialization."""
    if channels < 1:
        raise ValueError("channels must be >= 1")
    with torch.random.fork_rng():
        torch.manual_seed(rng_seed)
        module = DepthSensitiveAttention(channels, regions, fusion=fusion)
    return module
