"""Multi-modal multi-scale fusion over the two feature pyramids.

Wiring (r = RGB levels, d = depth levels, 1-indexed coarse-to-fine):

  C_n = MM_n(r_{n+1}, r_{n+2}, d_{n+1}, d_{n+2})      n = 1..3
  D_1 = MS_1(r_4, C_1, d_4)   D_2 = MS_2(r_5, C_2, d_5)
  D_3 = MS_3(r_3, C_3, d_3)   D_4 = MS_4(C_1, C_2, C_3)
  G   = GA(D_1..D_4)
  L_1 = SR_1(up2(G), d_2, r_2)
  L_2 = SR_2(up2(L_1), d_1, r_1)

L_2 lands at 1/4 of the input resolution; the decoder applies two x2
bilinear upsamplings, each followed by three 3x3 convs, and a final
1-channel sigmoid head.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .cells import Cell, CellSpec, ArchParams
from .genotype import Genotype


def _up2(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


class Decoder(nn.Module):
    def __init__(self, width: int):
        super().__init__()

        def block():
            layers = []
            for _ in range(3):
                layers += [nn.Conv2d(width, width, 3, padding=1),
                           nn.GroupNorm(1, width), nn.ReLU(inplace=True)]
            return nn.Sequential(*layers)

        self.block1 = block()
        self.block2 = block()
        self.head = nn.Conv2d(width, 1, 1)

    def forward(self, x):
        x = self.block1(_up2(x))
        x = self.block2(_up2(x))
        return torch.sigmoid(self.head(x))


class FusionModule(nn.Module):
    """Searchable (mixed) when genotype is None, discrete otherwise."""

    def __init__(self, rgb_channels, depth_channels, specs: dict[str, CellSpec],
                 genotype: Genotype | None = None):
        super().__init__()
        self.specs = specs
        self.genotype = genotype
        c = specs["mm"].width
        r, d = list(rgb_channels), list(depth_channels)

        def build(cell_type: str, in_ch: list[int]) -> Cell:
            edges = genotype.cells[cell_type] if genotype is not None else None
            return Cell(specs[cell_type], in_ch, genotype_edges=edges)

        self.mm = nn.ModuleList(
            [build("mm", [r[n], r[n + 1], d[n], d[n + 1]]) for n in range(1, 4)]
        )
        self.ms = nn.ModuleList([
            build("ms", [r[3], c, d[3]]),
            build("ms", [r[4], c, d[4]]),
            build("ms", [r[2], c, d[2]]),
            build("ms", [c, c, c]),
        ])
        self.ga = build("ga", [c, c, c, c])
        self.sr = nn.ModuleList([
            build("sr", [c, d[1], r[1]]),
            build("sr", [c, d[0], r[0]]),
        ])
        self.decoder = Decoder(c)

    def _cell_args(self, cell_type: str, alpha: ArchParams | None,
                   hard: Genotype | None) -> dict:
        if self.genotype is not None:
            return {}
        if hard is not None:
            return {"hard_edges": hard.cells[cell_type]}
        if alpha is None:
            raise ValueError("mixed fusion forward needs architecture parameters")
        return {"weights": alpha.weights(cell_type)}

    def forward(self, r_levels, d_levels, alpha: ArchParams | None = None,
                hard: Genotype | None = None):
        if len(r_levels) != 5 or len(d_levels) != 5:
            raise ValueError("fusion expects two 5-level pyramids")
        for rl, dl in zip(r_levels, d_levels):
            if rl.shape[-2:] != dl.shape[-2:]:
                raise ValueError("pyramid spatial sizes disagree between branches")
        r, d = list(r_levels), list(d_levels)
        kw = {t: self._cell_args(t, alpha, hard) for t in ("mm", "ms", "ga", "sr")}

        c_out = [self.mm[n](
            [r[n + 1], r[n + 2], d[n + 1], d[n + 2]], **kw["mm"]
        ) for n in range(3)]
        d_out = [
            self.ms[0]([r[3], c_out[0], d[3]], **kw["ms"]),
            self.ms[1]([r[4], c_out[1], d[4]], **kw["ms"]),
            self.ms[2]([r[2], c_out[2], d[2]], **kw["ms"]),
            self.ms[3](c_out, **kw["ms"]),
        ]
        g = self.ga(d_out, **kw["ga"])
        l1 = self.sr[0]([_up2(g), d[1], r[1]], **kw["sr"])
        l2 = self.sr[1]([_up2(l1), d[0], r[0]], **kw["sr"])
        saliency = self.decoder(l2)
        return g, l1, l2, saliency


class ConcatFusion(nn.Module):
    """No-search baseline: project every level, resize to the 1/4 scale,
    concatenate, fuse with two 3x3 convs, and decode."""

    def __init__(self, rgb_channels, depth_channels, width: int):
        super().__init__()
        channels = list(rgb_channels) + list(depth_channels)
        self.projections = nn.ModuleList(
            [nn.Sequential(nn.Conv2d(ch, width, 1), nn.GroupNorm(1, width),
                           nn.ReLU(inplace=True)) for ch in channels]
        )
        self.fuse = nn.Sequential(
            nn.Conv2d(10 * width, width, 3, padding=1), nn.GroupNorm(1, width),
            nn.ReLU(inplace=True),
            nn.Conv2d(width, width, 3, padding=1), nn.GroupNorm(1, width),
            nn.ReLU(inplace=True),
        )
        self.decoder = Decoder(width)

    def forward(self, r_levels, d_levels, alpha=None, hard=None):
        levels = list(r_levels) + list(d_levels)
        size = tuple(r_levels[2].shape[-2:])
        feats = [F.interpolate(proj(x), size=size, mode="bilinear",
                               align_corners=False) if x.shape[-2:] != size
                 else proj(x)
                 for proj, x in zip(self.projections, levels)]
        fused = self.fuse(torch.cat(feats, dim=1))
        saliency = self.decoder(fused)
        return None, None, fused, saliency
