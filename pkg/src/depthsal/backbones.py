"""Two-stream feature extractors: RGB (attention-enhanced) and depth.

Both streams emit a five-level pyramid at scales 1, 1/2, 1/4, 1/8, 1/16 of
the input. Stage 1 keeps full resolution; a 2x2 max-pool sits in front of
every later stage. Convolutions use replicate padding so constant inputs
produce spatially constant activations.

The `tiny` variant (two convs per stage) is the CPU-scale default; the
`vgg19` variant mirrors the classic channel/depth schedule (2,2,4,4,4 convs
with channels 64..512) but is trained from scratch here.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .attention import DepthSensitiveAttention

TINY_RGB_CHANNELS = (32, 64, 128, 128, 128)
TINY_DEPTH_CHANNELS = (16, 32, 64, 64, 64)
VGG19_CHANNELS = (64, 128, 256, 512, 512)
VGG19_CONVS_PER_STAGE = (2, 2, 4, 4, 4)
TINY_CONVS_PER_STAGE = (2, 2, 2, 2, 2)


@dataclass
class BackboneConfig:
    variant: str = "tiny"
    rgb_channels: tuple = TINY_RGB_CHANNELS
    depth_channels: tuple = TINY_DEPTH_CHANNELS
    input_size: tuple = (256, 256)

    def __post_init__(self):
        if self.variant not in ("tiny", "vgg19"):
            raise ValueError(f"unknown backbone variant: {self.variant!r}")
        if self.variant == "vgg19":
            self.rgb_channels = VGG19_CHANNELS
        if len(self.rgb_channels) != 5 or len(self.depth_channels) != 5:
            raise ValueError("stage channel schedules must have 5 entries")
        h, w = self.input_size
        if h % 16 != 0 or w % 16 != 0:
            raise ValueError(f"input size {self.input_size} must be divisible by 16")

    @property
    def convs_per_stage(self) -> tuple:
        return VGG19_CONVS_PER_STAGE if self.variant == "vgg19" else TINY_CONVS_PER_STAGE


def _conv_stage(in_ch: int, out_ch: int, n_convs: int) -> nn.Sequential:
    layers = []
    for i in range(n_convs):
        layers.append(
            nn.Conv2d(in_ch if i == 0 else out_ch, out_ch, kernel_size=3,
                      padding=1, padding_mode="replicate")
        )
        layers.append(nn.ReLU(inplace=True))
    return nn.Sequential(*layers)


def _init_convs(module: nn.Module):
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class PyramidStream(nn.Module):
    """Five conv stages with pooling between; returns all stage outputs."""

    def __init__(self, in_channels: int, stage_channels, convs_per_stage):
        super().__init__()
        self.stages = nn.ModuleList()
        prev = in_channels
        for ch, n in zip(stage_channels, convs_per_stage):
            self.stages.append(_conv_stage(prev, ch, n))
            prev = ch
        self.pool = nn.MaxPool2d(2, 2)
        _init_convs(self)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        levels = []
        for k, stage in enumerate(self.stages):
            if k > 0:
                x = self.pool(x)
            x = stage(x)
            levels.append(x)
        return levels


class RGBStream(nn.Module):
    """RGB pyramid with a depth-attention module after every stage."""

    def __init__(self, config: BackboneConfig, regions: int, fusion: str = "mul"):
        super().__init__()
        self.stream = PyramidStream(3, config.rgb_channels, config.convs_per_stage)
        self.attention = nn.ModuleList(
            [DepthSensitiveAttention(ch, regions, fusion=fusion)
             for ch in config.rgb_channels]
        )

    def forward(self, image: torch.Tensor, masks: torch.Tensor) -> list[torch.Tensor]:
        if image.shape[-2:] != masks.shape[-2:]:
            raise ValueError(
                f"mask size {tuple(masks.shape[-2:])} must match image size "
                f"{tuple(image.shape[-2:])}"
            )
        x = image
        levels = []
        for k, stage in enumerate(self.stream.stages):
            if k > 0:
                x = self.stream.pool(x)
            x = stage(x)
            x = self.attention[k](x, masks)
            levels.append(x)
        return levels


class DepthStream(nn.Module):
    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.stream = PyramidStream(1, config.depth_channels, config.convs_per_stage)

    def forward(self, depth: torch.Tensor) -> list[torch.Tensor]:
        return self.stream(depth)


def build_backbones(
    config: BackboneConfig, regions: int, rng_seed: int, fusion: str = "mul"
) -> tuple[RGBStream, DepthStream]:
    with torch.random.fork_rng():
        torch.manual_seed(rng_seed)
        rgb = RGBStream(config, regions, fusion=fusion)
        depth = DepthStream(config)
    return rgb, depth


def check_pyramid(levels: list[torch.Tensor], input_size: tuple[int, int]):
    """Assert the 1, 1/2, ..., 1/16 scale schedule; raises on violation."""
    h, w = input_size
    if len(levels) != 5:
        raise ValueError(f"expected 5 pyramid levels, got {len(levels)}")
    for k, level in enumerate(levels):
        expect = (h // 2 ** k, w // 2 ** k)
        if tuple(level.shape[-2:]) != expect:
            raise ValueError(
                f"level {k + 1} has size {tuple(level.shape[-2:])}, expected {expect}"
            )
