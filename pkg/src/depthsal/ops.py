"""Candidate operations for the searchable fusion cells.

All eight ops preserve (C, H, W). Conv-type ops are conv -> GroupNorm ->
ReLU; pooling and skip are bare; the two attention ops are sigmoid gates.
The declaration order of OP_NAMES is the tie-break order everywhere
(argmax discretization prefers earlier names on exact ties).
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

OP_NAMES = (
    "max_pool3",
    "skip",
    "conv3",
    "conv1",
    "sep_conv3",
    "dil_conv3_r2",
    "spatial_attn3",
    "channel_attn1",
)

NUM_OPS = len(OP_NAMES)


def _conv_norm_relu(conv: nn.Module, channels: int) -> nn.Sequential:
    return nn.Sequential(conv, nn.GroupNorm(1, channels), nn.ReLU(inplace=False))


class SepConv(nn.Module):
    """Depthwise 3x3 + pointwise 1x1."""

    def __init__(self, channels: int):
        super().__init__()
        self.body = _conv_norm_relu(
            nn.Sequential(
                nn.Conv2d(channels, channels, 3, padding=1, groups=channels),
                nn.Conv2d(channels, channels, 1),
            ),
            channels,
        )

    def forward(self, x):
        return self.body(x)


class SpatialAttn(nn.Module):
    """x * sigmoid(conv3x3 -> 1 channel), broadcast over channels."""

    def __init__(self, channels: int):
        super().__init__()
        self.gate = nn.Conv2d(channels, 1, 3, padding=1)

    def forward(self, x):
        return x * torch.sigmoid(self.gate(x))


class ChannelAttn(nn.Module):
    """x * sigmoid(conv1x1 on the globally average-pooled vector)."""

    def __init__(self, channels: int):
        super().__init__()
        self.gate = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        g = F.adaptive_avg_pool2d(x, 1)
        return x * torch.sigmoid(self.gate(g))


def make_op(name: str, channels: int) -> nn.Module:
    if name == "max_pool3":
        return nn.MaxPool2d(3, stride=1, padding=1)
    if name == "skip":
        return nn.Identity()
    if name == "conv3":
        return _conv_norm_relu(nn.Conv2d(channels, channels, 3, padding=1), channels)
    if name == "conv1":
        return _conv_norm_relu(nn.Conv2d(channels, channels, 1), channels)
    if name == "sep_conv3":
        return SepConv(channels)
    if name == "dil_conv3_r2":
        return _conv_norm_relu(
            nn.Conv2d(channels, channels, 3, padding=2, dilation=2), channels
        )
    if name == "spatial_attn3":
        return SpatialAttn(channels)
    if name == "channel_attn1":
        return ChannelAttn(channels)
    raise ValueError(f"unknown op: {name!r}")


class MixedOp(nn.Module):
    """One edge of the DAG: either the softmax blend of all candidates, or a
    single fixed op when built from a discretized architecture."""

    def __init__(self, channels: int, fixed_op: str | None = None):
        super().__init__()
        self.fixed_op = fixed_op
        if fixed_op is None:
            self.ops = nn.ModuleList([make_op(name, channels) for name in OP_NAMES])
        else:
            self.ops = nn.ModuleList([make_op(fixed_op, channels)])

    def forward(self, x: torch.Tensor, weights: torch.Tensor | None = None,
                op_name: str | None = None) -> torch.Tensor:
        if self.fixed_op is not None:
            return self.ops[0](x)
        if op_name is not None:
            return self.ops[OP_NAMES.index(op_name)](x)
        if weights is None:
            raise ValueError("mixed op needs softmax weights or an op name")
        out = 0.0
        for w, op in zip(weights, self.ops):
            out = out + w * op(x)
        return out
