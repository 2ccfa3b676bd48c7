"""Configuration tree: defaults, YAML loading, dotted-key overrides.

Every run artifact (checkpoint, report) embeds the resolved config dict so
results stay traceable to the exact settings that produced them.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import yaml

PAPER_SUM_LR = 1e-10
DESK_MEAN_LR = 0.025


@dataclass
class BackboneSection:
    variant: str = "tiny"
    rgb_channels: list = field(default_factory=lambda: [32, 64, 128, 128, 128])
    depth_channels: list = field(default_factory=lambda: [16, 32, 64, 64, 64])
    input_size: list = field(default_factory=lambda: [256, 256])


@dataclass
class DsamSection:
    regions: int = 3  # T+1
    bins: int = 64
    smooth_width: int = 5
    mask_mode: str = "soft"
    fusion: str = "mul"


@dataclass
class CellsSection:
    width: int = 16
    mm_nodes: int = 8
    ms_nodes: int = 8
    ga_nodes: int = 8
    sr_nodes: int = 4
    top2_prune: bool = False


@dataclass
class SearchSection:
    epochs: int = 50
    batch_size: int = 8
    alpha_lr: float = 3e-4
    alpha_betas: list = field(default_factory=lambda: [0.5, 0.999])
    alpha_weight_decay: float = 1e-3
    w_lr: float = 0.025
    w_momentum: float = 0.9
    w_weight_decay: float = 3e-4
    split_seed: int = 0
    lr_schedule: str = "constant"


@dataclass
class TrainSection:
    epochs: int = 60
    batch_size: int = 2
    loss_mode: str = "desk_mean"
    lr: float | None = None  # None = mode default
    momentum: float = 0.9
    weight_decay: float = 5e-4
    flip: bool = True
    crop: bool = True
    rotate: bool = True

    @property
    def resolved_lr(self) -> float:
        if self.lr is not None:
            return self.lr
        return PAPER_SUM_LR if self.loss_mode == "paper_sum" else DESK_MEAN_LR


@dataclass
class DataSection:
    num_samples: int = 32
    num_distractors: int = 4
    depth_noise_std: float = 1.0
    seed: int = 0


@dataclass
class Config:
    backbone: BackboneSection = field(default_factory=BackboneSection)
    dsam: DsamSection = field(default_factory=DsamSection)
    cells: CellsSection = field(default_factory=CellsSection)
    search: SearchSection = field(default_factory=SearchSection)
    train: TrainSection = field(default_factory=TrainSection)
    data: DataSection = field(default_factory=DataSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        cfg = cls()
        for section, values in (data or {}).items():
            if not hasattr(cfg, section):
                raise ValueError(f"unknown config section: {section!r}")
            target = getattr(cfg, section)
            for key, value in (values or {}).items():
                if not hasattr(target, key):
                    raise ValueError(f"unknown config key: {section}.{key}")
                setattr(target, key, value)
        return cfg

    @classmethod
    def from_file(cls, path) -> "Config":
        with open(path) as fh:
            data = yaml.safe_load(fh)
        return cls.from_dict(data or {})

    def apply_overrides(self, overrides: list[str]) -> "Config":
        """Apply `section.key=value` strings; values parse as YAML scalars."""
        for item in overrides:
            key, sep, value = item.partition("=")
            if not sep:
                raise ValueError(f"override must look like section.key=value: {item!r}")
            section, dot, name = key.strip().partition(".")
            if not dot or not hasattr(self, section):
                raise ValueError(f"unknown config key: {key!r}")
            target = getattr(self, section)
            if not hasattr(target, name):
                raise ValueError(f"unknown config key: {key!r}")
            setattr(target, name, yaml.safe_load(value))
        return self
