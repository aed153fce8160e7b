"""Run configuration with the desk and full-size presets.

The "paper" preset carries the full-size hyperparameters (feature dims,
heads, grid, optimizer constants); the "desk" preset is a small configuration
whose every path is cheap enough for exhaustive gradient audits and CPU
training runs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path


@dataclass
class Config:
    resolutions: list[int]
    n_word: int
    n_feat: int
    n_mem: int
    n_noise: int
    n_cond: int
    grid: int
    head_count: int
    kernel_size: int
    weight_ca: float
    weight_red: float
    lr: float
    beta1: float
    beta2: float
    batch_size: int
    epochs: int
    seed: int
    corpus_size: int
    preset: str = "custom"

    def __post_init__(self):
        if self.preset not in ("desk", "paper", "custom"):
            raise ValueError(f"unknown preset {self.preset!r}")
        if len(self.resolutions) < 1:
            raise ValueError("at least one stage resolution is required")
        for lo, hi in zip(self.resolutions, self.resolutions[1:]):
            if hi != 2 * lo:
                raise ValueError(f"stage resolutions must double: {self.resolutions}")
        for res in self.resolutions[:-1]:
            if res % self.grid != 0:
                raise ValueError(f"grid side {self.grid} must divide stage resolution {res}")
        if self.kernel_size < 1 or self.head_count < 1 or self.batch_size < 1:
            raise ValueError("kernel_size, head_count and batch_size must be positive")
        if self.weight_ca < 0 or self.weight_red < 0:
            raise ValueError("loss weights must be nonnegative")

    @property
    def stage_count(self) -> int:
        return len(self.resolutions)

    def to_dict(self) -> dict:
        return asdict(self)


_DESK = dict(
    resolutions=[16, 32],
    n_word=16,
    n_feat=8,
    n_mem=16,
    n_noise=8,
    n_cond=16,
    grid=4,
    head_count=2,
    kernel_size=3,
    weight_ca=1.0,
    weight_red=0.5,
    lr=2e-4,
    beta1=0.5,
    beta2=0.999,
    batch_size=8,
    epochs=30,
    seed=0,
    corpus_size=240,
    preset="desk",
)

_PAPER = dict(
    resolutions=[64, 128, 256],
    n_word=256,
    n_feat=48,
    n_mem=96,
    n_noise=100,
    n_cond=256,
    grid=8,
    head_count=6,
    kernel_size=3,
    weight_ca=1.0,
    weight_red=0.5,
    lr=2e-4,
    beta1=0.5,
    beta2=0.999,
    batch_size=20,
    epochs=700,
    seed=0,
    corpus_size=240,
    preset="paper",
)

PRESETS = {"desk": _DESK, "paper": _PAPER}


def preset(name: str) -> Config:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return Config(**PRESETS[name])


def from_dict(payload: dict) -> Config:
    """Build a Config from JSON data: a preset name plus field overrides."""
    known = {f.name for f in fields(Config)}
    unknown = set(payload) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    base = dict(PRESETS.get(payload.get("preset", "desk"), _DESK))
    base.update(payload)
    base.setdefault("preset", "custom")
    return Config(**base)


def load(path: str | Path) -> Config:
    return from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
