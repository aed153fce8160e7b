"""Adaptive gated fusion of two same-shape feature maps.

Each pixel gets a scalar gate g = sigmoid(P . concat(a, b) + rho) that blends
the two maps as a*g + b*(1-g), so the result stays elementwise between its
operands.  Every fusion site in the pipeline owns its own (P, rho) pair.
"""

from __future__ import annotations

import numpy as np

from msmt import tensor as T
from msmt.tensor import Tensor


class FusionParams:
    """Gate parameters: P is a single row over 2*channels, rho a scalar bias."""

    def __init__(self, gate: Tensor, bias: Tensor):
        if gate.ndim != 1 or gate.shape[0] % 2 != 0:
            raise ValueError(f"fusion gate must be a vector over 2*channels, got shape {gate.shape}")
        self.gate = gate
        self.bias = bias

    @property
    def channels(self) -> int:
        return self.gate.shape[0] // 2

    def parameters(self) -> dict[str, Tensor]:
        return {"gate": self.gate, "bias": self.bias}


def init_fusion_params(channels: int, rng: np.random.Generator, scale: float = 1.0) -> FusionParams:
    gate = Tensor(rng.normal(scale=scale / np.sqrt(2 * channels), size=2 * channels),
                  requires_grad=True)
    bias = Tensor(np.zeros(()), requires_grad=True)
    return FusionParams(gate, bias)


def fuse(a: Tensor, b: Tensor, params: FusionParams) -> Tensor:
    """Gated blend of two (s,s,C) feature maps; gate is scalar per pixel."""
    if a.shape != b.shape:
        raise ValueError(f"fuse operands must share a shape, got {a.shape} and {b.shape}")
    if a.shape[-1] != params.channels:
        raise ValueError(
            f"fuse params built for {params.channels} channels, features have {a.shape[-1]}"
        )
    joint = T.concat([a, b], axis=-1)
    pre = T.tsum(T.mul(joint, params.gate), axis=-1, keepdims=True) + params.bias
    g = T.sigmoid(pre)
    return T.add(T.mul(a, g), T.mul(b, 1.0 - g))
