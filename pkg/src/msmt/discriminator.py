"""Per-stage discriminator with unconditional and conditional scoring heads.

Stride-2 4x4 convolutions with leaky-relu downsample the image to a 4x4 map.
The unconditional head reduces it to a single sigmoid probability; the
conditional head first tiles the sentence vector across the map and mixes it
in with a 1x1 convolution before its own reduction.
"""

from __future__ import annotations

import numpy as np

from msmt import tensor as T
from msmt.tensor import Tensor

LEAK = 0.2


class Discriminator:
    """One stage's two-headed discriminator for images at a fixed resolution."""

    def __init__(self, resolution: int, n_sentence: int, n_base: int,
                 rng: np.random.Generator, scale: float = 1.0):
        if resolution < 8 or resolution & (resolution - 1):
            raise ValueError(f"discriminator resolution must be a power of two >= 8, got {resolution}")
        self.resolution = resolution
        self.n_sentence = n_sentence
        levels = int(np.log2(resolution // 4))

        def conv(kh, kw, cin, cout):
            std = scale / np.sqrt(kh * kw * cin)
            w = Tensor(rng.normal(scale=std, size=(kh, kw, cin, cout)), requires_grad=True)
            b = Tensor(np.zeros(cout), requires_grad=True)
            return w, b

        self.downs = []
        cin = 3
        for i in range(levels):
            cout = min(n_base * (2 ** i), n_base * 8)
            self.downs.append(conv(4, 4, cin, cout))
            cin = cout
        self.top_channels = cin
        self.uncond_w, self.uncond_b = conv(4, 4, cin, 1)
        self.joint_w, self.joint_b = conv(1, 1, cin + n_sentence, cin)
        self.cond_w, self.cond_b = conv(4, 4, cin, 1)

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for i, (w, b) in enumerate(self.downs):
            params[f"down{i}_w"], params[f"down{i}_b"] = w, b
        params["uncond_w"], params["uncond_b"] = self.uncond_w, self.uncond_b
        params["joint_w"], params["joint_b"] = self.joint_w, self.joint_b
        params["cond_w"], params["cond_b"] = self.cond_w, self.cond_b
        return params

    def score(self, image: Tensor, sentence: Tensor) -> tuple[Tensor, Tensor]:
        """Sigmoid probabilities (unconditional, conditional) for one image."""
        if image.shape[:2] != (self.resolution, self.resolution) or image.shape[2] != 3:
            raise ValueError(
                f"discriminator expects {self.resolution}x{self.resolution}x3 images, "
                f"got {image.shape}")
        x = image
        for w, b in self.downs:
            x = T.leaky_relu(T.add(T.conv2d(x, w, stride=2, padding=1), b), LEAK)

        uncond = T.sigmoid(T.reshape(
            T.add(T.conv2d(x, self.uncond_w, padding="none"), self.uncond_b), ()))

        tiled = T.broadcast_to(T.reshape(sentence, (1, 1, self.n_sentence)),
                               (4, 4, self.n_sentence))
        joint = T.concat([x, tiled], axis=-1)
        joint = T.leaky_relu(T.add(T.conv2d(joint, self.joint_w, padding="none"), self.joint_b), LEAK)
        cond = T.sigmoid(T.reshape(
            T.add(T.conv2d(joint, self.cond_w, padding="none"), self.cond_b), ()))
        return uncond, cond
