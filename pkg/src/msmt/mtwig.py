"""Initial image generation from word n-grams.

Each caption word is concatenated with the resampled sentence vector and the
noise vector; a stride-1 1-d convolution over that sequence yields one
feature vector per n-gram window (no padding, so T = L - ks + 1).  A shared
upsampling tower turns every window vector into a full "tail" feature map,
and a gated fold merges the tails into the first stage's features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from msmt import tensor as T
from msmt.fusion import FusionParams, fuse, init_fusion_params
from msmt.tensor import Tensor


@dataclass
class StageFeatures:
    features: Tensor   # (s, s, n_feat)
    stage: int
    resolution: int


@dataclass
class TailSequence:
    window_features: Tensor   # (T, n_f)
    tails: list[Tensor]       # T maps of (s0, s0, n_feat)
    kernel_size: int

    @property
    def count(self) -> int:
        return len(self.tails)


class MtwigParams:
    """Window conv, seed projection, shared upsampling tower, tail fusion and
    image head for the initial stage.

    The tower seeds a 4x4 map with 8*n_feat channels and halves the channel
    count per upsampling block, with the last block pinned to n_feat, so the
    depth is exactly log2(s0/4).
    """

    def __init__(self, n_word: int, n_noise: int, n_cond: int, n_feat: int,
                 resolution: int, kernel_size: int, rng: np.random.Generator,
                 n_window: int | None = None, scale: float = 1.0):
        if resolution < 4 or resolution & (resolution - 1):
            raise ValueError(f"initial resolution must be a power of two >= 4, got {resolution}")
        self.n_word, self.n_noise, self.n_cond = n_word, n_noise, n_cond
        self.n_feat = n_feat
        self.resolution = resolution
        self.kernel_size = kernel_size
        n_in = n_cond + n_noise + n_word
        self.n_window = n_in if n_window is None else n_window

        depth = int(np.log2(resolution // 4))
        seed_channels = 8 * n_feat if depth else n_feat
        channels = [seed_channels >> i for i in range(1, depth)] + [n_feat] if depth else []

        def normal(shape, fan_in):
            # fan-in scaled init keeps activation magnitudes through the tower
            return Tensor(rng.normal(scale=scale / np.sqrt(fan_in), size=shape),
                          requires_grad=True)

        def zeros(shape):
            return Tensor(np.zeros(shape), requires_grad=True)

        self.window_w = normal((kernel_size, n_in, self.n_window), kernel_size * n_in)
        self.window_b = zeros(self.n_window)
        self.seed_w = normal((self.n_window, 4 * 4 * seed_channels), self.n_window)
        self.seed_b = zeros(4 * 4 * seed_channels)
        self.seed_channels = seed_channels
        self.tower = []
        cin = seed_channels
        for cout in channels:
            self.tower.append((normal((3, 3, cin, cout), 9 * cin), zeros(cout)))
            cin = cout
        self.fusion = init_fusion_params(n_feat, rng, scale=scale)
        self.image_w = normal((3, 3, n_feat, 3), 9 * n_feat)
        self.image_b = zeros(3)

    def parameters(self) -> dict[str, Tensor]:
        params = {
            "window_w": self.window_w,
            "window_b": self.window_b,
            "seed_w": self.seed_w,
            "seed_b": self.seed_b,
        }
        for i, (w, b) in enumerate(self.tower):
            params[f"tower{i}_w"] = w
            params[f"tower{i}_b"] = b
        params["fuse_gate"] = self.fusion.gate
        params["fuse_bias"] = self.fusion.bias
        params["image_w"] = self.image_w
        params["image_b"] = self.image_b
        return params


def make_tail_inputs(resampled: Tensor, noise: Tensor, words: Tensor,
                     kernel_size: int) -> Tensor:
    """Per-word concat(s', z, w_l) rows, shape (L, n_cond+n_noise+n_word)."""
    length = words.shape[0]
    if length < kernel_size:
        raise ValueError(f"caption length {length} is shorter than the window size {kernel_size}")
    rows = [
        T.broadcast_to(T.reshape(resampled, (1, resampled.shape[0])), (length, resampled.shape[0])),
        T.broadcast_to(T.reshape(noise, (1, noise.shape[0])), (length, noise.shape[0])),
        words,
    ]
    return T.concat(rows, axis=1)


def _tower_pass(params: MtwigParams, window_vec: Tensor) -> Tensor:
    seeded = T.add(T.matmul(window_vec, params.seed_w), params.seed_b)
    fmap = T.reshape(seeded, (4, 4, params.seed_channels))
    for w, b in params.tower:
        fmap = T.tanh(T.add(T.conv2d(T.upsample_nearest(fmap), w), b))
    return fmap


def generate_tails(inputs: Tensor, params: MtwigParams) -> TailSequence:
    """Window conv then the shared tower, one tail per n-gram window."""
    windows = T.add(T.conv1d(inputs, params.window_w), params.window_b)  # (T, n_window)
    count = windows.shape[0]
    tails = [
        _tower_pass(params, T.reshape(windows[t], (1, params.n_window)))
        for t in range(count)
    ]
    return TailSequence(window_features=windows, tails=tails, kernel_size=params.kernel_size)


def fuse_tails(tails: TailSequence, fusion: FusionParams) -> StageFeatures:
    """Left fold of the tails through the stage's gated fusion."""
    if tails.count < 1:
        raise ValueError("at least one tail is required")
    folded = tails.tails[0]
    for tail in tails.tails[1:]:
        folded = fuse(folded, tail, fusion)
    return StageFeatures(features=folded, stage=1, resolution=folded.shape[0])


def predict_image(features: Tensor, image_w: Tensor, image_b: Tensor) -> Tensor:
    """3x3 conv plus tanh: feature map -> image with pixels in [-1,1]."""
    return T.tanh(T.add(T.conv2d(features, image_w), image_b))


def run_mtwig(params: MtwigParams, resampled: Tensor, noise: Tensor,
              words: Tensor) -> tuple[StageFeatures, Tensor, TailSequence]:
    inputs = make_tail_inputs(resampled, noise, words, params.kernel_size)
    tails = generate_tails(inputs, params)
    stage = fuse_tails(tails, params.fusion)
    image = predict_image(stage.features, params.image_w, params.image_b)
    return stage, image, tails
