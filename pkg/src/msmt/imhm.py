"""Iterative multi-headed refinement of a feature map.

A stage chains several memory heads: every head's memory is written from the
stage input, while queries iterate over the running update, and each head's
output is folded in through its own gated fusion.  A final skip fusion with
the stage input feeds residual blocks, one upsampling block (doubling the
resolution) and the stage's image head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from msmt import tensor as T
from msmt.fusion import fuse, init_fusion_params
from msmt.mtwig import StageFeatures, predict_image
from msmt.sdm import GridSpec, MemoryBank, SdmParams, grid_average, run_head, write_memory
from msmt.tensor import Tensor

RESIDUAL_BLOCKS = 2


@dataclass
class RefineResult:
    stage_features: StageFeatures
    image: Tensor
    head_outputs: list[Tensor]   # O_t per head, each (s, s, n_feat)
    banks: list[MemoryBank]
    updates: list[Tensor]        # U_t per head


class RefinementStage:
    """Parameters of one refinement stage: per-head memories and fusions, a
    skip fusion, residual blocks, an upsampling block and an image head."""

    def __init__(self, stage_index: int, head_count: int, n_word: int, n_feat: int,
                 n_mem: int, grid: GridSpec, rng: np.random.Generator, scale: float = 1.0):
        if head_count < 1:
            raise ValueError("a refinement stage needs at least one head")
        self.stage_index = stage_index
        self.head_count = head_count
        self.grid = grid
        self.n_feat = n_feat
        self.heads = [SdmParams(n_word, n_feat, n_mem, grid, rng, scale=scale)
                      for _ in range(head_count)]
        self.head_fusions = [init_fusion_params(n_feat, rng, scale=scale)
                             for _ in range(head_count)]
        self.skip_fusion = init_fusion_params(n_feat, rng, scale=scale)

        def conv(cin, cout):
            std = scale / np.sqrt(9 * cin)
            w = Tensor(rng.normal(scale=std, size=(3, 3, cin, cout)), requires_grad=True)
            b = Tensor(np.zeros(cout), requires_grad=True)
            return w, b

        self.res_blocks = [(conv(n_feat, n_feat), conv(n_feat, n_feat))
                           for _ in range(RESIDUAL_BLOCKS)]
        self.up_w, self.up_b = conv(n_feat, n_feat)
        self.image_w, self.image_b = conv(n_feat, 3)

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for t, head in enumerate(self.heads):
            for name, tensor in head.parameters().items():
                params[f"head{t}.{name}"] = tensor
        for t, fp in enumerate(self.head_fusions):
            params[f"fuse{t}.gate"] = fp.gate
            params[f"fuse{t}.bias"] = fp.bias
        params["skip.gate"] = self.skip_fusion.gate
        params["skip.bias"] = self.skip_fusion.bias
        for i, ((w1, b1), (w2, b2)) in enumerate(self.res_blocks):
            params[f"res{i}a_w"], params[f"res{i}a_b"] = w1, b1
            params[f"res{i}b_w"], params[f"res{i}b_b"] = w2, b2
        params["up_w"], params["up_b"] = self.up_w, self.up_b
        params["image_w"], params["image_b"] = self.image_w, self.image_b
        return params


def _residual(x: Tensor, block) -> Tensor:
    (w1, b1), (w2, b2) = block
    inner = T.tanh(T.add(T.conv2d(x, w1), b1))
    return T.add(x, T.add(T.conv2d(inner, w2), b2))


def refine(r_prev: StageFeatures, words: Tensor, stage: RefinementStage) -> RefineResult:
    """One stage pass: T head passes, T+1 fusions, residuals, upsample, image."""
    grid = stage.grid
    if r_prev.features.shape[:2] != (grid.s, grid.s):
        raise ValueError(
            f"stage {stage.stage_index} expects {grid.s}x{grid.s} input features, "
            f"got {r_prev.features.shape}")
    source = r_prev.features
    head_outputs, banks, updates = [], [], []
    update = source
    for head, fusion in zip(stage.heads, stage.head_fusions):
        out, bank, _ = run_head(head, words, memory_source=source, query_source=update)
        update = fuse(update, out.features, fusion)
        head_outputs.append(out.features)
        banks.append(bank)
        updates.append(update)

    response = fuse(update, source, stage.skip_fusion)
    for block in stage.res_blocks:
        response = _residual(response, block)
    upsampled = T.tanh(T.add(T.conv2d(T.upsample_nearest(response), stage.up_w), stage.up_b))
    image = predict_image(upsampled, stage.image_w, stage.image_b)
    features = StageFeatures(features=upsampled, stage=stage.stage_index,
                             resolution=2 * grid.s)
    return RefineResult(stage_features=features, image=image, head_outputs=head_outputs,
                        banks=banks, updates=updates)


def memory_source_check(stage: RefinementStage, r_prev: StageFeatures, words: Tensor) -> None:
    """Assert that head memories are written from the stage input only.

    Probes: changing an earlier head's parameters must leave later banks
    untouched (only queries iterate), while perturbing the stage input must
    move every bank.
    """
    base = refine(r_prev, words, stage)

    if stage.head_count > 1:
        delta = 0.33
        stage.heads[0].value_b.data += delta
        try:
            probe = refine(r_prev, words, stage)
        finally:
            stage.heads[0].value_b.data -= delta
        if not np.array_equal(probe.banks[1].slots.data, base.banks[1].slots.data):
            raise AssertionError("head 2 memory bank moved when only head 1's output changed")
        if np.array_equal(probe.head_outputs[0].data, base.head_outputs[0].data):
            raise AssertionError("perturbing head 1 parameters had no effect at all")

    perturbed = StageFeatures(
        features=Tensor(r_prev.features.data + 0.21), stage=r_prev.stage,
        resolution=r_prev.resolution)
    moved = refine(perturbed, words, stage)
    for t, (a, b) in enumerate(zip(moved.banks, base.banks)):
        if np.array_equal(a.slots.data, b.slots.data):
            raise AssertionError(f"head {t + 1} memory bank ignores the stage input")

    grid_feats = grid_average(r_prev.features, stage.grid)
    for t in range(1, stage.head_count):
        a = write_memory(words, grid_feats, stage.heads[0]).slots.data
        b = write_memory(words, grid_feats, stage.heads[t]).slots.data
        if np.array_equal(a, b):
            raise AssertionError(f"heads 1 and {t + 1} share identical memory banks")
