"""Spatial dynamic memory: one refinement head's write / address / read cycle.

The head partitions the incoming (s,s,C) feature map into an h-by-h grid,
writes one memory slot per (word, cell) pair by gating word content against
cell content, scores each slot's key encoding against per-pixel queries
assembled from global, cell and pixel views, and reads value encodings back
into a full-resolution refinement map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from msmt import tensor as T
from msmt.tensor import Tensor


@dataclass(frozen=True)
class GridSpec:
    """Fine resolution s split into an h-by-h grid of p-by-p pixel cells."""

    s: int
    h: int

    def __post_init__(self):
        if self.h < 1 or self.s % self.h != 0:
            raise ValueError(f"grid side {self.h} must divide resolution {self.s}")

    @property
    def p(self) -> int:
        return self.s // self.h


def pixel_index(cell: int, offset: int, p: int) -> int:
    """Row-major index of pixel `offset` inside cell `cell` (0-based)."""
    return cell * p + offset


@dataclass
class MemoryBank:
    slots: Tensor        # (L, h, h, n_mem)
    gates: Tensor        # (L, h, h)
    grid_features: Tensor  # (h, h, n_feat)


@dataclass
class QueryField:
    q_global: Tensor     # (n_feat,)
    q_grid: Tensor       # (h, h, n_feat)
    q_pixel: Tensor      # (h, h, p, p, n_feat)
    assembled: Tensor    # (h, h, p, p, 3*n_feat)


@dataclass
class AttentionField:
    weights: Tensor      # (L, h, h, p, p), sums to 1 over L


@dataclass
class RefinementOutput:
    features: Tensor         # (s, s, n_feat)
    cell_responses: Tensor   # (h, h, p, p, n_feat)


class SdmParams:
    """Parameters of a single refinement head.

    The gate mixes a word term (A, one row over word dims) with a cell term
    (B, one row per grid cell over feature dims).  Word and cell encoders map
    into memory space; key/value/query encoders are stride-1 same-padding
    convolutions.  The key encoder outputs 3*n_feat channels so slot keys can
    dot with the three-part assembled query.
    """

    def __init__(self, n_word: int, n_feat: int, n_mem: int, grid: GridSpec,
                 rng: np.random.Generator, scale: float = 1.0):
        def conv(kh, kw, cin, cout):
            # fan-in scaled init keeps activation magnitudes through depth
            std = scale / np.sqrt(kh * kw * cin)
            return Tensor(rng.normal(scale=std, size=(kh, kw, cin, cout)), requires_grad=True)

        def bias(n):
            return Tensor(np.zeros(n), requires_grad=True)

        self.grid = grid
        self.n_word, self.n_feat, self.n_mem = n_word, n_feat, n_mem
        self.gate_word = Tensor(rng.normal(scale=scale / np.sqrt(n_word), size=(n_word, 1)),
                                requires_grad=True)
        self.gate_cell = Tensor(rng.normal(scale=scale / np.sqrt(n_feat),
                                           size=(grid.h, grid.h, n_feat)), requires_grad=True)
        self.word_enc_w = Tensor(rng.normal(scale=scale / np.sqrt(n_word), size=(n_word, n_mem)),
                                 requires_grad=True)
        self.word_enc_b = bias(n_mem)
        self.cell_enc_w = conv(3, 3, n_feat, n_mem)
        self.cell_enc_b = bias(n_mem)
        self.q_global_w = conv(3, 3, n_feat, n_feat)
        self.q_global_b = bias(n_feat)
        self.q_grid_w = conv(3, 3, n_feat, n_feat)
        self.q_grid_b = bias(n_feat)
        self.q_pixel_w = conv(3, 3, n_feat, n_feat)
        self.q_pixel_b = bias(n_feat)
        self.key_w = conv(3, 3, n_mem, 3 * n_feat)
        self.key_b = bias(3 * n_feat)
        self.value_w = conv(3, 3, n_mem, n_feat)
        self.value_b = bias(n_feat)

    def parameters(self) -> dict[str, Tensor]:
        return {
            "gate_word": self.gate_word,
            "gate_cell": self.gate_cell,
            "word_enc_w": self.word_enc_w,
            "word_enc_b": self.word_enc_b,
            "cell_enc_w": self.cell_enc_w,
            "cell_enc_b": self.cell_enc_b,
            "q_global_w": self.q_global_w,
            "q_global_b": self.q_global_b,
            "q_grid_w": self.q_grid_w,
            "q_grid_b": self.q_grid_b,
            "q_pixel_w": self.q_pixel_w,
            "q_pixel_b": self.q_pixel_b,
            "key_w": self.key_w,
            "key_b": self.key_b,
            "value_w": self.value_w,
            "value_b": self.value_b,
        }


def grid_average(features: Tensor, grid: GridSpec) -> Tensor:
    """Mean of each p-by-p pixel block: (s,s,C) -> (h,h,C)."""
    s, h, p = grid.s, grid.h, grid.p
    if features.shape[:2] != (s, s):
        raise ValueError(f"feature map {features.shape} does not match grid resolution {s}")
    c = features.shape[2]
    return T.tmean(T.reshape(features, (h, p, h, p, c)), axis=(1, 3))


def write_memory(words: Tensor, grid_feats: Tensor, params: SdmParams) -> MemoryBank:
    """One slot per (word, cell): gated blend of word and cell encodings."""
    h = params.grid.h
    length = words.shape[0]
    word_term = T.matmul(words, params.gate_word)                      # (L, 1)
    cell_term = T.tsum(T.mul(params.gate_cell, grid_feats), axis=-1)   # (h, h)
    pre = T.add(T.reshape(word_term, (length, 1, 1)), T.reshape(cell_term, (1, h, h)))
    gates = T.sigmoid(pre)                                             # (L, h, h)

    word_enc = T.add(T.matmul(words, params.word_enc_w), params.word_enc_b)      # (L, n_mem)
    cell_enc = T.add(T.conv2d(grid_feats, params.cell_enc_w), params.cell_enc_b)  # (h, h, n_mem)

    g = T.reshape(gates, (length, h, h, 1))
    slots = T.add(
        T.mul(T.reshape(word_enc, (length, 1, 1, params.n_mem)), g),
        T.mul(T.reshape(cell_enc, (1, h, h, params.n_mem)), 1.0 - g),
    )
    return MemoryBank(slots=slots, gates=gates, grid_features=grid_feats)


def build_queries(source: Tensor, grid: GridSpec, params: SdmParams) -> QueryField:
    """Global / cell / pixel query components from one (s,s,C) feature map."""
    s, h, p = grid.s, grid.h, grid.p
    if source.shape[:2] != (s, s):
        raise ValueError(f"query source {source.shape} does not match grid resolution {s}")
    n = params.n_feat
    enc_global = T.add(T.conv2d(source, params.q_global_w), params.q_global_b)
    enc_grid = T.add(T.conv2d(source, params.q_grid_w), params.q_grid_b)
    enc_pixel = T.add(T.conv2d(source, params.q_pixel_w), params.q_pixel_b)

    q_global = T.tmean(enc_global, axis=(0, 1))
    q_grid = grid_average(enc_grid, grid)
    q_pixel = T.transpose(T.reshape(enc_pixel, (h, p, h, p, n)), (0, 2, 1, 3, 4))

    assembled = T.concat(
        [
            T.broadcast_to(T.reshape(q_global, (1, 1, 1, 1, n)), (h, h, p, p, n)),
            T.broadcast_to(T.reshape(q_grid, (h, h, 1, 1, n)), (h, h, p, p, n)),
            q_pixel,
        ],
        axis=-1,
    )
    return QueryField(q_global=q_global, q_grid=q_grid, q_pixel=q_pixel, assembled=assembled)


def address_keys(bank: MemoryBank, queries: QueryField, params: SdmParams) -> AttentionField:
    """Softmax over words of key-query dot products, per pixel."""
    length, h = bank.slots.shape[0], params.grid.h
    p = params.grid.p
    keys = T.add(T.conv2d(bank.slots, params.key_w), params.key_b)    # (L, h, h, 3n)
    logits = T.tsum(
        T.mul(
            T.reshape(keys, (length, h, h, 1, 1, 3 * params.n_feat)),
            T.reshape(queries.assembled, (1, h, h, p, p, 3 * params.n_feat)),
        ),
        axis=-1,
    )
    return AttentionField(weights=T.softmax_over_axis(logits, axis=0))


def scatter_cells(responses: Tensor, grid: GridSpec) -> Tensor:
    """Place cell responses (h,h,p,p,C) at their pixels: output (s,s,C).

    Pixel (pixel_index(i,a,p), pixel_index(j,b,p)) receives responses[i,j,a,b]
    bit-identically; the index map is a bijection onto the full map.
    """
    c = responses.shape[-1]
    return T.reshape(T.transpose(responses, (0, 2, 1, 3, 4)), (grid.s, grid.s, c))


def read_values(bank: MemoryBank, attn: AttentionField, grid: GridSpec,
                params: SdmParams) -> RefinementOutput:
    """Attention-weighted sum of value encodings, scattered to full resolution."""
    length, h, p, n = bank.slots.shape[0], grid.h, grid.p, params.n_feat
    values = T.add(T.conv2d(bank.slots, params.value_w), params.value_b)  # (L, h, h, n)
    responses = T.tsum(
        T.mul(
            T.reshape(attn.weights, (length, h, h, p, p, 1)),
            T.reshape(values, (length, h, h, 1, 1, n)),
        ),
        axis=0,
    )                                                                     # (h, h, p, p, n)
    return RefinementOutput(features=scatter_cells(responses, grid), cell_responses=responses)


def run_head(params: SdmParams, words: Tensor, memory_source: Tensor,
             query_source: Tensor) -> tuple[RefinementOutput, MemoryBank, AttentionField]:
    """Full head pass: memory from `memory_source`, queries from `query_source`."""
    grid = params.grid
    bank = write_memory(words, grid_average(memory_source, grid), params)
    queries = build_queries(query_source, grid, params)
    attn = address_keys(bank, queries, params)
    return read_values(bank, attn, grid, params), bank, attn


def attention_to_csv(attn: AttentionField) -> str:
    """Debug dump of attention weights, one "l,i,j,a,b,alpha" row per entry (0-based)."""
    w = attn.weights.data
    lines = ["l,i,j,a,b,alpha"]
    for idx in np.ndindex(w.shape):
        lines.append(",".join(str(i) for i in idx) + f",{float(w[idx])!r}")
    return "\n".join(lines) + "\n"
