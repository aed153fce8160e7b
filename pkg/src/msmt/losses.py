"""Generator and discriminator objectives.

The generator objective combines the conditioning-augmentation KL term, the
per-stage adversarial terms (both expectations taken over generated samples)
and, for refinement stages, a redundancy penalty: the sum of pairwise cosine
similarities between the spatial means of the stage's head outputs.  The
matching-loss weight exists in the weight set but no matching term is
computed here; it needs pretrained text-image matching networks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from msmt import tensor as T
from msmt.tensor import Tensor
from msmt.text import kl_loss

EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    ca: float = 1.0
    redundancy: float = 0.5
    matching: float = 5.0   # carried in configs, never applied (see module docstring)

    def __post_init__(self):
        if self.ca < 0 or self.redundancy < 0 or self.matching < 0:
            raise ValueError("loss weights must be nonnegative")


def _mean(values: list[Tensor]) -> Tensor:
    acc = values[0]
    for v in values[1:]:
        acc = T.add(acc, v)
    return T.mul(acc, 1.0 / len(values))


def _log(score: Tensor) -> Tensor:
    return T.log(T.clamp(score, EPS, 1.0 - EPS))


def redundancy_loss(head_outputs: list[Tensor]) -> Tensor:
    """Sum of pairwise cosine similarities between spatially averaged heads.

    A head whose spatial mean is exactly zero carries no redundancy, so its
    pairs contribute 0 instead of a divide-by-zero.
    """
    if len(head_outputs) < 1:
        raise ValueError("redundancy loss needs at least one head output")
    summaries = [T.tmean(out, axis=(0, 1)) for out in head_outputs]
    total = Tensor(np.zeros(()))
    for i in range(len(summaries)):
        for j in range(i + 1, len(summaries)):
            fi, fj = summaries[i], summaries[j]
            if not fi.data.any() or not fj.data.any():
                continue
            dot = T.tsum(T.mul(fi, fj))
            norms = T.mul(T.sqrt(T.tsum(T.mul(fi, fi))), T.sqrt(T.tsum(T.mul(fj, fj))))
            total = T.add(total, T.div(dot, norms))
    return total


def generator_loss(d_scores, ca_pairs, head_outputs, weights: LossWeights):
    """Total generator objective plus its per-term breakdown.

    d_scores:     per stage, list over the batch of (uncond, cond) tensors
                  scored on generated images
    ca_pairs:     list over the batch of (mu, logvar) tensors
    head_outputs: per refinement stage, list over the batch of [O_1..O_T]
    """
    components: dict[str, float] = {}
    l_ca = _mean([kl_loss(mu, logvar) for mu, logvar in ca_pairs])
    total = T.mul(l_ca, weights.ca)
    components["l_ca"] = l_ca.item()

    for k, batch_scores in enumerate(d_scores, start=1):
        stage_terms = [
            T.mul(T.add(_log(u), _log(c)), -0.5) for u, c in batch_scores
        ]
        l_g = _mean(stage_terms)
        total = T.add(total, l_g)
        components[f"l_g_{k}"] = l_g.item()

    for k, batch_heads in enumerate(head_outputs, start=2):
        l_red = _mean([redundancy_loss(outs) for outs in batch_heads])
        total = T.add(total, T.mul(l_red, weights.redundancy))
        components[f"l_red_{k}"] = l_red.item()

    return total, components


def discriminator_loss(real_scores, fake_scores):
    """One stage's discriminator objective from batches of (uncond, cond) scores."""
    if len(real_scores) != len(fake_scores):
        raise ValueError("real and fake batches must be the same size")
    uncond = T.add(
        _mean([_log(u) for u, _ in real_scores]),
        _mean([_log(T.sub(1.0, u)) for u, _ in fake_scores]),
    )
    cond = T.add(
        _mean([_log(c) for _, c in real_scores]),
        _mean([_log(T.sub(1.0, c)) for _, c in fake_scores]),
    )
    return T.mul(T.add(uncond, cond), -0.5)
