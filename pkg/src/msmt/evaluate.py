"""Generation from checkpoints and Fréchet-distance evaluation."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from msmt import checkpoint
from msmt.config import Config
from msmt.data import sample_corpus
from msmt.metrics import FeatureExtractor, FeatureSummary, frechet_distance
from msmt.model import Generator, restore

# offsets deriving the held-out caption stream and generation noise stream
HELDOUT_SEED_OFFSET = 7919
GENERATION_STREAM = 2


def load_generator(ckpt_path: str | Path) -> tuple[Config, Generator]:
    cfg, gen, _ = restore(checkpoint.load(ckpt_path))
    return cfg, gen


def generate_images(ckpt_path: str | Path, caption: str, seed: int) -> tuple[Config, list[np.ndarray]]:
    """Images at every stage resolution for one caption, deterministic in seed."""
    cfg, gen = load_generator(ckpt_path)
    tokens = caption.split()
    ids = gen.vocab.encode(tokens)
    rng = np.random.default_rng(seed)
    out = gen.forward(ids, rng)
    return cfg, [img.data.copy() for img in out.images]


def evaluate_checkpoint(ckpt_path: str | Path, n: int, extractor_seed: int = 0) -> dict:
    """Fréchet distance between n held-out real images and n generated ones."""
    cfg, gen = load_generator(ckpt_path)
    resolution = cfg.resolutions[-1]
    items = sample_corpus(n, seed=cfg.seed + HELDOUT_SEED_OFFSET, resolutions=(resolution,))
    extractor = FeatureExtractor(seed=extractor_seed)
    rng = np.random.default_rng([cfg.seed, GENERATION_STREAM])

    real_feats, fake_feats = [], []
    for item in items:
        out = gen.forward(gen.vocab.encode(item.tokens), rng)
        fake_feats.append(extractor.extract(out.images[-1].data))
        real_feats.append(extractor.extract(item.images[resolution]))

    fd = frechet_distance(FeatureSummary.from_samples(np.asarray(real_feats)),
                          FeatureSummary.from_samples(np.asarray(fake_feats)))
    return {"fd": fd, "n_real": n, "n_fake": n, "extractor_seed": extractor_seed}


def real_self_distance(n: int, seed: int, resolution: int = 32,
                       extractor_seed: int = 0) -> float:
    """Baseline: distance between two independent draws of the real corpus."""
    extractor = FeatureExtractor(seed=extractor_seed)
    feats = []
    for split_seed in (seed, seed + 1):
        items = sample_corpus(n, seed=split_seed, resolutions=(resolution,))
        feats.append(np.asarray([extractor.extract(it.images[resolution]) for it in items]))
    return frechet_distance(FeatureSummary.from_samples(feats[0]),
                            FeatureSummary.from_samples(feats[1]))
