"""Toy trainable text encoder and conditioning augmentation.

Token ids pass through an embedding table to give word vectors; the sentence
vector is a learned linear projection of their mean.  The sentence dimension
equals the word dimension here (the two are kept distinct in the interfaces
but configured equal).  Conditioning augmentation resamples the sentence
vector from a learned Gaussian with a KL penalty toward the standard normal.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from msmt import tensor as T
from msmt.tensor import Tensor


class Vocabulary:
    """Dense token<->id mapping with exact round-trips."""

    def __init__(self, tokens: list[str]):
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        self.id_to_token = list(tokens)
        self.token_to_id = {tok: i for i, tok in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, tokens: list[str]) -> list[int]:
        try:
            return [self.token_to_id[t] for t in tokens]
        except KeyError as err:
            raise ValueError(f"token {err.args[0]!r} is not in the vocabulary") from None

    def decode(self, ids: list[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def save(self, path: str | Path) -> None:
        lines = [f"{tok}\t{i}" for i, tok in enumerate(self.id_to_token)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        pairs = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            tok, idx = line.split("\t")
            pairs.append((int(idx), tok))
        pairs.sort()
        if [i for i, _ in pairs] != list(range(len(pairs))):
            raise ValueError("vocabulary ids must be dense in [0, V)")
        return cls([tok for _, tok in pairs])


class TextEncoder:
    """Embedding table + mean pool + linear sentence projection, trained jointly."""

    def __init__(self, vocab_size: int, n_word: int, n_cond: int, rng: np.random.Generator,
                 max_len: int = 8):
        self.vocab_size = vocab_size
        self.n_word = n_word
        self.n_cond = n_cond
        self.max_len = max_len
        std = 1.0 / np.sqrt(n_word)
        self.embedding = Tensor(rng.normal(scale=1.0, size=(vocab_size, n_word)), requires_grad=True)
        self.proj_w = Tensor(rng.normal(scale=std, size=(n_word, n_word)), requires_grad=True)
        self.proj_b = Tensor(np.zeros(n_word), requires_grad=True)
        self.mu_w = Tensor(rng.normal(scale=std, size=(n_word, n_cond)), requires_grad=True)
        self.mu_b = Tensor(np.zeros(n_cond), requires_grad=True)
        self.logvar_w = Tensor(rng.normal(scale=std, size=(n_word, n_cond)), requires_grad=True)
        self.logvar_b = Tensor(np.zeros(n_cond), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return {
            "embedding": self.embedding,
            "proj_w": self.proj_w,
            "proj_b": self.proj_b,
            "mu_w": self.mu_w,
            "mu_b": self.mu_b,
            "logvar_w": self.logvar_w,
            "logvar_b": self.logvar_b,
        }

    def encode(self, token_ids: list[int]) -> tuple[Tensor, Tensor]:
        """Word matrix (L, n_word) and sentence vector (n_word,) for one caption."""
        length = len(token_ids)
        if not 1 <= length <= self.max_len:
            raise ValueError(f"caption length {length} outside [1, {self.max_len}]")
        ids = np.asarray(token_ids)
        if ids.min() < 0 or ids.max() >= self.vocab_size:
            raise ValueError(f"token id outside vocabulary of size {self.vocab_size}")
        words = self.embedding[ids]
        pooled = words.mean(axis=0).reshape(1, self.n_word)
        sentence = (T.matmul(pooled, self.proj_w) + self.proj_b).reshape(self.n_word)
        return words, sentence

    def condition_augment(self, sentence: Tensor, rng) -> tuple[Tensor, Tensor, Tensor]:
        """Resampled sentence vector with its Gaussian parameters (s', mu, logvar)."""
        row = sentence.reshape(1, self.n_word)
        mu = (T.matmul(row, self.mu_w) + self.mu_b).reshape(self.n_cond)
        logvar = (T.matmul(row, self.logvar_w) + self.logvar_b).reshape(self.n_cond)
        eps = np.asarray(rng.standard_normal(self.n_cond))
        resampled = mu + T.mul(T.exp(0.5 * logvar), Tensor(eps))
        return resampled, mu, logvar


def kl_loss(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL divergence of N(mu, diag(exp(logvar))) from the standard normal."""
    return -0.5 * T.tsum(1.0 + logvar - T.mul(mu, mu) - T.exp(logvar))
