"""Fréchet distance between feature summaries of image sets.

Features come from a frozen, seeded random convolution stack with global
average pooling; the distance compares Gaussian summaries (mean, covariance)
of real and generated feature clouds.  The matrix square root is taken by
eigendecomposition of the symmetrized product, with roundoff-scale negative
eigenvalues clamped to zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from msmt import tensor as T
from msmt.tensor import Tensor

FEATURE_DIM = 16
_EIG_TOL = 1e-8


class FeatureExtractor:
    """Untrained stride-2 conv stack, fixed by its seed for a whole run."""

    def __init__(self, seed: int = 0, dim: int = FEATURE_DIM):
        self.seed = seed
        self.dim = dim
        rng = np.random.default_rng(seed)
        mid = max(8, dim // 2)
        self.k1 = Tensor(rng.normal(scale=0.4, size=(3, 3, 3, mid)))
        self.k2 = Tensor(rng.normal(scale=0.4, size=(3, 3, mid, dim)))

    def extract(self, image: np.ndarray) -> np.ndarray:
        """(H,W,3) image in [-1,1] -> fixed d-dimensional feature vector."""
        x = Tensor(np.asarray(image, dtype=float))
        x = T.tanh(T.conv2d(x, self.k1, stride=2, padding=1))
        x = T.tanh(T.conv2d(x, self.k2, stride=2, padding=1))
        return x.data.mean(axis=(0, 1))


@dataclass
class FeatureSummary:
    mu: np.ndarray      # (d,)
    sigma: np.ndarray   # (d, d)
    n: int

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "FeatureSummary":
        samples = np.asarray(samples, dtype=float)
        n, d = samples.shape
        if n < 2:
            raise ValueError("need at least two samples for a covariance estimate")
        if n < d + 1:
            warnings.warn(f"only {n} samples for {d}-dim features; covariance is rank-deficient")
        mu = samples.mean(axis=0)
        centered = samples - mu
        sigma = centered.T @ centered / (n - 1)
        return cls(mu=mu, sigma=sigma, n=n)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = _clamped(vals)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _clamped(vals: np.ndarray) -> np.ndarray:
    floor = -_EIG_TOL * max(1.0, float(vals.max(initial=0.0)))
    if vals.min(initial=0.0) < floor:
        raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {vals.min()})")
    return np.maximum(vals, 0.0)


def frechet_distance(a: FeatureSummary, b: FeatureSummary) -> float:
    """|mu_a - mu_b|^2 + Tr(Sigma_a + Sigma_b - 2 (Sigma_a Sigma_b)^(1/2))."""
    if a.mu.shape != b.mu.shape:
        raise ValueError(f"feature dimensions disagree: {a.mu.shape} vs {b.mu.shape}")
    for summary in (a, b):
        if not (np.all(np.isfinite(summary.mu)) and np.all(np.isfinite(summary.sigma))):
            raise ValueError("feature summary contains non-finite values")
    diff = a.mu - b.mu
    root_a = _psd_sqrt(a.sigma)
    inner = root_a @ b.sigma @ root_a
    vals, _ = np.linalg.eigh((inner + inner.T) / 2.0)
    trace_sqrt = float(np.sqrt(_clamped(vals)).sum())
    return float(diff @ diff + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * trace_sqrt)
