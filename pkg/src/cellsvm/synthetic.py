"""Seeded 2-D Gaussian-mixture generators for fixtures and benchmarks.

The binary problem draws each class from a two-component mixture with known
densities, so the Bayes error is estimable by Monte Carlo to any accuracy.
"""

from __future__ import annotations

import numpy as np

from .dataio import Dataset

# class +1: components at (0,0) and (3,3); class -1: at (1.5,1.5) and (4,0).
_MEANS_POS = np.array([[0.0, 0.0], [3.0, 3.0]])
_MEANS_NEG = np.array([[1.5, 1.5], [4.0, 0.0]])
_SIGMA = 1.0


def _density(X: np.ndarray, means: np.ndarray) -> np.ndarray:
    d = X.shape[1]
    norm = 1.0 / ((2.0 * np.pi * _SIGMA ** 2) ** (d / 2.0))
    p = np.zeros(X.shape[0])
    for mu in means:
        diff = X - mu
        p += norm * np.exp(-np.einsum("ij,ij->i", diff, diff) / (2.0 * _SIGMA ** 2))
    return p / means.shape[0]


def _draw(rng: np.random.Generator, means: np.ndarray, n: int) -> np.ndarray:
    comp = rng.integers(means.shape[0], size=n)
    return means[comp] + _SIGMA * rng.standard_normal((n, 2))


def gaussian_mixture(n: int, seed: int = 0) -> Dataset:
    """Balanced binary sample with labels in {-1, +1}."""
    rng = np.random.default_rng(seed)
    labels = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    X = np.empty((n, 2))
    pos = labels > 0
    X[pos] = _draw(rng, _MEANS_POS, int(np.sum(pos)))
    X[~pos] = _draw(rng, _MEANS_NEG, int(np.sum(~pos)))
    return Dataset(X, labels)


def bayes_predict(X: np.ndarray) -> np.ndarray:
    """Optimal decision under the known equal-prior densities."""
    return np.where(_density(X, _MEANS_POS) >= _density(X, _MEANS_NEG), 1.0, -1.0)


def bayes_error_mc(n: int = 200_000, seed: int = 123) -> float:
    """Monte-Carlo estimate of the Bayes error of the mixture problem."""
    data = gaussian_mixture(n, seed=seed)
    return float(np.mean(bayes_predict(data.samples) != data.labels))
