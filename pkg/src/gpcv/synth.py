"""Synthetic benchmark families.

Generators for reproducible desk-scale experiments: balanced two-Gaussian
problems and imbalanced rare-positive problems. The named presets mirror the
size, dimension, and class balance of common public benchmarks (heart,
thyroid, ecoli class 5, yeast class 7, car class 3) so partition sweeps can
run without any external data; separations are calibrated so the balanced
families land near the error rates those benchmarks are known for.

Each preset draws one fixed example pool from its seed; train/test splits
come from ``data.stratified_partitions`` with the preset's train fraction.
"""

import zlib
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import InputError


def two_gaussians(n, dim, separation, pos_fraction, rng, pos_scale=1.0):
    """Two Gaussian classes separated along the first axis.

    Negatives sit at -separation/2, positives at +separation/2, with unit
    noise in every dimension (positives scaled by ``pos_scale``). For equal
    priors and unit scales the Bayes error is Phi(-separation/2).
    """
    n_pos = int(round(n * pos_fraction))
    n_pos = min(max(n_pos, 2), n - 2)
    n_neg = n - n_pos
    X = rng.normal(size=(n, dim))
    X[:n_pos] *= pos_scale
    X[:n_pos, 0] += 0.5 * separation
    X[n_pos:, 0] -= 0.5 * separation
    y = np.concatenate([np.ones(n_pos), -np.ones(n_neg)])
    perm = rng.permutation(n)
    return X[perm], y[perm]


def rare_cluster(n, dim, offset, pos_fraction, rng, pos_scale=1.0):
    """Rare positives forming a compact cluster at the edge of the negatives.

    Negatives are standard normal; positives sit at ``offset`` along the
    first axis with spread ``pos_scale``. Overlap grows as the offset shrinks
    or the spread widens, which controls the achievable precision/recall
    trade-off.
    """
    n_pos = int(round(n * pos_fraction))
    n_pos = min(max(n_pos, 2), n - 2)
    n_neg = n - n_pos
    X = rng.normal(size=(n, dim))
    X[:n_pos] *= pos_scale
    X[:n_pos, 0] += offset
    y = np.concatenate([np.ones(n_pos), -np.ones(n_neg)])
    perm = rng.permutation(n)
    return X[perm], y[perm]


@dataclass(frozen=True)
class Preset:
    name: str
    pool_size: int
    n_train: int
    dim: int
    pos_fraction: float
    kind: str  # "balanced" | "rare"
    separation: float
    pos_scale: float = 1.0

    @property
    def train_fraction(self):
        return self.n_train / self.pool_size


PRESETS = {
    p.name: p
    for p in (
        # pool = train + test sizes of the corresponding public benchmarks
        Preset("heart_like", 270, 170, 13, 0.44, "balanced", 2.05),
        Preset("thyroid_like", 215, 140, 5, 0.30, "balanced", 3.80),
        Preset("ecoli5_like", 336, 124, 7, 0.06, "rare", 2.60, 0.70),
        Preset("yeast7_like", 1484, 297, 8, 0.02, "rare", 2.40, 0.70),
        Preset("car3_like", 1728, 350, 6, 0.04, "rare", 2.30, 0.80),
    )
}


def pool(name, seed=0):
    """Draw the fixed example pool of a named preset."""
    if name not in PRESETS:
        raise InputError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    p = PRESETS[name]
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(zlib.crc32(name.encode()),))
    )
    if p.kind == "balanced":
        X, y = two_gaussians(p.pool_size, p.dim, p.separation, p.pos_fraction, rng)
    else:
        X, y = rare_cluster(
            p.pool_size, p.dim, p.separation, p.pos_fraction, rng, p.pos_scale
        )
    return Dataset(X, y, name)


def separable_pair(margin=2.0):
    """Minimal linearly separable two-point problem for optimizer contracts."""
    X = np.array([[-0.5 * margin], [0.5 * margin]])
    y = np.array([-1.0, 1.0])
    return X, y


def separable_set(n, dim, margin, seed=0):
    """Comfortably separable balanced problem (gap of ``margin`` sigmas)."""
    rng = np.random.default_rng(seed)
    X, y = two_gaussians(n, dim, margin, 0.5, rng)
    return X, y
