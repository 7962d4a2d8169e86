"""Small synthetic classification sets for examples, fixtures, and tests."""

import numpy as np


def make_blobs(n_samples: int, centers, cluster_std: float = 1.0,
               seed: int = 0):
    """Isotropic Gaussian blobs, one class per center. Returns (X, labels)."""
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    rng = np.random.default_rng(seed)
    labels = np.arange(n_samples) % len(centers)
    X = centers[labels] + rng.normal(scale=cluster_std,
                                     size=(n_samples, centers.shape[1]))
    perm = rng.permutation(n_samples)
    return X[perm], labels[perm]


def make_xor(n_samples: int, noise: float = 0.5, seed: int = 0,
             scale: float = 2.0, offset=(0.3, 0.15)):
    """Linearly inseparable 2-D XOR blobs: opposite quadrants share a class.

    The quadrant grid sits slightly off the origin so that a zero-intercept
    linear fit has some signal to start from.
    """
    rng = np.random.default_rng(seed)
    quadrant = np.arange(n_samples) % 4
    centers = scale * np.array([[1.0, 1.0], [-1.0, -1.0],
                                [1.0, -1.0], [-1.0, 1.0]])
    labels = (quadrant >= 2).astype(np.int64)
    X = centers[quadrant] + rng.normal(scale=noise, size=(n_samples, 2))
    X += np.asarray(offset, dtype=np.float64)
    perm = rng.permutation(n_samples)
    return X[perm], labels[perm]


def make_moons(n_samples: int, noise: float = 0.15, seed: int = 0):
    """Two interleaving half circles in 2-D."""
    rng = np.random.default_rng(seed)
    n_out = n_samples // 2
    n_in = n_samples - n_out
    t_out = np.linspace(0.0, np.pi, n_out)
    t_in = np.linspace(0.0, np.pi, n_in)
    X = np.vstack([
        np.column_stack([np.cos(t_out), np.sin(t_out)]),
        np.column_stack([1.0 - np.cos(t_in), 0.5 - np.sin(t_in)]),
    ])
    X += rng.normal(scale=noise, size=X.shape)
    labels = np.concatenate([np.zeros(n_out, dtype=np.int64),
                             np.ones(n_in, dtype=np.int64)])
    perm = rng.permutation(n_samples)
    return X[perm], labels[perm]
