import numpy as np
import pytest

from danet import encode_one_hot
from danet.synth import make_blobs, make_xor


@pytest.fixture(scope="session")
def digits():
    """Bundled 8x8 handwritten digits (real image data available offline),
    shuffled once with a fixed seed."""
    from sklearn.datasets import load_digits
    X, y = load_digits(return_X_y=True)
    rng = np.random.default_rng(51)
    perm = rng.permutation(len(X))
    return X[perm] / 16.0, y[perm]


@pytest.fixture(scope="session")
def xor_set():
    X, y = make_xor(200, seed=21)
    return X, y, encode_one_hot(y, 2)


@pytest.fixture(scope="session")
def blob_set():
    X, y = make_blobs(240, [[-5.0, -5.0], [5.0, 5.0]], cluster_std=1.0,
                      seed=25)
    return X, y, encode_one_hot(y, 2)


def write_blobs_csv(path, n=120, seed=25, centers=((-5.0, -5.0), (5.0, 5.0))):
    """Small separable CSV fixture: label,f0,f1 rows."""
    X, y = make_blobs(n, list(centers), cluster_std=1.0, seed=seed)
    lines = [f"c{lab},{a:.10f},{b:.10f}" for (a, b), lab in zip(X, y)]
    path.write_text("\n".join(lines) + "\n")
    return X, y
