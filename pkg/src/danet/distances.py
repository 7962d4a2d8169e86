"""Monte-Carlo estimates of expected intra/interclass squared distances."""

import numpy as np

from .errors import ShapeError
from .linalg import as_matrix


def can_sample_pairs(labels) -> bool:
    """True when both intra- and interclass pairs exist (at least two
    classes, every present class with at least two members)."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64))
    present = counts[counts > 0]
    return len(present) >= 2 and (counts >= 2).all()


def class_distances(H, labels, sample_pairs: int, seed: int):
    """Estimate expected squared Euclidean distances between same-class and
    different-class feature rows.

    Draws ``sample_pairs`` ordered pairs with replacement, uniformly over
    the same-class (i != j) and different-class pair populations via
    rejection sampling, so the estimator targets exactly the all-pairs
    averages. Returns ``(intra, inter)``.
    """
    H = as_matrix(H, "H")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != H.shape[0]:
        raise ShapeError(f"{labels.shape[0]} labels for {H.shape[0]} rows")
    if sample_pairs < 1:
        raise ShapeError(f"sample_pairs must be >= 1, got {sample_pairs}")
    counts = np.bincount(labels)
    present = counts[counts > 0]
    if (counts < 2).any():
        small = int(np.argmin(counts))
        raise ShapeError(f"class {small} has {counts[small]} samples; "
                         f"need >= 2 per class to draw pairs")
    if len(present) < 2:
        raise ShapeError("need at least two classes to draw interclass pairs")

    rng = np.random.default_rng(seed)
    n = H.shape[0]

    def draw(match: bool) -> float:
        got, total = 0, 0.0
        while got < sample_pairs:
            need = sample_pairs - got
            # Acceptance is bounded below by the rarer population share, so a
            # modest oversample per round keeps the loop short.
            m = max(4 * need, 64)
            i = rng.integers(0, n, size=m)
            j = rng.integers(0, n, size=m)
            same = (labels[i] == labels[j]) & (i != j)
            keep = same if match else labels[i] != labels[j]
            i, j = i[keep][:need], j[keep][:need]
            if i.size:
                diff = H[i] - H[j]
                total += float(np.einsum("ij,ij->", diff, diff))
                got += i.size
        return total / sample_pairs

    return draw(True), draw(False)


def exact_class_distances(H, labels):
    """All-pairs averages of squared distances (intra over ordered same-class
    pairs with i != j, inter over ordered different-class pairs).

    Quadratic in the number of rows; intended for small inputs and as the
    reference for the Monte-Carlo estimator.
    """
    H = as_matrix(H, "H")
    labels = np.asarray(labels, dtype=np.int64)
    sq = np.einsum("ij,ij->i", H, H)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (H @ H.T)
    np.maximum(d2, 0.0, out=d2)
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    diff = labels[:, None] != labels[None, :]
    return float(d2[same].mean()), float(d2[diff].mean())
