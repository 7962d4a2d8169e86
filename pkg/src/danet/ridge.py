"""Single-module learners: ridge regression (primal and dual) and RBF
kernel ridge regression, with one-hot targets and the argmax classifier.

Targets use {0, 1} one-hot rows. No intercept term is fitted; callers
wanting one append a constant feature column.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EncodingError, ShapeError
from .linalg import as_matrix, gram_rbf, spd_solve


@dataclass(frozen=True)
class OneHotTargets:
    """One-hot target matrix plus the class indices it encodes.

    Each row of ``matrix`` has exactly one 1 and ``class_count - 1`` zeros.
    """
    matrix: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        if self.matrix.shape != (len(self.labels), self.class_count):
            raise ShapeError(f"one-hot matrix shape {self.matrix.shape} does "
                             f"not match {len(self.labels)} labels x "
                             f"{self.class_count} classes")


def encode_one_hot(labels, class_count: int) -> OneHotTargets:
    """Encode integer class indices as {0,1} one-hot rows."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise EncodingError(f"labels must be 1-D, got shape {labels.shape}")
    if class_count < 1:
        raise EncodingError(f"class_count must be >= 1, got {class_count}")
    bad = np.nonzero((labels < 0) | (labels >= class_count))[0]
    if bad.size:
        row = int(bad[0])
        raise EncodingError(f"label {labels[row]} at row {row} is outside "
                            f"0..{class_count - 1}")
    Y = np.zeros((labels.shape[0], class_count))
    Y[np.arange(labels.shape[0]), labels] = 1.0
    return OneHotTargets(Y, labels, class_count)


def _target_matrix(Y) -> np.ndarray:
    if isinstance(Y, OneHotTargets):
        return Y.matrix
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    return as_matrix(Y, "Y")


@dataclass(frozen=True)
class RidgeModel:
    """Linear ridge weights W (d x N_c) with the solve route recorded."""
    weights: np.ndarray
    lam: float
    mode: str  # "primal" | "dual"


def ridge_fit(X, Y, lam: float) -> RidgeModel:
    """Fit ridge regression weights in closed form.

    Uses the primal normal equations ``(X^T X + lam I)^-1 X^T Y`` when
    ``N >= d`` and the equivalent dual form ``X^T (X X^T + lam I)^-1 Y``
    when ``N < d``. ``lam = 0`` is permitted only when the corresponding
    Gram matrix is nonsingular.
    """
    X = as_matrix(X, "X")
    Ymat = _target_matrix(Y)
    if X.shape[0] != Ymat.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows but Y has {Ymat.shape[0]}")
    n, d = X.shape
    if n >= d:
        W = spd_solve(X.T @ X, lam, X.T @ Ymat)
        mode = "primal"
    else:
        W = X.T @ spd_solve(X @ X.T, lam, Ymat)
        mode = "dual"
    return RidgeModel(W, float(lam), mode)


def ridge_predict(model: RidgeModel, x) -> np.ndarray:
    """Response ``W^T x`` for a feature vector, or row-wise for a matrix."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else as_matrix(x, "x")
    if X.shape[1] != model.weights.shape[0]:
        raise ShapeError(f"feature dimension {X.shape[1]} does not match "
                         f"weights with {model.weights.shape[0]} rows")
    R = X @ model.weights
    return R[0] if single else R


def classify(response) -> int | np.ndarray:
    """Argmax class index; ties break to the lowest index.

    Accepts a single response vector or a matrix of row responses.
    """
    r = np.asarray(response, dtype=np.float64)
    if r.size == 0:
        raise ShapeError("response is empty")
    if np.isnan(r).any():
        raise ShapeError("response contains NaN")
    if r.ndim == 1:
        return int(np.argmax(r))
    if r.ndim == 2:
        return np.argmax(r, axis=1)
    raise ShapeError(f"response must be 1-D or 2-D, got shape {r.shape}")


@dataclass(frozen=True)
class KrrModel:
    """RBF kernel ridge model: stored training inputs plus the dual
    coefficient matrix ``(K + lam I)^-1 Y``."""
    train_features: np.ndarray
    dual_coeffs: np.ndarray
    gamma: float
    lam: float


def krr_fit(X, Y, lam: float, gamma: float) -> KrrModel:
    """Fit kernel ridge regression in the dual with an RBF kernel."""
    X = as_matrix(X, "X")
    Ymat = _target_matrix(Y)
    if X.shape[0] != Ymat.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows but Y has {Ymat.shape[0]}")
    K = gram_rbf(X, X, gamma)
    dual = spd_solve(K, lam, Ymat)
    return KrrModel(X, dual, float(gamma), float(lam))


def krr_predict(model: KrrModel, x) -> np.ndarray:
    """Response ``dual^T k(x, X_train)`` for a vector or row-wise matrix."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else as_matrix(x, "x")
    if X.shape[1] != model.train_features.shape[1]:
        raise ShapeError(f"feature dimension {X.shape[1]} does not match "
                         f"training dimension {model.train_features.shape[1]}")
    Kq = gram_rbf(X, model.train_features, model.gamma)
    R = Kq @ model.dual_coeffs
    return R[0] if single else R
