"""Dense real-matrix primitives shared by every learner in the package.

All matrices are row-major with one sample per row. Operations are pure
functions over immutable inputs and may be called concurrently.
"""

import numpy as np
import scipy.linalg

from .errors import ShapeError, SingularMatrixError

# Inputs to spd_solve are built as X^T X or Gram matrices, so asymmetry
# beyond rounding indicates a caller bug.
SYMMETRY_RTOL = 1e-10


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and convert ``a`` to a 2-D float64 array with finite entries."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        raise ShapeError(f"{name} contains non-finite entries")
    return arr


def as_vector(a, name: str = "vector") -> np.ndarray:
    """Validate and convert ``a`` to a 1-D float64 array with finite entries."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        raise ShapeError(f"{name} contains non-finite entries")
    return arr


def spd_solve(A, lam: float, B) -> np.ndarray:
    """Solve ``(A + lam*I) Z = B`` for symmetric ``A``.

    Attempts a Cholesky factorization first; when the shifted matrix is not
    numerically positive definite, falls back to a symmetric
    eigendecomposition. With ``lam > 0`` and PSD ``A`` (the only case the
    stacked networks produce) the Cholesky path always succeeds.

    Parameters
    ----------
    A : (n, n) symmetric array
    lam : non-negative ridge shift
    B : (n, k) array or length-n vector

    Raises
    ------
    ShapeError : non-square ``A``, asymmetric ``A``, or row mismatch with ``B``.
    SingularMatrixError : ``lam = 0`` with singular ``A`` (spectral fallback
        also degenerate); the message names the offending eigenvalue magnitude.
    """
    A = as_matrix(A, "A")
    n, m = A.shape
    if n != m:
        raise ShapeError(f"A must be square, got {A.shape}")
    if lam < 0:
        raise ShapeError(f"lambda must be non-negative, got {lam}")
    scale = np.abs(A).max() if A.size else 0.0
    if scale and np.abs(A - A.T).max() > SYMMETRY_RTOL * scale:
        raise ShapeError("A is not symmetric within tolerance; "
                         "spd_solve expects X^T X or Gram matrices")

    b_was_1d = np.ndim(B) == 1
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if b_was_1d:
        B = B.T
    if B.shape[0] != n:
        raise ShapeError(f"B has {B.shape[0]} rows, expected {n}")

    M = A + lam * np.eye(n)
    try:
        c, low = scipy.linalg.cho_factor(M, lower=True,
                                         overwrite_a=True, check_finite=False)
        Z = scipy.linalg.cho_solve((c, low), B, check_finite=False)
    except np.linalg.LinAlgError:
        w, V = scipy.linalg.eigh(A, check_finite=False)
        shifted = w + lam
        tol = n * np.finfo(np.float64).eps * max(np.abs(shifted).max(), 1e-300)
        smallest = np.abs(shifted).min()
        if smallest <= tol:
            raise SingularMatrixError(
                f"solve target is singular: eigenvalue magnitude "
                f"{smallest:.3e} below tolerance {tol:.3e} at lambda={lam}")
        Z = V @ ((V.T @ B) / shifted[:, None])
    return Z[:, 0] if b_was_1d else Z


def gram_rbf(A, B, gamma: float) -> np.ndarray:
    """RBF Gram matrix: entry (i, j) = exp(-gamma * ||A_i - B_j||^2).

    When ``B`` is the same matrix as ``A`` the result has an exact unit
    diagonal. Squared distances are clamped at zero so every entry lies in
    (0, 1].
    """
    A = as_matrix(A, "A")
    B_in = B
    B = as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ShapeError(f"column mismatch: A has {A.shape[1]} columns, "
                         f"B has {B.shape[1]}")
    if gamma <= 0:
        raise ShapeError(f"gamma must be positive, got {gamma}")
    same = B_in is A or (A.shape == B.shape and np.array_equal(A, B))
    a_sq = np.einsum("ij,ij->i", A, A)
    b_sq = a_sq if same else np.einsum("ij,ij->i", B, B)
    d2 = a_sq[:, None] + b_sq[None, :]
    d2 -= 2.0 * (A @ B.T)
    np.maximum(d2, 0.0, out=d2)
    d2 *= -gamma
    K = np.exp(d2, out=d2)
    if same:
        np.fill_diagonal(K, 1.0)
    return K


def residual_orthogonality(v, span_basis) -> float:
    """Norm of the component of ``v`` orthogonal to the column space of
    ``span_basis``, via least-squares projection.

    Returns ``||v||`` for an empty basis; a value below ``1e-8 * ||v||``
    means ``v`` lies in the span.
    """
    v = as_vector(v, "v")
    if span_basis is None:
        return float(np.linalg.norm(v))
    basis = np.asarray(span_basis, dtype=np.float64)
    if basis.ndim == 1:
        basis = basis[:, None]
    basis = as_matrix(basis, "span_basis")
    if basis.shape[1] == 0:
        return float(np.linalg.norm(v))
    if basis.shape[0] != v.shape[0]:
        raise ShapeError(f"v has length {v.shape[0]}, basis has "
                         f"{basis.shape[0]} rows")
    coef, *_ = np.linalg.lstsq(basis, v, rcond=None)
    return float(np.linalg.norm(v - basis @ coef))
