"""Empirical verification lab for the stack's two theoretical guarantees.

First: when the ReLU-ed training prediction of a layer falls outside the
column span of that layer's data matrix, appending it cannot increase the
ridge training residual. ``span_gain_check`` measures the orthogonality
conditions and refits the augmented system; ``augmentation_identity_check``
verifies the closed-form hat-matrix algebra behind the guarantee.

Second: layer growth perturbs expected interclass distances far more than
intraclass ones. Under a zero-mean Gaussian model of the per-class
prediction error, the expected increments of both distances have closed
forms built from the first two moments of a rectified Gaussian;
``dynamics_trace`` compares those predictions against measured distances
layer by layer.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import dan as _dan
from . import kdan as _kdan
from .distances import class_distances, exact_class_distances
from .errors import ShapeError
from .linalg import as_matrix, as_vector, residual_orthogonality, spd_solve
from .ridge import OneHotTargets, encode_one_hot, ridge_fit

IN_SPAN_RTOL = 1e-8

__all__ = [
    "SpanGainVerdict", "span_gain_check",
    "AugmentationIdentity", "augmentation_identity_check",
    "ErrorStats", "error_stats", "gaussian_density_at_targets",
    "relu_moments", "TheoreticalDeltas", "theoretical_deltas", "tail_bound",
    "LayerDynamics", "DynamicsTrace", "dynamics_trace",
    "class_distances", "exact_class_distances",
]


# ---------------------------------------------------------------------------
# Span gain and residual monotonicity


@dataclass
class SpanGainVerdict:
    """Outcome of a single span-gain probe.

    ``orthogonality_neg`` / ``orthogonality_nonneg`` are the alignments of
    the prediction error with the negative-index and non-negative-index
    projections of the prediction; if either is nonzero the ReLU-ed
    prediction must leave the span. ``residual_after`` is the training
    residual after refitting on the augmented matrix.
    """
    in_span: bool
    orthogonality_neg: float
    orthogonality_nonneg: float
    residual_before: float
    residual_after: float
    out_of_span_norm: float


def span_gain_check(X, y, lam: float) -> SpanGainVerdict:
    """Probe the span-gain condition for one binary-target ridge fit.

    Requires ``rank(X) < N`` (otherwise the guarantee is vacuous and a
    ShapeError is raised) and ``lam > 0``.
    """
    X = as_matrix(X, "X")
    y = as_vector(y, "y")
    n = X.shape[0]
    if y.shape[0] != n:
        raise ShapeError(f"y has length {y.shape[0]}, X has {n} rows")
    if lam <= 0:
        raise ShapeError(f"lambda must be positive, got {lam}")
    if np.linalg.matrix_rank(X) >= n:
        raise ShapeError("span(X) already covers the full sample space; "
                         "the span-gain condition is vacuous")

    W = ridge_fit(X, y, lam).weights[:, 0]
    yhat = X @ W
    err = yhat - y
    neg = yhat < 0
    orth_neg = float(err @ np.where(neg, yhat, 0.0))
    orth_nonneg = float(err @ np.where(neg, 0.0, yhat))

    rho = np.maximum(0.0, yhat)
    out_norm = residual_orthogonality(rho, X)
    in_span = out_norm <= IN_SPAN_RTOL * max(np.linalg.norm(rho), 1e-300)

    W_aug = ridge_fit(np.hstack([X, rho[:, None]]), y, lam).weights[:, 0]
    resid_after = float(np.linalg.norm(np.hstack([X, rho[:, None]]) @ W_aug - y))
    return SpanGainVerdict(
        in_span=bool(in_span),
        orthogonality_neg=orth_neg,
        orthogonality_nonneg=orth_nonneg,
        residual_before=float(np.linalg.norm(err)),
        residual_after=resid_after,
        out_of_span_norm=float(out_norm),
    )


@dataclass
class AugmentationIdentity:
    """Discrepancies of the closed-form hat-matrix algebra on one instance.

    All gaps are absolute and should sit at rounding level; ``residual_drop``
    values are the decrease of the squared training residual measured
    directly versus its closed form (non-negative by construction).
    """
    hat_svd_gap: float
    update_gap: float
    cross_term_gap: float
    residual_drop_direct: float
    residual_drop_formula: float
    drop_gap: float


def _hat_matrix(X: np.ndarray, lam: float) -> np.ndarray:
    return X @ spd_solve(X.T @ X, lam, X.T)


def augmentation_identity_check(X, y, lam: float) -> AugmentationIdentity:
    """Verify the closed-form algebra of appending an out-of-span column.

    The appended column ``q`` is the component of the ReLU-ed prediction
    orthogonal to the column space of ``X`` (the case the closed forms
    cover). Checks, on this instance: the spectral form of the ridge hat
    matrix against the normal-equations form; the rank-one update of the
    augmented hat matrix ``s q q^T`` with ``s = 1/(||q||^2 + lam)``; the
    vanishing cross term; and the closed-form drop of the squared residual
    ``s (q^T y)^2 (2 - s ||q||^2)``.
    """
    X = as_matrix(X, "X")
    y = as_vector(y, "y")
    if lam <= 0:
        raise ShapeError(f"lambda must be positive, got {lam}")

    W = ridge_fit(X, y, lam).weights[:, 0]
    rho = np.maximum(0.0, X @ W)
    coef, *_ = np.linalg.lstsq(X, rho, rcond=None)
    q = rho - X @ coef
    qnorm2 = float(q @ q)
    if qnorm2 <= (1e-12 * max(np.linalg.norm(rho), 1.0)) ** 2:
        raise ShapeError("ReLU-ed prediction lies in span(X); "
                         "augmentation identity is vacuous here")

    P = _hat_matrix(X, lam)
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    P_svd = (U * (s**2 / (s**2 + lam))) @ U.T

    s_lam = 1.0 / (qnorm2 + lam)
    H_lam = s_lam * np.outer(q, q)
    P_aug = _hat_matrix(np.hstack([X, q[:, None]]), lam)

    r0 = y - P @ y
    r1 = y - P_aug @ y
    drop_direct = float(r0 @ r0 - r1 @ r1)
    qty2 = float(q @ y) ** 2
    drop_formula = s_lam * qty2 * (2.0 - s_lam * qnorm2)

    return AugmentationIdentity(
        hat_svd_gap=float(np.abs(P - P_svd).max()),
        update_gap=float(np.abs(P_aug - (P + H_lam)).max()),
        cross_term_gap=float(np.abs(P.T @ H_lam).max()),
        residual_drop_direct=drop_direct,
        residual_drop_formula=float(drop_formula),
        drop_gap=float(abs(drop_direct - drop_formula)),
    )


# ---------------------------------------------------------------------------
# Gaussian error model and distance increments


@dataclass
class ErrorStats:
    """Per-class prediction-error statistics.

    ``sigma[c, j]`` is the RMS of coordinate j's error within class c
    (second moment about zero; the model assumes zero mean, so the
    empirical mean is reported in ``mean_eps`` as a diagnostic but never
    subtracted). ``p_cj[c, j]`` is the probability that the class-c error
    on coordinate j exceeds minus the target value.
    """
    sigma: np.ndarray
    p_cj: np.ndarray
    mean_eps: np.ndarray
    class_counts: np.ndarray


def error_stats(P, Y: OneHotTargets, mode: str = "gaussian") -> ErrorStats:
    """Fit the per-class error model from training responses.

    ``mode="gaussian"`` evaluates the exceedance probabilities from the
    fitted normal model; ``mode="empirical"`` counts them directly as a
    cross-check.
    """
    P = as_matrix(P, "P")
    if not isinstance(Y, OneHotTargets):
        raise ShapeError("Y must be OneHotTargets")
    if P.shape != Y.matrix.shape:
        raise ShapeError(f"responses have shape {P.shape}, targets "
                         f"{Y.matrix.shape}")
    if mode not in ("gaussian", "empirical"):
        raise ShapeError(f"unknown mode {mode!r}")
    n_classes = Y.class_count
    eps = P - Y.matrix
    targets = np.eye(n_classes)

    sigma = np.zeros((n_classes, n_classes))
    mean_eps = np.zeros((n_classes, n_classes))
    p_cj = np.zeros((n_classes, n_classes))
    counts = np.bincount(Y.labels, minlength=n_classes)
    if (counts == 0).any():
        empty = int(np.argmin(counts))
        raise ShapeError(f"class {empty} has no samples")
    for c in range(n_classes):
        e = eps[Y.labels == c]
        sigma[c] = np.sqrt(np.mean(e * e, axis=0))
        mean_eps[c] = e.mean(axis=0)
        if mode == "empirical":
            p_cj[c] = np.mean(e > -targets[c], axis=0)
        else:
            t = targets[c]
            with np.errstate(divide="ignore", invalid="ignore"):
                p_cj[c] = np.where(sigma[c] > 0,
                                   ndtr(t / np.where(sigma[c] > 0,
                                                     sigma[c], 1.0)),
                                   (t > 0).astype(float))
    return ErrorStats(sigma=sigma, p_cj=p_cj, mean_eps=mean_eps,
                      class_counts=counts)


def gaussian_density_at_targets(sigma, targets) -> np.ndarray:
    """Normal density N(t; 0, sigma^2) evaluated entrywise, with the
    degenerate sigma = 0 entries set to zero (their sigma^2-weighted terms
    vanish in the moment formulas)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    safe = np.where(sigma > 0, sigma, 1.0)
    dens = np.exp(-0.5 * (targets / safe) ** 2) / (safe * np.sqrt(2 * np.pi))
    return np.where(sigma > 0, dens, 0.0)


def relu_moments(t, sigma):
    """First two moments of max(0, t + eps) with eps ~ N(0, sigma^2).

    m1 = t * Phi(t/sigma) + sigma^2 * N(t; 0, sigma^2)
    m2 = (t^2 + sigma^2) * Phi(t/sigma) + sigma^2 * t * N(t; 0, sigma^2)

    Vectorized over broadcastable ``t`` and ``sigma``; sigma = 0 entries
    degenerate to max(0, t) and its square.
    """
    t = np.asarray(t, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if (sigma < 0).any():
        raise ShapeError("sigma must be non-negative")
    safe = np.where(sigma > 0, sigma, 1.0)
    phi = ndtr(t / safe)
    dens = gaussian_density_at_targets(sigma, t)
    m1 = t * phi + sigma**2 * dens
    m2 = (t**2 + sigma**2) * phi + sigma**2 * t * dens
    relu_t = np.maximum(0.0, t)
    m1 = np.where(sigma > 0, m1, relu_t)
    m2 = np.where(sigma > 0, m2, relu_t**2)
    return m1, m2


@dataclass
class TheoreticalDeltas:
    """Model-predicted increments of the expected squared distances when one
    relearned block is appended.

    ``delta_w[c]`` is the intraclass increment for class c; ``delta_b[c, c']``
    the interclass increment (diagonal fixed at zero by convention).
    ``bound_w[c] = 2 ||sigma_c||^2`` is the proven upper bound for
    ``delta_w[c]``; ``limit_b`` is the small-sigma limit
    ``t_cc^2 + t_c'c'^2`` of ``delta_b``.
    """
    delta_w: np.ndarray
    delta_b: np.ndarray
    bound_w: np.ndarray
    limit_b: np.ndarray


def theoretical_deltas(sigma, p_cj, targets, density_values) -> TheoreticalDeltas:
    """Evaluate the distance increments from fitted error statistics.

    All inputs are (n_classes, n_coords) arrays; ``targets`` row c is the
    target vector of class c (the identity matrix for one-hot targets).
    The moments are composed from the supplied exceedance probabilities and
    density values, so both the Gaussian-model and the empirical-count
    estimates flow through unchanged.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    p_cj = np.asarray(p_cj, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    density = np.asarray(density_values, dtype=np.float64)
    if not (sigma.shape == p_cj.shape == targets.shape == density.shape):
        raise ShapeError("sigma, p_cj, targets, density_values must share "
                         "one (n_classes, n_coords) shape")

    var = sigma**2
    m1 = targets * p_cj + var * density
    m2 = (targets**2 + var) * p_cj + var * targets * density

    delta_w = 2.0 * np.sum(m2 - m1**2, axis=1)
    # delta_b[c, c'] = sum_j m2[c,j] + m2[c',j] - 2 m1[c,j] m1[c',j]
    sums = m2.sum(axis=1)
    delta_b = sums[:, None] + sums[None, :] - 2.0 * (m1 @ m1.T)
    np.fill_diagonal(delta_b, 0.0)

    own = np.einsum("cc->c", targets) ** 2
    limit_b = own[:, None] + own[None, :]
    np.fill_diagonal(limit_b, 0.0)
    return TheoreticalDeltas(delta_w=delta_w, delta_b=delta_b,
                             bound_w=2.0 * np.sum(var, axis=1),
                             limit_b=limit_b)


def tail_bound(t: float, sigma: float) -> float:
    """Closed-form upper bound on the Gaussian tail P(eps > |t|) for
    eps ~ N(0, sigma^2).

    Equals exactly 1/2 at t = 0 (where the exact tail is also 1/2) and
    decreases monotonically in |t|/sigma.
    """
    if sigma <= 0:
        raise ShapeError(f"sigma must be positive, got {sigma}")
    x = abs(float(t)) / float(sigma)
    return float(np.sqrt(2.0) / (np.sqrt(np.pi)
                                 * (np.sqrt(8.0 / np.pi + x * x) + x))
                 * np.exp(-0.5 * x * x))


# ---------------------------------------------------------------------------
# Layer-wise distance dynamics


@dataclass
class LayerDynamics:
    """Measured and model-predicted distances at one layer."""
    layer_index: int
    w_phys: float
    b_phys: float
    w_theo: float
    b_theo: float
    delta_w: float
    delta_b: float
    stats: ErrorStats


@dataclass
class DynamicsTrace:
    train: list
    test: list | None = None


def _layer_states_fn(model):
    if isinstance(model, _dan.DanModel):
        return _dan.layer_states
    if isinstance(model, _kdan.KdanModel):
        return _kdan.layer_states
    raise ShapeError(f"unsupported model type {type(model).__name__}")


def _pooled_deltas(deltas: TheoreticalDeltas, counts: np.ndarray):
    counts = counts.astype(np.float64)
    w_intra = counts * (counts - 1.0)
    w_inter = np.outer(counts, counts)
    np.fill_diagonal(w_inter, 0.0)
    dw = float(np.sum(w_intra * deltas.delta_w) / w_intra.sum())
    db = float(np.sum(w_inter * deltas.delta_b) / w_inter.sum())
    return dw, db


def _trace_side(model, X, labels, sample_pairs, seed, mode):
    states_fn = _layer_states_fn(model)
    n_classes = model.class_count
    targets = np.eye(n_classes)
    Y = encode_one_hot(labels, n_classes)
    records = []
    w_theo = b_theo = None
    for H, P, _ in states_fn(model, X):
        layer = len(records) + 1
        w_phys, b_phys = class_distances(H, labels, sample_pairs, seed)
        stats = error_stats(P, Y, mode=mode)
        density = gaussian_density_at_targets(stats.sigma, targets)
        deltas = theoretical_deltas(stats.sigma, stats.p_cj, targets, density)
        dw, db = _pooled_deltas(deltas, stats.class_counts)
        if w_theo is None:
            w_theo, b_theo = w_phys, b_phys  # anchor at the physical layer 1
        records.append(LayerDynamics(
            layer_index=layer, w_phys=w_phys, b_phys=b_phys,
            w_theo=w_theo, b_theo=b_theo, delta_w=dw, delta_b=db,
            stats=stats))
        w_theo = w_theo + dw
        b_theo = b_theo + db
    return records


def dynamics_trace(model, X, labels, X_test=None, labels_test=None,
                   sample_pairs: int = 1000, seed: int = 0,
                   mode: str = "gaussian") -> DynamicsTrace:
    """Measure intra/interclass distance dynamics across a fitted stack.

    For each layer: Monte-Carlo physical distances on the stacked features,
    error statistics of the layer's responses, and theoretical next-layer
    predictions accumulated from the layer-1 physical anchor. The same
    seeded pairs are reused at every layer so layer-to-layer changes
    reflect the features, not sampling noise. With test data supplied a
    second trace is produced the same way.
    """
    labels = np.asarray(labels, dtype=np.int64)
    train = _trace_side(model, X, labels, sample_pairs, seed, mode)
    test = None
    if X_test is not None:
        if labels_test is None:
            raise ShapeError("labels_test is required with X_test")
        labels_test = np.asarray(labels_test, dtype=np.int64)
        test = _trace_side(model, X_test, labels_test, sample_pairs, seed,
                           mode)
    return DynamicsTrace(train=train, test=test)
