"""Kernelized stacked network: the same stacking discipline as the ridge
stack, with each layer solved in the RBF-kernel dual.

Every layer builds K(l) = exp(-gamma ||h_i - h_j||^2) over the current
stacks, solves (K + lam I) C = Y for the dual coefficients, and relearns
Q(l) = max(0, K C). The trimmed variant drops the fine-tuning layer and
classifies by argmax of the last layer's responses; it is the configuration
used for structured-feature tables.

The model stores the final training stack H(L) once; every layer's stack is
a column prefix of it, so memory grows as O(N * d_L) rather than per layer.
"""

from dataclasses import dataclass, field

import numpy as np

from .dan import LayerReport, power_regularize
from .distances import can_sample_pairs, class_distances
from .errors import ConfigError, ShapeError
from .linalg import as_matrix, gram_rbf, spd_solve
from .ridge import OneHotTargets, classify, ridge_fit


@dataclass(frozen=True)
class KdanConfig:
    """Depth, kernel width, and shrinkage for the kernel stack.

    With ``trim`` set the fine-tuning layer is removed and ``lambda_ft`` /
    ``beta_ft`` are ignored.
    """
    depth: int = 1
    lambda_layer: float | tuple = 0.1
    gamma_layer: float = 1.0
    lambda_ft: float = 0.1
    beta_ft: float = 0.5
    trim: bool = False

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.gamma_layer <= 0:
            raise ConfigError(f"gamma_layer must be positive, "
                              f"got {self.gamma_layer}")
        lams = self.layer_lambdas()
        if any(l < 0 for l in lams):
            raise ConfigError(f"lambda_layer must be non-negative, got {lams}")
        if not self.trim:
            if not 0.0 <= self.beta_ft <= 1.0:
                raise ConfigError(f"beta_ft must lie in [0, 1], "
                                  f"got {self.beta_ft}")
            if self.lambda_ft < 0:
                raise ConfigError(f"lambda_ft must be non-negative, "
                                  f"got {self.lambda_ft}")

    def layer_lambdas(self) -> list[float]:
        if np.isscalar(self.lambda_layer):
            return [float(self.lambda_layer)] * self.depth
        lams = [float(l) for l in self.lambda_layer]
        if len(lams) != self.depth:
            raise ConfigError(f"lambda_layer has {len(lams)} entries for "
                              f"depth {self.depth}")
        return lams


@dataclass
class KdanModel:
    """Fitted kernel stack.

    ``train_stack`` is the final training stack H(L); layer l's stack is
    its first ``input_dim + class_count*(l-1)`` columns. ``dual_coeffs``
    holds one (N, N_c) matrix per layer.
    """
    train_stack: np.ndarray = None
    dual_coeffs: list = field(default_factory=list)
    ft_weights: np.ndarray | None = None
    config: KdanConfig = field(default_factory=KdanConfig)
    input_dim: int = 0
    class_count: int = 0

    def __post_init__(self):
        if self.train_stack is None:
            return
        n = self.train_stack.shape[0]
        depth = len(self.dual_coeffs)
        expected = self.input_dim + self.class_count * (depth - 1)
        if self.train_stack.shape[1] != expected:
            raise ShapeError(f"training stack has {self.train_stack.shape[1]} "
                             f"columns, expected {expected}")
        for i, C in enumerate(self.dual_coeffs):
            if C.shape != (n, self.class_count):
                raise ShapeError(f"layer {i + 1} dual coefficients have shape "
                                 f"{C.shape}, expected ({n}, {self.class_count})")

    @property
    def depth(self) -> int:
        return len(self.dual_coeffs)

    def layer_stack(self, layer_index: int) -> np.ndarray:
        """Training stack H(l) for 1-based ``layer_index``."""
        width = self.input_dim + self.class_count * (layer_index - 1)
        return self.train_stack[:, :width]


def kdan_fit(X, Y: OneHotTargets, config: KdanConfig, validation=None,
             distance_pairs: int = 1000, distance_seed: int = 0,
             keep_train_q: bool = False):
    """Train the kernel stack layer by layer.

    Per layer the training responses are recovered from the solve identity
    K C = Y - lam C, which avoids keeping the Gram matrix alive after the
    factorization. Returns ``(KdanModel, [LayerReport])``.
    """
    X = as_matrix(X, "X")
    if not isinstance(Y, OneHotTargets):
        raise ShapeError("Y must be OneHotTargets (use encode_one_hot)")
    if X.shape[0] != Y.matrix.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows but targets have "
                         f"{Y.matrix.shape[0]}")
    lams = config.layer_lambdas()
    gamma = config.gamma_layer
    X_val = labels_val = None
    if validation is not None:
        X_val, labels_val = validation
        X_val = as_matrix(X_val, "X_val")
        labels_val = np.asarray(labels_val, dtype=np.int64)
        if X_val.shape[1] != X.shape[1]:
            raise ShapeError(f"validation dimension {X_val.shape[1]} does "
                             f"not match training dimension {X.shape[1]}")

    report_distances = distance_pairs > 0 and can_sample_pairs(Y.labels)
    H, Hv = X, X_val
    coeffs, q_blocks, reports = [], [], []
    for idx, lam in enumerate(lams):
        try:
            K = gram_rbf(H, H, gamma)
            C = spd_solve(K, lam, Y.matrix)
        except Exception as exc:
            raise type(exc)(f"layer {idx + 1}: {exc}") from exc
        del K
        P = Y.matrix - lam * C
        Q = np.maximum(0.0, P)
        coeffs.append(C)
        q_blocks.append(Q)

        val_acc = None
        if Hv is not None:
            Pv = gram_rbf(Hv, H, gamma) @ C
            val_acc = float(np.mean(classify(Pv) == labels_val))
        intra = inter = None
        if report_distances:
            intra, inter = class_distances(H, Y.labels, distance_pairs,
                                           distance_seed)
        reports.append(LayerReport(
            layer_index=idx + 1,
            train_accuracy=float(np.mean(classify(P) == Y.labels)),
            validation_accuracy=val_acc,
            train_residual=float(np.linalg.norm(P - Y.matrix)),
            intra_distance=intra,
            inter_distance=inter,
        ))
        if idx + 1 < len(lams):
            H = np.hstack([H, Q])
            if Hv is not None:
                Hv = np.hstack([Hv, np.maximum(0.0, Pv)])

    ft_w = None
    if not config.trim:
        Q_ft = power_regularize(np.hstack(q_blocks), config.beta_ft)
        ft_w = ridge_fit(Q_ft, Y.matrix, config.lambda_ft).weights

    model = KdanModel(train_stack=H, dual_coeffs=coeffs, ft_weights=ft_w,
                      config=config, input_dim=X.shape[1],
                      class_count=Y.class_count)
    if keep_train_q:
        model.train_q = q_blocks
    return model, reports


def layer_states(model: KdanModel, X):
    """Replay the kernel stack on ``X``; yields ``(H, P, Q)`` per layer."""
    H = as_matrix(X, "X")
    if H.shape[1] != model.input_dim:
        raise ShapeError(f"feature dimension {H.shape[1]} does not match "
                         f"model input dimension {model.input_dim}")
    gamma = model.config.gamma_layer
    for idx, C in enumerate(model.dual_coeffs):
        P = gram_rbf(H, model.layer_stack(idx + 1), gamma) @ C
        Q = np.maximum(0.0, P)
        yield H, P, Q
        if idx + 1 < len(model.dual_coeffs):
            H = np.hstack([H, Q])


def kdan_forward(model: KdanModel, x):
    """Forward pass; returns ``(relearned_features, response)`` like the
    ridge stack. With ``trim`` the response is the last layer's raw P."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    states = list(layer_states(model, X))
    qs = [Q for _, _, Q in states]
    if model.config.trim:
        resp = states[-1][1]
    else:
        Q_ft = power_regularize(np.hstack(qs), model.config.beta_ft)
        resp = Q_ft @ model.ft_weights
    if single:
        return [q[0] for q in qs], resp[0]
    return qs, resp


def kdan_classify(model: KdanModel, x):
    """Class index (or indices) for ``x``."""
    _, resp = kdan_forward(model, x)
    return classify(resp)
