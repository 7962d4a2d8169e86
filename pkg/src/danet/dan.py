"""Stacked ridge-regression network with layer-wise feature relearning.

Layer l learns on the stack H(l) = [X, Q(1), ..., Q(l-1)] (width
d + N_c*(l-1)), producing responses P(l) = H(l) W(l) and relearned
features Q(l) = max(0, P(l)). An optional fine-tuning output layer fits
ridge weights on the power-regularized concatenation [Q(1) ... Q(L)]^beta.
"""

from dataclasses import dataclass, field

import numpy as np

from .distances import can_sample_pairs, class_distances
from .errors import ConfigError, ShapeError
from .linalg import as_matrix
from .ridge import OneHotTargets, classify, ridge_fit

FT_REGRESSION = "regression"
FT_NEAREST_NEIGHBOR = "nearest-neighbor"


@dataclass(frozen=True)
class DanConfig:
    """Depth, shrinkage, and ablation switches for a stacked network.

    ``lambda_layer`` is shared across layers by default; pass a sequence of
    length ``depth`` to override per layer.
    """
    depth: int = 1
    lambda_layer: float | tuple = 0.1
    lambda_ft: float = 0.1
    beta_ft: float = 0.5
    relu_enabled: bool = True
    ft_enabled: bool = True
    ft_classifier: str = FT_REGRESSION

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if not 0.0 <= self.beta_ft <= 1.0:
            raise ConfigError(f"beta_ft must lie in [0, 1], got {self.beta_ft}")
        lams = self.layer_lambdas()
        if any(l < 0 for l in lams):
            raise ConfigError(f"lambda_layer must be non-negative, got {lams}")
        if self.lambda_ft < 0:
            raise ConfigError(f"lambda_ft must be non-negative, "
                              f"got {self.lambda_ft}")
        if self.ft_classifier not in (FT_REGRESSION, FT_NEAREST_NEIGHBOR):
            raise ConfigError(f"unknown ft_classifier {self.ft_classifier!r}")

    def layer_lambdas(self) -> list[float]:
        if np.isscalar(self.lambda_layer):
            return [float(self.lambda_layer)] * self.depth
        lams = [float(l) for l in self.lambda_layer]
        if len(lams) != self.depth:
            raise ConfigError(f"lambda_layer has {len(lams)} entries for "
                              f"depth {self.depth}")
        return lams


@dataclass
class LayerReport:
    """Per-layer training metrics collected during a fit."""
    layer_index: int
    train_accuracy: float
    validation_accuracy: float | None
    train_residual: float
    intra_distance: float | None = None
    inter_distance: float | None = None


@dataclass
class DanModel:
    """Fitted stack: per-layer ridge weights plus the optional FT weights.

    ``nn_features``/``nn_labels`` hold the power-regularized training stacks
    used by the nearest-neighbor fine-tuning classifier.
    """
    layer_weights: list = field(default_factory=list)
    ft_weights: np.ndarray | None = None
    config: DanConfig = field(default_factory=DanConfig)
    input_dim: int = 0
    class_count: int = 0
    nn_features: np.ndarray | None = None
    nn_labels: np.ndarray | None = None

    def __post_init__(self):
        for i, W in enumerate(self.layer_weights):
            expected = self.input_dim + self.class_count * i
            if W.shape != (expected, self.class_count):
                raise ShapeError(
                    f"layer {i + 1} weights have shape {W.shape}, expected "
                    f"({expected}, {self.class_count})")
        if self.config.ft_enabled and self.ft_weights is not None:
            d_ft = len(self.layer_weights) * self.class_count
            if self.ft_weights.shape != (d_ft, self.class_count):
                raise ShapeError(f"FT weights have shape "
                                 f"{self.ft_weights.shape}, expected "
                                 f"({d_ft}, {self.class_count})")

    @property
    def depth(self) -> int:
        return len(self.layer_weights)


def power_regularize(Q, beta: float) -> np.ndarray:
    """Elementwise ``q**beta`` on a non-negative matrix, with 0**beta := 0
    for every beta in [0, 1] (including beta = 0)."""
    Q = np.asarray(Q, dtype=np.float64)
    if not 0.0 <= beta <= 1.0:
        raise ConfigError(f"beta must lie in [0, 1], got {beta}")
    if Q.size and Q.min() < 0:
        raise ShapeError("power_regularize requires non-negative entries; "
                         "negative input indicates ReLU was bypassed")
    if beta == 1.0:
        return Q.copy()
    with np.errstate(divide="ignore"):
        return np.where(Q > 0, np.power(Q, beta), 0.0)


def _as_targets(Y) -> OneHotTargets:
    if not isinstance(Y, OneHotTargets):
        raise ShapeError("Y must be OneHotTargets (use encode_one_hot)")
    return Y


def dan_fit(X, Y: OneHotTargets, config: DanConfig, validation=None,
            distance_pairs: int = 1000, distance_seed: int = 0,
            keep_train_q: bool = False):
    """Train the stacked network layer by layer.

    ``validation`` is an optional ``(X_val, labels_val)`` pair; per-layer
    validation accuracy is then recorded in the reports. Returns
    ``(DanModel, [LayerReport])``. With ``keep_train_q`` the per-layer
    training Q matrices are attached to the model as ``train_q`` (testing
    hook; not serialized).

    Setting ``distance_pairs=0`` skips the intra/interclass distance
    estimates in the reports.
    """
    X = as_matrix(X, "X")
    Y = _as_targets(Y)
    if X.shape[0] != Y.matrix.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows but targets have "
                         f"{Y.matrix.shape[0]}")
    lams = config.layer_lambdas()
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
    weights, q_blocks, reports = [], [], []
    for idx, lam in enumerate(lams):
        try:
            W = ridge_fit(H, Y.matrix, lam).weights
        except Exception as exc:
            raise type(exc)(f"layer {idx + 1}: {exc}") from exc
        P = H @ W
        Q = np.maximum(0.0, P) if config.relu_enabled else P
        weights.append(W)
        q_blocks.append(Q)

        val_acc = None
        if Hv is not None:
            Pv = Hv @ W
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
                Qv = np.maximum(0.0, Pv) if config.relu_enabled else Pv
                Hv = np.hstack([Hv, Qv])

    ft_w = nn_feats = nn_labels = None
    if config.ft_enabled:
        Q_ft = power_regularize(np.hstack(q_blocks), config.beta_ft)
        ft_w = ridge_fit(Q_ft, Y.matrix, config.lambda_ft).weights
        if config.ft_classifier == FT_NEAREST_NEIGHBOR:
            nn_feats = Q_ft
            nn_labels = Y.labels.copy()

    model = DanModel(layer_weights=weights, ft_weights=ft_w, config=config,
                     input_dim=X.shape[1], class_count=Y.class_count,
                     nn_features=nn_feats, nn_labels=nn_labels)
    if keep_train_q:
        model.train_q = q_blocks
    return model, reports


def layer_states(model: DanModel, X):
    """Replay the stack on ``X`` (one sample per row).

    Yields ``(H, P, Q)`` per layer, where ``H`` is the stack entering the
    layer; used by inference, evaluation, and the theory lab.
    """
    H = as_matrix(X, "X")
    if H.shape[1] != model.input_dim:
        raise ShapeError(f"feature dimension {H.shape[1]} does not match "
                         f"model input dimension {model.input_dim}")
    for idx, W in enumerate(model.layer_weights):
        P = H @ W
        Q = np.maximum(0.0, P) if model.config.relu_enabled else P
        yield H, P, Q
        if idx + 1 < len(model.layer_weights):
            H = np.hstack([H, Q])


def _nn_response(model: DanModel, Q_ft: np.ndarray) -> np.ndarray:
    # Negated distance to the nearest stored training vector of each class;
    # argmax of the response is then an exact 1-NN vote.
    d2 = (np.einsum("ij,ij->i", Q_ft, Q_ft)[:, None]
          + np.einsum("ij,ij->i", model.nn_features, model.nn_features)[None, :]
          - 2.0 * (Q_ft @ model.nn_features.T))
    np.maximum(d2, 0.0, out=d2)
    dist = np.sqrt(d2)
    resp = np.empty((Q_ft.shape[0], model.class_count))
    for c in range(model.class_count):
        cols = model.nn_labels == c
        resp[:, c] = -dist[:, cols].min(axis=1) if cols.any() else -np.inf
    return resp


def dan_forward(model: DanModel, x):
    """Forward pass. Returns ``(relearned_features, response)``.

    For a single feature vector the relearned features are a list of
    per-layer vectors ``q(l)``; for a matrix input they are per-layer
    matrices. The response comes from the FT layer when enabled (regression
    weights, or negated 1-NN distances for the nearest-neighbor
    classifier), else from the last layer's raw responses.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    states = list(layer_states(model, X))
    qs = [Q for _, _, Q in states]
    if model.config.ft_enabled:
        Q_ft = power_regularize(np.hstack(qs), model.config.beta_ft)
        if model.config.ft_classifier == FT_NEAREST_NEIGHBOR:
            resp = _nn_response(model, Q_ft)
        else:
            resp = Q_ft @ model.ft_weights
    else:
        resp = states[-1][1]
    if single:
        return [q[0] for q in qs], resp[0]
    return qs, resp


def dan_classify(model: DanModel, x):
    """Class index (or indices) for ``x`` via the model's final classifier."""
    _, resp = dan_forward(model, x)
    return classify(resp)


def truncate_layers(model: DanModel, depth: int) -> DanModel:
    """Drop layers beyond ``depth`` (post-fit depth selection).

    Only valid for models without a fine-tuning layer: FT weights are tied
    to the full stack width and would require refitting on training data.
    """
    if not 1 <= depth <= model.depth:
        raise ConfigError(f"depth must lie in 1..{model.depth}, got {depth}")
    if model.config.ft_enabled:
        raise ConfigError("cannot truncate a model with a fine-tuning layer; "
                          "refit with the reduced depth instead")
    cfg = DanConfig(depth=depth,
                    lambda_layer=tuple(model.config.layer_lambdas()[:depth]),
                    lambda_ft=model.config.lambda_ft,
                    beta_ft=model.config.beta_ft,
                    relu_enabled=model.config.relu_enabled,
                    ft_enabled=False,
                    ft_classifier=model.config.ft_classifier)
    return DanModel(layer_weights=model.layer_weights[:depth],
                    ft_weights=None, config=cfg,
                    input_dim=model.input_dim,
                    class_count=model.class_count)
