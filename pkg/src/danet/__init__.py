"""danet: backprop-free stacked ridge-regression networks.

A DAN stacks closed-form ridge solves layer by layer, feeding each layer
the raw features plus every previous layer's ReLU-ed predictions; K-DAN
does the same with RBF kernel ridge solves. The theory module empirically
verifies the guarantees behind the construction (span-gain residual
monotonicity and intra/interclass distance dynamics).
"""

from .dan import (DanConfig, DanModel, LayerReport, dan_classify, dan_fit,
                  dan_forward, power_regularize, truncate_layers)
from .data import (Dataset, Standardizer, fit_standardizer, load_delimited,
                   load_delimited_pair, load_idx, split, write_idx_images,
                   write_idx_labels)
from .distances import class_distances, exact_class_distances
from .errors import (ConfigError, DanetError, DataFormatError, EncodingError,
                     ModelFormatError, ShapeError, SingularMatrixError)
from .kdan import KdanConfig, KdanModel, kdan_classify, kdan_fit, kdan_forward
from .linalg import gram_rbf, residual_orthogonality, spd_solve
from .ridge import (KrrModel, OneHotTargets, RidgeModel, classify,
                    encode_one_hot, krr_fit, krr_predict, ridge_fit,
                    ridge_predict)
from .serialize import load_container, load_model, save_model
from .theory import (DynamicsTrace, ErrorStats, SpanGainVerdict,
                     augmentation_identity_check, dynamics_trace, error_stats,
                     gaussian_density_at_targets, relu_moments, span_gain_check,
                     tail_bound, theoretical_deltas)

__version__ = "0.1.0"
