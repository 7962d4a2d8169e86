"""Dataset ingestion: IDX image files, delimited feature tables,
standardization, and seeded splits.

Loaders are deterministic and share no mutable state; repeated loads of the
same file are bit-identical.
"""

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataFormatError, ShapeError
from .linalg import as_matrix

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

STD_FLOOR = 1e-12


@dataclass
class Dataset:
    """Feature matrix with integer class labels.

    ``class_names`` maps label indices back to the source values (when the
    source was categorical); ``provenance`` records where the data came
    from.
    """
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    feature_names: list | None = None
    class_names: list | None = None
    provenance: str = ""

    def __post_init__(self):
        self.features = as_matrix(self.features, "features")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1 or len(self.labels) != len(self.features):
            raise ShapeError(f"{len(self.labels)} labels for "
                             f"{len(self.features)} feature rows")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.class_count):
            raise ShapeError(f"labels must lie in 0..{self.class_count - 1}")

    def __len__(self):
        return len(self.labels)

    def take(self, indices, note: str = "") -> "Dataset":
        """Row subset with provenance annotated."""
        return replace(self, features=self.features[indices],
                       labels=self.labels[indices],
                       provenance=self.provenance + note)


# ---------------------------------------------------------------------------
# IDX binary format (big-endian, magic-number headers)


def _read_exact(f, count, path):
    data = f.read(count)
    if len(data) != count:
        raise DataFormatError(f"{path}: truncated file "
                              f"(wanted {count} bytes, got {len(data)})")
    return data


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair.

    Pixels are flattened row-major and scaled to [0, 1] by division by 255;
    the label values are taken as class indices.
    """
    def check_magic(f, path, expected):
        (magic,) = struct.unpack(">I", _read_exact(f, 4, path))
        if magic != expected:
            raise DataFormatError(f"{path}: bad magic 0x{magic:08x}, "
                                  f"expected 0x{expected:08x}")

    with open(images_path, "rb") as f:
        check_magic(f, images_path, IDX_IMAGES_MAGIC)
        n, rows, cols = struct.unpack(">III", _read_exact(f, 12, images_path))
        pixels = np.frombuffer(_read_exact(f, n * rows * cols, images_path),
                               dtype=np.uint8)
        if f.read(1):
            raise DataFormatError(f"{images_path}: trailing bytes after "
                                  f"{n} images")
    with open(labels_path, "rb") as f:
        check_magic(f, labels_path, IDX_LABELS_MAGIC)
        (n_labels,) = struct.unpack(">I", _read_exact(f, 4, labels_path))
        labels = np.frombuffer(_read_exact(f, n_labels, labels_path),
                               dtype=np.uint8)
        if f.read(1):
            raise DataFormatError(f"{labels_path}: trailing bytes after "
                                  f"{n_labels} labels")
    if n != n_labels:
        raise DataFormatError(f"{images_path} holds {n} images but "
                              f"{labels_path} holds {n_labels} labels")
    features = pixels.astype(np.float64).reshape(n, rows * cols) / 255.0
    labels = labels.astype(np.int64)
    class_count = int(labels.max()) + 1 if n else 1
    return Dataset(features=features, labels=labels, class_count=class_count,
                   provenance=f"idx:{images_path},{labels_path}")


def write_idx_images(path, images) -> None:
    """Write a uint8 image stack (n, rows, cols) as an IDX image file."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ShapeError(f"images must be 3-D, got shape {images.shape}")
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(path, labels) -> None:
    """Write uint8 labels as an IDX label file."""
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {labels.shape}")
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


# ---------------------------------------------------------------------------
# Delimited text tables


def _try_float(s: str):
    try:
        return float(s)
    except ValueError:
        return None


def _parse_rows(path, delimiter, has_header):
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.rstrip("\r\n") for ln in f]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    # delimiter None means runs of whitespace (classic fixed-width exports)
    rows = [ln.split(delimiter) for ln in lines]
    header = None
    if has_header:
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]
        if not rows:
            raise DataFormatError(f"{path}: header but no data rows")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            line_no = i + 1 + (1 if has_header else 0)
            raise DataFormatError(f"{path}: line {line_no} has {len(row)} "
                                  f"fields, expected {width}")
    rows = [[v.strip() for v in row] for row in rows]
    return header, rows


def _resolve_label_column(label_column, header, width, path):
    if isinstance(label_column, str):
        if header is None:
            raise DataFormatError(f"{path}: label column named "
                                  f"{label_column!r} needs a header row")
        if label_column not in header:
            raise DataFormatError(f"{path}: no column named {label_column!r}")
        return header.index(label_column)
    idx = int(label_column)
    if idx < 0:
        idx += width
    if not 0 <= idx < width:
        raise DataFormatError(f"{path}: label column {label_column} out of "
                              f"range for {width} columns")
    return idx


def _encode_groups(groups, header, label_idx, width):
    """Shared encoding across one or more row groups (e.g. train then test).

    A feature column is numeric iff every value in every group parses as a
    float; otherwise it is one-hot expanded over the category values in
    first-appearance order. Labels map to indices in first-appearance order.
    """
    feat_cols = [j for j in range(width) if j != label_idx]
    numeric = {}
    for j in feat_cols:
        numeric[j] = all(_try_float(row[j]) is not None
                         for rows in groups for row in rows)
    categories = {}
    for j in feat_cols:
        if not numeric[j]:
            seen = {}
            for rows in groups:
                for row in rows:
                    seen.setdefault(row[j], len(seen))
            categories[j] = seen

    label_map = {}
    for rows in groups:
        for row in rows:
            label_map.setdefault(row[label_idx], len(label_map))

    names = []
    for j in feat_cols:
        base = header[j] if header else f"col{j}"
        if numeric[j]:
            names.append(base)
        else:
            order = sorted(categories[j], key=categories[j].get)
            names.extend(f"{base}={v}" for v in order)

    def encode(rows):
        X = np.zeros((len(rows), len(names)))
        labels = np.empty(len(rows), dtype=np.int64)
        for i, row in enumerate(rows):
            k = 0
            for j in feat_cols:
                if numeric[j]:
                    X[i, k] = _try_float(row[j])
                    k += 1
                else:
                    X[i, k + categories[j][row[j]]] = 1.0
                    k += len(categories[j])
            labels[i] = label_map[row[label_idx]]
        return X, labels

    class_names = sorted(label_map, key=label_map.get)
    return encode, names, class_names


def load_delimited(path, label_column=0, delimiter=",",
                   has_header=False) -> Dataset:
    """Load one delimited table as a Dataset.

    Categorical feature columns are one-hot expanded; categorical labels
    map to indices by first appearance. ``delimiter=None`` splits on runs
    of whitespace. To encode a train/test file pair consistently use
    :func:`load_delimited_pair`.
    """
    header, rows = _parse_rows(path, delimiter, has_header)
    label_idx = _resolve_label_column(label_column, header, len(rows[0]), path)
    encode, names, class_names = _encode_groups([rows], header, label_idx,
                                                len(rows[0]))
    X, labels = encode(rows)
    return Dataset(features=X, labels=labels, class_count=len(class_names),
                   feature_names=names, class_names=class_names,
                   provenance=f"delimited:{path}")


def load_delimited_pair(train_path, test_path, label_column=0, delimiter=",",
                        has_header=False):
    """Load a train/test file pair with one shared encoding.

    Category and label vocabularies are built over both files (train rows
    first), so the two Datasets agree on feature layout and class indices.
    """
    header_a, rows_a = _parse_rows(train_path, delimiter, has_header)
    header_b, rows_b = _parse_rows(test_path, delimiter, has_header)
    if len(rows_a[0]) != len(rows_b[0]):
        raise DataFormatError(f"{train_path} has {len(rows_a[0])} columns but "
                              f"{test_path} has {len(rows_b[0])}")
    label_idx = _resolve_label_column(label_column, header_a, len(rows_a[0]),
                                      train_path)
    encode, names, class_names = _encode_groups([rows_a, rows_b], header_a,
                                                label_idx, len(rows_a[0]))
    X_a, y_a = encode(rows_a)
    X_b, y_b = encode(rows_b)
    n_classes = len(class_names)
    train = Dataset(features=X_a, labels=y_a, class_count=n_classes,
                    feature_names=names, class_names=class_names,
                    provenance=f"delimited:{train_path}")
    test = Dataset(features=X_b, labels=y_b, class_count=n_classes,
                   feature_names=names, class_names=class_names,
                   provenance=f"delimited:{test_path}")
    return train, test


# ---------------------------------------------------------------------------
# Standardization (training statistics only) and splits


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-scoring parameters computed from training data only."""
    mean: np.ndarray
    std: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = as_matrix(X, "X")
        if X.shape[1] != self.mean.shape[0]:
            raise ShapeError(f"feature dimension {X.shape[1]} does not match "
                             f"standardizer with {self.mean.shape[0]}")
        return (X - self.mean) / self.std


def fit_standardizer(train: Dataset) -> Standardizer:
    """Fit per-feature mean/std on a training Dataset.

    Standard deviations are floor-clamped at 1e-12; exactly constant
    columns use the constant as the mean so they transform to exact zeros.
    """
    if not isinstance(train, Dataset):
        raise ShapeError("fit_standardizer takes a training Dataset")
    X = train.features
    mean = X.mean(axis=0)
    cmax, cmin = X.max(axis=0), X.min(axis=0)
    mean = np.where(cmax == cmin, cmax, mean)
    std = np.sqrt(np.mean((X - mean) ** 2, axis=0))
    return Standardizer(mean=mean, std=np.maximum(std, STD_FLOOR))


def split(ds: Dataset, train_fraction: float, stratified: bool = False,
          seed: int = 0):
    """Seeded deterministic train/test split.

    Stratified mode preserves per-class proportions within one sample,
    using largest-remainder rounding of the per-class quotas.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), "
                          f"got {train_fraction}")
    n = len(ds)
    n_train = int(round(n * train_fraction))
    if n_train < 1 or n_train >= n:
        raise ConfigError(f"train_fraction {train_fraction} leaves an empty "
                          f"side for {n} samples")
    rng = np.random.default_rng(seed)
    if not stratified:
        perm = rng.permutation(n)
        return ds.take(perm[:n_train], "|split:train"), \
            ds.take(perm[n_train:], "|split:test")

    counts = np.bincount(ds.labels, minlength=ds.class_count)
    if (counts == 0).any():
        empty = int(np.argmin(counts))
        raise ConfigError(f"stratified split impossible: class {empty} "
                          f"has no samples")
    quota = counts * train_fraction
    base = np.floor(quota).astype(int)
    deficit = n_train - base.sum()
    order = np.lexsort((np.arange(len(counts)), -(quota - base)))
    for c in order[:deficit]:
        base[c] += 1
    train_idx, test_idx = [], []
    for c in range(ds.class_count):
        members = rng.permutation(np.nonzero(ds.labels == c)[0])
        train_idx.append(members[:base[c]])
        test_idx.append(members[base[c]:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)
    return ds.take(rng.permutation(train_idx), "|split:train"), \
        ds.take(rng.permutation(test_idx), "|split:test")
