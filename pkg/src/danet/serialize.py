"""Binary model container with bit-exact round trips.

Layout (all integers and floats little-endian):

    magic   4 bytes  b"DANC"
    version u32
    kind    u16 length + utf-8 tag ("dan" | "kdan")
    meta    u64 length + utf-8 JSON (config, dimensions, extra metadata)
    count   u32 number of matrices
    per matrix: u16 name length + utf-8 name, u64 rows, u64 cols,
                rows*cols float64 values

Files are written to a temporary sibling and renamed into place, so a
partial write never masquerades as a valid container.
"""

import json
import os
import struct

import numpy as np

from .dan import DanConfig, DanModel
from .errors import ModelFormatError
from .kdan import KdanConfig, KdanModel

MAGIC = b"DANC"
VERSION = 1


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _pack_matrix(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(np.atleast_2d(arr), dtype="<f8")
    head = _pack_str(name) + struct.pack("<QQ", *arr.shape)
    return head + arr.tobytes()


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.buf):
            raise ModelFormatError(f"{self.path}: truncated container")
        out = self.buf[self.pos:self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def read_str(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")

    def read_matrix(self):
        name = self.read_str()
        rows, cols = self.unpack("<QQ")
        data = np.frombuffer(self.take(rows * cols * 8), dtype="<f8")
        return name, data.reshape(rows, cols).astype(np.float64)


def _write_container(path, kind: str, meta: dict, matrices: list) -> None:
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    blob += _pack_str(kind)
    meta_raw = json.dumps(meta, sort_keys=True).encode("utf-8")
    blob += struct.pack("<Q", len(meta_raw)) + meta_raw
    blob += struct.pack("<I", len(matrices))
    for name, arr in matrices:
        blob += _pack_matrix(name, arr)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


def _read_container(path):
    with open(path, "rb") as f:
        r = _Reader(f.read(), path)
    if r.take(4) != MAGIC:
        raise ModelFormatError(f"{path}: not a model container")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise ModelFormatError(f"{path}: container version {version}, "
                               f"this build reads version {VERSION}")
    kind = r.read_str()
    (meta_len,) = r.unpack("<Q")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: corrupt metadata: {exc}") from exc
    (count,) = r.unpack("<I")
    matrices = dict(r.read_matrix() for _ in range(count))
    return kind, meta, matrices


def _config_to_json(config) -> dict:
    d = dict(config.__dict__)
    if not np.isscalar(d["lambda_layer"]):
        d["lambda_layer"] = list(d["lambda_layer"])
    return d


def _config_from_json(d: dict, cls):
    d = dict(d)
    if isinstance(d.get("lambda_layer"), list):
        d["lambda_layer"] = tuple(d["lambda_layer"])
    return cls(**d)


def save_model(model, path, *, extras: dict | None = None,
               meta: dict | None = None) -> None:
    """Serialize a fitted stack (either family) to ``path``.

    ``extras`` holds additional named float64 matrices (e.g. standardizer
    statistics) and ``meta`` extra JSON-serializable metadata; both travel
    with the model and come back from :func:`load_container`.
    """
    matrices = []
    if isinstance(model, DanModel):
        kind = "dan"
        for i, W in enumerate(model.layer_weights):
            matrices.append((f"layer_weights/{i}", W))
        if model.ft_weights is not None:
            matrices.append(("ft_weights", model.ft_weights))
        if model.nn_features is not None:
            matrices.append(("nn_features", model.nn_features))
            matrices.append(("nn_labels",
                             model.nn_labels.astype(np.float64)[:, None]))
    elif isinstance(model, KdanModel):
        kind = "kdan"
        matrices.append(("train_stack", model.train_stack))
        for i, C in enumerate(model.dual_coeffs):
            matrices.append((f"dual_coeffs/{i}", C))
        if model.ft_weights is not None:
            matrices.append(("ft_weights", model.ft_weights))
    else:
        raise ModelFormatError(f"cannot serialize {type(model).__name__}")

    doc = {
        "kind": kind,
        "config": _config_to_json(model.config),
        "input_dim": model.input_dim,
        "class_count": model.class_count,
        "depth": model.depth,
        "extra": meta or {},
    }
    if extras:
        for name, arr in extras.items():
            matrices.append((f"extras/{name}", np.asarray(arr,
                                                          dtype=np.float64)))
    _write_container(path, kind, doc, matrices)


def load_container(path):
    """Read a container; returns ``(model, extras, meta)``."""
    kind, meta, matrices = _read_container(path)

    def need(name):
        if name not in matrices:
            raise ModelFormatError(f"{path}: missing matrix {name!r}")
        return matrices[name]

    depth = int(meta["depth"])
    if kind == "dan":
        config = _config_from_json(meta["config"], DanConfig)
        nn_feats = matrices.get("nn_features")
        nn_labels = matrices.get("nn_labels")
        model = DanModel(
            layer_weights=[need(f"layer_weights/{i}") for i in range(depth)],
            ft_weights=matrices.get("ft_weights"),
            config=config,
            input_dim=int(meta["input_dim"]),
            class_count=int(meta["class_count"]),
            nn_features=nn_feats,
            nn_labels=None if nn_labels is None
            else nn_labels[:, 0].astype(np.int64),
        )
    elif kind == "kdan":
        config = _config_from_json(meta["config"], KdanConfig)
        model = KdanModel(
            train_stack=need("train_stack"),
            dual_coeffs=[need(f"dual_coeffs/{i}") for i in range(depth)],
            ft_weights=matrices.get("ft_weights"),
            config=config,
            input_dim=int(meta["input_dim"]),
            class_count=int(meta["class_count"]),
        )
    else:
        raise ModelFormatError(f"{path}: unknown model kind {kind!r}")

    extras = {name[len("extras/"):]: arr for name, arr in matrices.items()
              if name.startswith("extras/")}
    return model, extras, meta.get("extra", {})


def load_model(path):
    """Read a container and return just the model."""
    return load_container(path)[0]
