import struct

import numpy as np
import pytest

from danet.dan import FT_NEAREST_NEIGHBOR, DanConfig, dan_fit, dan_forward
from danet.errors import ModelFormatError
from danet.kdan import KdanConfig, kdan_fit, kdan_forward
from danet.ridge import encode_one_hot
from danet.serialize import MAGIC, load_container, load_model, save_model
from danet.synth import make_moons, make_xor


@pytest.fixture(scope="module")
def dan_model():
    X, y = make_xor(120, seed=21)
    model, _ = dan_fit(X, encode_one_hot(y, 2),
                       DanConfig(depth=3, lambda_layer=(0.1, 0.2, 0.3),
                                 lambda_ft=0.05, beta_ft=0.5))
    return model, X


@pytest.fixture(scope="module")
def kdan_model():
    X, y = make_moons(150, seed=31)
    model, _ = kdan_fit(X, encode_one_hot(y, 2),
                        KdanConfig(depth=2, lambda_layer=0.05,
                                   gamma_layer=0.7, trim=True))
    return model, X


class TestRoundTrip:
    def test_dan_bit_exact(self, dan_model, tmp_path):
        model, X = dan_model
        path = tmp_path / "m.model"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.config == model.config
        assert loaded.input_dim == model.input_dim
        for a, b in zip(model.layer_weights, loaded.layer_weights):
            assert np.array_equal(a, b)
        assert np.array_equal(model.ft_weights, loaded.ft_weights)
        _, r0 = dan_forward(model, X)
        _, r1 = dan_forward(loaded, X)
        assert np.array_equal(r0, r1)  # bit-identical predictions

    def test_kdan_bit_exact(self, kdan_model, tmp_path):
        model, X = kdan_model
        path = tmp_path / "m.model"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.config == model.config
        assert np.array_equal(model.train_stack, loaded.train_stack)
        for a, b in zip(model.dual_coeffs, loaded.dual_coeffs):
            assert np.array_equal(a, b)
        _, r0 = kdan_forward(model, X)
        _, r1 = kdan_forward(loaded, X)
        assert np.array_equal(r0, r1)

    def test_save_is_deterministic(self, dan_model, tmp_path):
        model, _ = dan_model
        p1, p2 = tmp_path / "a.model", tmp_path / "b.model"
        save_model(model, p1)
        save_model(model, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_nn_classifier_round_trip(self, tmp_path):
        X, y = make_xor(80, seed=3)
        model, _ = dan_fit(X, encode_one_hot(y, 2),
                           DanConfig(depth=2, lambda_layer=0.1,
                                     ft_classifier=FT_NEAREST_NEIGHBOR))
        path = tmp_path / "nn.model"
        save_model(model, path)
        loaded = load_model(path)
        assert np.array_equal(model.nn_features, loaded.nn_features)
        assert np.array_equal(model.nn_labels, loaded.nn_labels)
        assert loaded.nn_labels.dtype == np.int64
        _, r0 = dan_forward(model, X)
        _, r1 = dan_forward(loaded, X)
        assert np.array_equal(r0, r1)

    def test_extras_and_meta_travel(self, dan_model, tmp_path):
        model, _ = dan_model
        path = tmp_path / "m.model"
        mean = np.array([[1.0, 2.0]])
        save_model(model, path, extras={"standardizer_mean": mean},
                   meta={"note": "fixture"})
        _, extras, meta = load_container(path)
        assert np.array_equal(extras["standardizer_mean"], mean)
        assert meta == {"note": "fixture"}


class TestFormatErrors:
    def test_wrong_magic(self, tmp_path):
        p = tmp_path / "junk.model"
        p.write_bytes(b"NOPE" + b"\0" * 64)
        with pytest.raises(ModelFormatError, match="container"):
            load_model(p)

    def test_version_mismatch(self, dan_model, tmp_path):
        model, _ = dan_model
        p = tmp_path / "m.model"
        save_model(model, p)
        raw = bytearray(p.read_bytes())
        raw[4:8] = struct.pack("<I", 99)
        p.write_bytes(bytes(raw))
        with pytest.raises(ModelFormatError, match="version 99"):
            load_model(p)

    def test_truncated_container(self, dan_model, tmp_path):
        model, _ = dan_model
        p = tmp_path / "m.model"
        save_model(model, p)
        p.write_bytes(p.read_bytes()[:40])
        with pytest.raises(ModelFormatError, match="truncated"):
            load_model(p)

    def test_no_tmp_file_left(self, dan_model, tmp_path):
        model, _ = dan_model
        p = tmp_path / "m.model"
        save_model(model, p)
        assert p.read_bytes()[:4] == MAGIC
        assert not (tmp_path / "m.model.tmp").exists()
