import struct

import numpy as np
import pytest

from sou_privacy.container import ContainerError, dumps, loads, read_container, write_container
from sou_privacy.featurestore import FeatureSet, load_features, load_standardizer, save_features, save_standardizer
from sou_privacy.features import Standardizer


def test_byte_layout_matches_hand_packed_oracle():
    entries = {"a": np.array([1.5, -2.0], dtype=np.float32), "bé": np.arange(6, dtype=np.float64).reshape(2, 3)}
    expected = b"SOUM" + struct.pack("<II", 1, 2)
    expected += struct.pack("<H", 1) + b"a" + struct.pack("<BB", 0, 1) + struct.pack("<I", 2) + struct.pack("<2f", 1.5, -2.0)
    name = "bé".encode("utf-8")
    expected += struct.pack("<H", len(name)) + name + struct.pack("<BB", 1, 2) + struct.pack("<II", 2, 3) + struct.pack("<6d", *range(6))
    assert dumps(entries) == expected


def test_roundtrip_preserves_dtype_shape_and_order():
    rng = np.random.default_rng(0)
    entries = {"x": rng.standard_normal((2, 3, 4)).astype(np.float32), "y": rng.standard_normal(5), "empty": np.zeros(0)}
    back = loads(dumps(entries))
    assert list(back) == list(entries)
    for k in entries:
        assert back[k].dtype == entries[k].dtype
        np.testing.assert_array_equal(back[k], entries[k])


def test_rejects_unsupported_dtype_and_bad_files(tmp_path):
    with pytest.raises((ContainerError, ValueError)):
        dumps({"i": np.arange(3)})
    good = dumps({"x": np.ones(3)})
    with pytest.raises(ContainerError, match="trailing"):
        loads(good + b"\0")
    with pytest.raises(ContainerError, match="truncated"):
        loads(good[:10])
    write_container(tmp_path / "f.soum", {"x": np.ones(2)})
    np.testing.assert_array_equal(read_container(tmp_path / "f.soum")["x"], [1.0, 1.0])


def test_feature_store_roundtrip(tmp_path):
    X = np.random.default_rng(1).standard_normal((3, 4, 5))
    fs = FeatureSet(X, ["r1", "r1", "r#2"], np.array([0, 1, 0]), "test", standardized=True, fitted_on="train")
    save_features(tmp_path / "t.soum", fs)
    back = load_features(tmp_path / "t.soum", "test")
    assert back.recording_ids == ["r1", "r1", "r#2"]
    np.testing.assert_array_equal(back.chunk_index, [0, 1, 0])
    np.testing.assert_array_equal(back.X, X.astype(np.float32))
    assert read_container(tmp_path / "t.soum")["r1#1"].dtype == np.float32
    back.attach_labels({"r1": {"gender": "M", "diagnosis": "PD"}, "r#2": {"gender": "F", "diagnosis": "HC"}})
    assert list(back.gender) == ["M", "M", "F"]
    with pytest.raises(KeyError):
        load_features(tmp_path / "t.soum", "test").attach_labels({})


def test_standardizer_sidecar_roundtrip(tmp_path):
    s = Standardizer(np.arange(4.0), np.ones(4) * 0.5, 1e-8, "train")
    save_standardizer(tmp_path / "s.soum", s)
    back = load_standardizer(tmp_path / "s.soum")
    np.testing.assert_array_equal(back.mean, s.mean)
    np.testing.assert_array_equal(back.std, s.std)
    assert back.eps == s.eps and back.fitted_on == "train"
