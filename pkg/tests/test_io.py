import numpy as np
import pytest

from albalance import io as alio
from albalance.raster import LabelMask, ProbabilityMap, RasterImage


def test_probability_map_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    raw = rng.uniform(0.1, 1.0, size=(2, 2, 3))
    pm = ProbabilityMap(data=raw / raw.sum(axis=2, keepdims=True))
    path = tmp_path / "pm.alrt"
    alio.write_probability_map(path, pm)
    back = alio.read_probability_map(path)
    assert back.data.tobytes() == pm.data.tobytes()


def test_label_mask_roundtrip_includes_provenance(tmp_path):
    labels = np.array([[0, 255], [2, 1]], dtype=np.uint8)
    prov = np.array([[1, 0], [2, 1]], dtype=np.uint8)
    lm = LabelMask(labels=labels, provenance=prov)
    path = tmp_path / "mask.alrt"
    alio.write_label_mask(path, lm)
    back = alio.read_label_mask(path)
    assert np.array_equal(back.labels, labels)
    assert np.array_equal(back.provenance, prov)


def test_tiny_mask_roundtrip(tmp_path):
    lm = LabelMask.from_labels(np.array([[3]], dtype=np.uint8))
    alio.write_label_mask(tmp_path / "t.alrt", lm)
    back = alio.read_label_mask(tmp_path / "t.alrt")
    assert back.labels[0, 0] == 3


def test_raster_roundtrip(tmp_path):
    img = RasterImage(data=np.arange(12, dtype=np.uint8).reshape(2, 2, 3))
    alio.write_raster(tmp_path / "img.alrt", img)
    assert np.array_equal(alio.read_raster(tmp_path / "img.alrt").data, img.data)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.alrt"
    path.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(alio.BadMagicError, match="bad magic"):
        alio.read_raster(path)


def test_unknown_dtype(tmp_path):
    path = tmp_path / "bad.alrt"
    path.write_bytes(b"ALRT" + bytes([1, 9, 2, 1, 0, 0, 0, 1, 0, 0, 0]) + b"x")
    with pytest.raises(alio.UnknownDtypeError):
        alio.read_raster(path)


def test_truncated_payload(tmp_path):
    good = tmp_path / "good.alrt"
    alio.write_raster(good, RasterImage(data=np.zeros((4, 4), dtype=np.uint8)))
    bad = tmp_path / "trunc.alrt"
    bad.write_bytes(good.read_bytes()[:-3])
    with pytest.raises(alio.TruncatedFileError):
        alio.read_raster(bad)


def test_truncated_header(tmp_path):
    path = tmp_path / "short.alrt"
    path.write_bytes(b"ALRT\x01")
    with pytest.raises(alio.TruncatedFileError):
        alio.read_raster(path)


def test_dim_overflow(tmp_path):
    import struct

    path = tmp_path / "huge.alrt"
    path.write_bytes(b"ALRT" + bytes([1, 0, 2]) + struct.pack("<II", 2**31 - 1, 2**31 - 1))
    with pytest.raises(alio.DimOverflowError):
        alio.read_raster(path)


def test_wrong_tensor_kind_rejected(tmp_path):
    alio.write_raster(tmp_path / "img.alrt", RasterImage(data=np.zeros((4, 4), dtype=np.uint8)))
    with pytest.raises(alio.AlrtError):
        alio.read_probability_map(tmp_path / "img.alrt")


def test_png_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    img = RasterImage(data=rng.integers(0, 256, size=(5, 7, 3)).astype(np.uint8))
    alio.write_png(tmp_path / "x.png", img)
    back = alio.read_png(tmp_path / "x.png")
    assert np.array_equal(back.data, img.data)


def test_png_grayscale(tmp_path):
    img = RasterImage(data=np.arange(16, dtype=np.uint8).reshape(4, 4))
    alio.write_png(tmp_path / "g.png", img)
    back = alio.read_png(tmp_path / "g.png")
    assert back.channels == 1
    assert np.array_equal(back.data, img.data)
