"""Bit-exact file IO: the ALRT tensor container and 8-bit PNG ingest/emit.

ALRT layout (little-endian): magic b"ALRT", version u8 = 1, dtype u8
(0 = uint8, 1 = float64), ndim u8 (2 or 3), one u32 per dim, then the
row-major payload. A label mask stores its provenance plane directly
after the label plane, so its payload is two H*W uint8 planes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .raster import LabelMask, ProbabilityMap, RasterImage

MAGIC = b"ALRT"
VERSION = 1
DTYPE_U8 = 0
DTYPE_F64 = 1
_DTYPES = {DTYPE_U8: np.dtype("<u1"), DTYPE_F64: np.dtype("<f8")}
_MAX_ELEMS = 1 << 31


class AlrtError(ValueError):
    """Malformed ALRT file."""


class BadMagicError(AlrtError):
    pass


class UnknownDtypeError(AlrtError):
    pass


class TruncatedFileError(AlrtError):
    pass


class DimOverflowError(AlrtError):
    pass


def _write_alrt(path, array: np.ndarray, extra_payload: bytes = b"") -> None:
    dtype_code = DTYPE_U8 if array.dtype == np.uint8 else DTYPE_F64
    array = np.ascontiguousarray(array, dtype=_DTYPES[dtype_code])
    head = MAGIC + struct.pack("<BBB", VERSION, dtype_code, array.ndim)
    head += struct.pack(f"<{array.ndim}I", *array.shape)
    Path(path).write_bytes(head + array.tobytes() + extra_payload)


def _read_header(buf: bytes):
    if len(buf) < 7:
        raise TruncatedFileError("file shorter than the fixed header")
    if buf[:4] != MAGIC:
        raise BadMagicError(f"bad magic {buf[:4]!r}")
    version, dtype_code, ndim = struct.unpack("<BBB", buf[4:7])
    if version != VERSION:
        raise AlrtError(f"unsupported version {version}")
    if dtype_code not in _DTYPES:
        raise UnknownDtypeError(f"unknown dtype code {dtype_code}")
    if ndim not in (2, 3):
        raise AlrtError(f"ndim must be 2 or 3, got {ndim}")
    if len(buf) < 7 + 4 * ndim:
        raise TruncatedFileError("file ends inside the dims block")
    dims = struct.unpack(f"<{ndim}I", buf[7 : 7 + 4 * ndim])
    if any(d == 0 for d in dims):
        raise AlrtError(f"zero dimension in {dims}")
    n = 1
    for d in dims:
        n *= d
    if n > _MAX_ELEMS:
        raise DimOverflowError(f"dims {dims} overflow the element budget")
    return _DTYPES[dtype_code], dims, buf[7 + 4 * ndim :]


def _read_alrt(path, expect_ndim=None, expect_dtype=None, extra_planes: int = 0):
    dtype, dims, payload = _read_header(Path(path).read_bytes())
    if expect_ndim is not None and len(dims) != expect_ndim:
        raise AlrtError(f"expected {expect_ndim}-d tensor, got {len(dims)}-d")
    if expect_dtype is not None and dtype != _DTYPES[expect_dtype]:
        raise AlrtError(f"expected dtype code {expect_dtype}")
    n = int(np.prod(dims))
    need = n * dtype.itemsize * (1 + extra_planes)
    if len(payload) < need:
        raise TruncatedFileError(f"payload holds {len(payload)} bytes, need {need}")
    if len(payload) > need:
        raise AlrtError("trailing bytes after payload")
    main = np.frombuffer(payload[: n * dtype.itemsize], dtype=dtype).reshape(dims)
    extras = [
        np.frombuffer(payload[(i + 1) * n * dtype.itemsize : (i + 2) * n * dtype.itemsize], dtype=dtype).reshape(dims)
        for i in range(extra_planes)
    ]
    return main, extras


def write_probability_map(path, pm: ProbabilityMap) -> None:
    _write_alrt(path, pm.data)


def read_probability_map(path) -> ProbabilityMap:
    data, _ = _read_alrt(path, expect_ndim=3, expect_dtype=DTYPE_F64)
    return ProbabilityMap(data=data.copy())


def write_label_mask(path, lm: LabelMask) -> None:
    _write_alrt(path, lm.labels, extra_payload=np.ascontiguousarray(lm.provenance).tobytes())


def read_label_mask(path) -> LabelMask:
    labels, (prov,) = _read_alrt(path, expect_ndim=2, expect_dtype=DTYPE_U8, extra_planes=1)
    return LabelMask(labels=labels.copy(), provenance=prov.copy())


def write_raster(path, img: RasterImage) -> None:
    _write_alrt(path, img.data)


def read_raster(path) -> RasterImage:
    data, _ = _read_alrt(path, expect_dtype=DTYPE_U8)
    return RasterImage(data=data.copy())


def write_array(path, array: np.ndarray) -> None:
    """Raw tensor write for model parameters and other plain arrays."""
    if array.dtype not in (np.uint8, np.float64):
        raise AlrtError(f"unsupported dtype {array.dtype}")
    _write_alrt(path, array)


def read_array(path) -> np.ndarray:
    data, _ = _read_alrt(path)
    return data.copy()


def read_png(path) -> RasterImage:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK") else "L")
        return RasterImage(data=np.asarray(im, dtype=np.uint8))


def write_png(path, img: RasterImage) -> None:
    Image.fromarray(img.data, mode="L" if img.channels == 1 else "RGB").save(path, format="PNG")


def png_bytes(img: RasterImage) -> bytes:
    import io as _io

    buf = _io.BytesIO()
    Image.fromarray(img.data, mode="L" if img.channels == 1 else "RGB").save(buf, format="PNG")
    return buf.getvalue()
