"""Binary tensor serialization plus the validated map types built on it.

File layout (all integers little-endian):

    bytes 0..3   magic ``PXT1``
    byte  4      dtype code: 1 = float32, 2 = uint8, 3 = uint32
    byte  5      number of dimensions, 1..4
    bytes 6..7   reserved, must be zero
    next         ndim unsigned 64-bit dims, each > 0
    rest         row-major element payload, exactly prod(dims) elements

Writing is deterministic: the same array always produces the same bytes,
and a read followed by a write reproduces the input file bit for bit.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

MAGIC = b"PXT1"

_HEADER = struct.Struct("<4sBBH")

_DTYPE_FOR_CODE = {
    1: np.dtype("<f4"),
    2: np.dtype("u1"),
    3: np.dtype("<u4"),
}
_CODE_FOR_DTYPE = {
    np.dtype(np.float32): 1,
    np.dtype(np.uint8): 2,
    np.dtype(np.uint32): 3,
}


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    """Encode an array. Raises ValidationError if the array is not a
    supported tensor (dtype in {float32, uint8, uint32}, rank 1..4,
    every dim positive)."""
    arr = np.asarray(arr)
    code = _CODE_FOR_DTYPE.get(arr.dtype.newbyteorder("="))
    if code is None:
        raise ValidationError(
            f"unsupported dtype {arr.dtype}; expected float32, uint8 or uint32"
        )
    if not 1 <= arr.ndim <= 4:
        raise ValidationError(f"rank {arr.ndim} outside 1..4")
    if any(d <= 0 for d in arr.shape):
        raise ValidationError(f"zero-sized dimension in shape {arr.shape}")
    header = _HEADER.pack(MAGIC, code, arr.ndim, 0)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=_DTYPE_FOR_CODE[code]).tobytes()
    return header + dims + payload


def tensor_from_bytes(data: bytes) -> np.ndarray:
    """Decode an array, rejecting malformed input with FormatError."""
    if len(data) < _HEADER.size:
        raise FormatError(f"header truncated: {len(data)} bytes")
    magic, code, ndim, reserved = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    dtype = _DTYPE_FOR_CODE.get(code)
    if dtype is None:
        raise FormatError(f"unknown dtype code {code}")
    if not 1 <= ndim <= 4:
        raise FormatError(f"rank {ndim} outside 1..4")
    if reserved != 0:
        raise FormatError(f"reserved header bytes nonzero ({reserved})")
    dims_end = _HEADER.size + 8 * ndim
    if len(data) < dims_end:
        raise FormatError("dims truncated")
    dims = struct.unpack_from(f"<{ndim}Q", data, _HEADER.size)
    if any(d == 0 for d in dims):
        raise FormatError(f"zero dim in {dims}")
    expected = math.prod(dims) * dtype.itemsize
    payload = len(data) - dims_end
    if payload < expected:
        raise FormatError(f"payload truncated: {payload} bytes, need {expected}")
    if payload > expected:
        raise FormatError(f"{payload - expected} trailing bytes after payload")
    arr = np.frombuffer(data, dtype=dtype, count=math.prod(dims), offset=dims_end)
    return arr.reshape(dims).copy()


def write_tensor(arr: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(tensor_to_bytes(arr))


def read_tensor(path: str | Path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


class ProbMap:
    """Per-pixel probabilities, shape (height, width, k+1) float32.

    Channels 0..k-1 are independent sigmoid probabilities for the k
    predefined classes; the last channel is the class-agnostic object
    probability. Every value must be finite and inside [0, 1]; the check
    runs once here so downstream kernels can skip it. Treat the stored
    array as immutable.
    """

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        arr = np.asarray(values)
        if arr.ndim != 3:
            raise ValidationError(f"expected (H, W, C) array, got rank {arr.ndim}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"empty spatial dims in shape {arr.shape}")
        if arr.shape[2] < 2:
            raise ValidationError(
                "need at least one predefined channel plus the object channel"
            )
        if arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        if not np.isfinite(arr).all():
            raise ValidationError("probabilities must be finite")
        if float(arr.min()) < 0.0 or float(arr.max()) > 1.0:
            raise ValidationError("probabilities must lie in [0, 1]")
        self.values = arr

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def k_predefined(self) -> int:
        return self.values.shape[2] - 1

    @property
    def predefined(self) -> np.ndarray:
        return self.values[:, :, :-1]

    @property
    def objectness(self) -> np.ndarray:
        return self.values[:, :, -1]

    def save(self, path: str | Path) -> None:
        write_tensor(self.values, path)

    @classmethod
    def load(cls, path: str | Path) -> "ProbMap":
        return cls(read_tensor(path))


class LogitMap:
    """Per-pixel raw scores, shape (height, width, c) float32, finite.

    Layout matches ProbMap when c = k+1; a plain k-channel map (no object
    channel) is also legal for methods that only need class logits.
    """

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        arr = np.asarray(values)
        if arr.ndim != 3:
            raise ValidationError(f"expected (H, W, C) array, got rank {arr.ndim}")
        if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValidationError(f"empty dimension in shape {arr.shape}")
        if arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        if not np.isfinite(arr).all():
            raise ValidationError("logits must be finite")
        self.values = arr

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    def save(self, path: str | Path) -> None:
        write_tensor(self.values, path)

    @classmethod
    def load(cls, path: str | Path) -> "LogitMap":
        return cls(read_tensor(path))
