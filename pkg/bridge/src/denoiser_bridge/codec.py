"""Wire encoding: float payloads travel as base64 little-endian float32."""

from __future__ import annotations

import base64

import numpy as np


class CodecError(ValueError):
    pass


def encode_floats(values: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(values, dtype="<f4").tobytes()).decode("ascii")


def decode_floats(payload: str, shape: tuple[int, ...]) -> np.ndarray:
    try:
        raw = base64.b64decode(payload.encode("ascii"), validate=True)
    except Exception as exc:
        raise CodecError(f"payload is not valid base64: {exc}") from exc
    if len(raw) % 4:
        raise CodecError(f"payload length {len(raw)} is not a whole number of float32s")
    arr = np.frombuffer(raw, dtype="<f4")
    expected = int(np.prod(shape))
    if arr.size != expected:
        raise CodecError(f"payload holds {arr.size} floats, shape {tuple(shape)} needs {expected}")
    return arr.reshape(shape)
