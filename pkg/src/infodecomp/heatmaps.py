"""Heatmap post-processing and file formats.

Maps move from latent resolution to image resolution by corner-aligned
bilinear interpolation, are masked at mean + 1.5 * population-sd (a band
that discards roughly the bottom 87% of a Gaussian-shaped map), and are
exported losslessly as PFM (little-endian float32, bottom-up rows, scale
-1.0) alongside an 8-bit PGM preview and a JSON sidecar. Dataset-level
scores are min-max normalized; a constant input normalizes to all zeros.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, ShapeMismatchError

SIGNED = "signed"
CLAMPED = "clamped"


@dataclass(frozen=True)
class Heatmap:
    """Single-channel map with provenance metadata."""

    values: np.ndarray  # (H, W) float64
    term: str = "mi"  # r / u1 / u2 / s / mi / cmi / ...
    prompt: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise DomainError(f"heatmap values must be a non-empty 2-D grid, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("heatmap contains non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _values(m) -> np.ndarray:
    return m.values if isinstance(m, Heatmap) else np.asarray(m, dtype=np.float64)


def bilinear_upsample(map_: Heatmap, target_h: int, target_w: int) -> Heatmap:
    """Corner-aligned bilinear resample to (target_h, target_w)."""
    src = _values(map_)
    h, w = src.shape
    if target_h < 1 or target_w < 1:
        raise DomainError("target dimensions must be positive")
    if target_h < h or target_w < w:
        raise DomainError("bilinear_upsample only enlarges; target smaller than source")

    def coords(n_src: int, n_tgt: int) -> np.ndarray:
        if n_tgt == 1:
            return np.zeros(1)
        return np.arange(n_tgt) * (n_src - 1) / (n_tgt - 1)

    ys = coords(h, target_h)
    xs = coords(w, target_w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    out = (
        src[np.ix_(y0, x0)] * (1 - wy) * (1 - wx)
        + src[np.ix_(y0, x1)] * (1 - wy) * wx
        + src[np.ix_(y1, x0)] * wy * (1 - wx)
        + src[np.ix_(y1, x1)] * wy * wx
    )
    meta = dict(map_.extra) if isinstance(map_, Heatmap) else {}
    term = map_.term if isinstance(map_, Heatmap) else "mi"
    prompt = map_.prompt if isinstance(map_, Heatmap) else ""
    return Heatmap(values=out, term=term, prompt=prompt, extra=meta)


def threshold_mask(map_, k: float = 1.5) -> np.ndarray:
    """Binary mask of cells strictly above mean + k * population-sd."""
    v = _values(map_)
    mu = v.mean()
    sigma = v.std()  # population sd, ddof=0
    return v > mu + k * sigma


def intersection_baseline(m1, m2, k: float = 1.5) -> Heatmap:
    """Mean of the two maps restricted to their joint above-threshold region."""
    v1 = _values(m1)
    v2 = _values(m2)
    if v1.shape != v2.shape:
        raise ShapeMismatchError("m2", v1.shape, v2.shape)
    im = (threshold_mask(v1, k) & threshold_mask(v2, k)).astype(np.float64)
    f = (v1 * im + v2 * im) / 2.0
    return Heatmap(values=f, term="intersection", prompt=getattr(m1, "prompt", ""))


def normalize_dataset(values) -> np.ndarray:
    """Min-max normalize a batch of scalars to [0, 1]; constant input -> zeros."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise DomainError("normalize_dataset requires a non-empty list")
    lo = arr.min()
    hi = arr.max()
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


# ------------------------------------------------------------------ rendering


def render_grayscale(map_, mode: str = SIGNED) -> np.ndarray:
    """8-bit preview. clamped: negatives zeroed, [0, max] -> [0, 255];
    signed: [min, max] -> [0, 255]. Constant maps render as zeros."""
    if mode not in (SIGNED, CLAMPED):
        raise DomainError(f"mode must be {SIGNED!r} or {CLAMPED!r}, got {mode!r}")
    v = _values(map_).copy()
    if mode == CLAMPED:
        v[v < 0] = 0.0
    lo = v.min()
    hi = v.max()
    if mode == CLAMPED:
        lo = 0.0
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.uint8)
    scaled = (v - lo) / (hi - lo) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


# ------------------------------------------------------------------- file IO


def pfm_bytes(values: np.ndarray) -> bytes:
    """Grayscale PFM: little-endian float32, rows stored bottom-up."""
    v = np.asarray(values, dtype="<f4")
    if v.ndim != 2:
        raise DomainError("PFM writer takes a 2-D grid")
    h, w = v.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    return header + v[::-1].tobytes()


def parse_pfm(data: bytes) -> np.ndarray:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        match = re.match(rb"\s*(\S+)", data[pos:])
        if not match:
            raise DomainError("truncated PFM header")
        tokens.append(match.group(1))
        pos += match.end()
    pos += 1  # single whitespace after the scale line
    magic, w_s, h_s, scale_s = tokens
    if magic != b"Pf":
        raise DomainError(f"not a grayscale PFM (magic {magic!r})")
    w, h = int(w_s), int(h_s)
    scale = float(scale_s)
    dtype = "<f4" if scale < 0 else ">f4"
    body = data[pos : pos + 4 * w * h]
    if len(body) != 4 * w * h:
        raise DomainError("truncated PFM body")
    arr = np.frombuffer(body, dtype=dtype).reshape(h, w)
    return np.ascontiguousarray(arr[::-1])


def write_pfm(path: str | Path, values: np.ndarray) -> None:
    Path(path).write_bytes(pfm_bytes(values))


def read_pfm(path: str | Path) -> np.ndarray:
    return parse_pfm(Path(path).read_bytes())


def pgm_bytes(gray: np.ndarray) -> bytes:
    g = np.asarray(gray, dtype=np.uint8)
    if g.ndim != 2:
        raise DomainError("PGM writer takes a 2-D grid")
    h, w = g.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + g.tobytes()


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    Path(path).write_bytes(pgm_bytes(gray))


def render(map_: Heatmap, mode: str = SIGNED) -> tuple[np.ndarray, bytes]:
    """(8-bit grayscale grid, lossless PFM bytes) for one heatmap."""
    return render_grayscale(map_, mode), pfm_bytes(_values(map_))


def export_heatmap(map_: Heatmap, base_path: str | Path, mode: str = SIGNED) -> dict:
    """Write <base>.pfm, <base>.pgm and <base>.json; returns the sidecar."""
    base = Path(base_path)
    gray, pfm = render(map_, mode)
    base.parent.mkdir(parents=True, exist_ok=True)
    base.with_suffix(".pfm").write_bytes(pfm)
    base.with_suffix(".pgm").write_bytes(pgm_bytes(gray))
    sidecar = {
        "term": map_.term,
        "prompt": map_.prompt,
        "mode": mode,
        "shape": list(map_.values.shape),
        "min": float(map_.values.min()),
        "max": float(map_.values.max()),
        **map_.extra,
    }
    base.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
    return sidecar
