"""Depth-map currency and on-disk formats.

A DepthMap is a per-pixel depth grid in millimeters plus a validity mask;
invalid pixels mark missing sensor measurements. Serialized form is binary
P5 PGM with maxval 65535, big-endian 16-bit samples, pixel value = depth in
integer millimeters, 0 = invalid. Object masks are P5 PGM maxval 255 with
values 0/255.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError

DEPTH_MAXVAL = 65535
MASK_MAXVAL = 255
MIN_VALID_DEPTH_MM = 1.0


@dataclass
class DepthMap:
    depth: np.ndarray  # float64 (H, W), millimeters
    valid: np.ndarray  # bool (H, W)

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.depth.ndim != 2 or self.depth.shape != self.valid.shape:
            raise DataError(
                f"depth shape {self.depth.shape} and valid shape {self.valid.shape} disagree"
            )
        if np.any(self.depth[self.valid] <= 0):
            raise DataError("valid pixels must carry positive depth")

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def shape(self):
        return self.depth.shape

    def copy(self) -> "DepthMap":
        return DepthMap(self.depth.copy(), self.valid.copy())

    @classmethod
    def full(cls, shape, value_mm: float) -> "DepthMap":
        return cls(np.full(shape, value_mm, dtype=np.float64), np.ones(shape, dtype=bool))


def _read_pgm_raw(path):
    blob = Path(path).read_bytes()
    # header tokens: magic, width, height, maxval; '#' comments allowed
    tokens = []
    i = 0
    while len(tokens) < 4:
        if i >= len(blob):
            raise FormatError(f"{path}: truncated PGM header")
        ch = blob[i : i + 1]
        if ch == b"#":
            while i < len(blob) and blob[i : i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(blob) and not blob[j : j + 1].isspace():
                j += 1
            tokens.append(blob[i:j])
            i = j
    i += 1  # single whitespace byte after maxval
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic != b"P5":
        raise FormatError(f"{path}: expected binary PGM magic P5, got {magic!r}")
    return w, h, maxval, blob[i:]


def read_depth_pgm(path) -> DepthMap:
    """Read a 16-bit depth PGM (value = mm, 0 = invalid)."""
    w, h, maxval, data = _read_pgm_raw(path)
    if maxval != DEPTH_MAXVAL:
        raise FormatError(f"{path}: depth PGM requires maxval {DEPTH_MAXVAL}, got {maxval}")
    if len(data) != w * h * 2:
        raise FormatError(f"{path}: expected {w * h * 2} data bytes, got {len(data)}")
    raw = np.frombuffer(data, dtype=">u2").reshape(h, w)
    depth = raw.astype(np.float64)
    return DepthMap(depth=depth, valid=raw > 0)


def _pgm_header(width: int, height: int, maxval: int, comment: str | None) -> bytes:
    lines = ["P5"]
    if comment:
        lines += [f"# {line}" for line in comment.splitlines()]
    lines += [f"{width} {height}", str(maxval)]
    return ("\n".join(lines) + "\n").encode("ascii")


def write_depth_pgm(dmap: DepthMap, path, comment: str | None = None) -> None:
    """Write a DepthMap; depths round to integer mm, invalid pixels become 0."""
    vals = np.rint(dmap.depth).clip(0, DEPTH_MAXVAL).astype(">u2")
    vals[~dmap.valid] = 0
    header = _pgm_header(dmap.width, dmap.height, DEPTH_MAXVAL, comment)
    Path(path).write_bytes(header + vals.tobytes())


def read_mask_pgm(path) -> np.ndarray:
    """Read a 0/255 mask PGM into a boolean array."""
    w, h, maxval, data = _read_pgm_raw(path)
    if maxval != MASK_MAXVAL:
        raise FormatError(f"{path}: mask PGM requires maxval {MASK_MAXVAL}, got {maxval}")
    if len(data) != w * h:
        raise FormatError(f"{path}: expected {w * h} data bytes, got {len(data)}")
    return (np.frombuffer(data, dtype=np.uint8).reshape(h, w) > 0)


def write_mask_pgm(mask: np.ndarray, path, comment: str | None = None) -> None:
    mask = np.asarray(mask, dtype=bool)
    header = _pgm_header(mask.shape[1], mask.shape[0], MASK_MAXVAL, comment)
    Path(path).write_bytes(header + (mask.astype(np.uint8) * 255).tobytes())


def add_gaussian_noise(dmap: DepthMap, sigma: float, seed: int) -> DepthMap:
    """Perturb valid pixels with i.i.d. N(0, sigma^2) mm; invalid pixels untouched.

    Deterministic per seed. Results clamp at 1 mm so valid depths stay positive.
    """
    if sigma < 0:
        raise ConfigError(f"noise sigma must be non-negative, got {sigma}")
    out = dmap.copy()
    if sigma == 0:
        return out
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=dmap.shape)
    noised = out.depth + noise
    out.depth = np.where(out.valid, np.maximum(noised, MIN_VALID_DEPTH_MM), out.depth)
    return out
