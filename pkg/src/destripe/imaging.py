"""Grayscale image I/O, patch extraction, and dataset splitting.

Supported on disk: PGM (plain ``P2`` and raw ``P5``, maxval up to 65535) and
8-bit grayscale PNG. Everything is normalized to float64 in [0, 1] on load;
:func:`save_image` always writes raw 8-bit PGM.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as _PilImage

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_WHITESPACE = b" \t\r\n\x0b\x0c"


class FormatError(ValueError):
    """File is not an image format this toolkit reads or writes."""


def check_image(img: np.ndarray, what: str = "image") -> np.ndarray:
    """Validate a 2-D grayscale array (at least 2x2, finite) and return it."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{what} must be 2-D, got shape {arr.shape}")
    n, m = arr.shape
    if n < 2 or m < 2:
        raise ValueError(f"{what} must be at least 2x2 pixels, got {n}x{m}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite pixels")
    return arr


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    """Next whitespace-delimited PNM header token, skipping '#' comments."""
    while pos < len(data):
        c = data[pos]
        if c in _WHITESPACE:
            pos += 1
        elif c == ord("#"):
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        else:
            break
    start = pos
    while pos < len(data) and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
        pos += 1
    if start == pos:
        raise FormatError("truncated PGM header")
    return data[start:pos], pos


def _int_token(data: bytes, pos: int, what: str) -> tuple[int, int]:
    tok, pos = _next_token(data, pos)
    try:
        return int(tok), pos
    except ValueError:
        raise FormatError(f"bad PGM {what}: {tok!r}") from None


def _load_pgm(data: bytes, path: Path) -> np.ndarray:
    magic, pos = _next_token(data, 0)
    width, pos = _int_token(data, pos, "width")
    height, pos = _int_token(data, pos, "height")
    maxval, pos = _int_token(data, pos, "maxval")
    if width == 0 or height == 0:
        raise FormatError(f"zero-sized image in {path}")
    if not 1 <= maxval <= 65535:
        raise FormatError(f"PGM maxval {maxval} outside [1, 65535] in {path}")

    if magic == b"P5":
        if pos >= len(data) or data[pos] not in _WHITESPACE:
            raise FormatError(f"missing raster separator in {path}")
        raster = data[pos + 1 :]
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = width * height * dtype.itemsize
        if len(raster) < need:
            raise FormatError(f"truncated PGM raster in {path}")
        values = np.frombuffer(raster[:need], dtype=dtype).astype(np.float64)
    else:  # P2: plain text samples
        values = np.empty(width * height, dtype=np.float64)
        for i in range(width * height):
            v, pos = _int_token(data, pos, "sample")
            values[i] = v
    if values.max(initial=0.0) > maxval:
        raise FormatError(f"PGM sample exceeds maxval in {path}")
    return values.reshape(height, width) / float(maxval)


def _load_png(data: bytes, path: Path) -> np.ndarray:
    try:
        pil = _PilImage.open(io.BytesIO(data))
        pil.load()
    except Exception as exc:
        raise FormatError(f"unreadable PNG {path}: {exc}") from exc
    if pil.mode != "L":
        raise FormatError(
            f"{path} has PNG mode {pil.mode!r}; only 8-bit grayscale (mode 'L') is accepted"
        )
    arr = np.asarray(pil, dtype=np.float64)
    if arr.size == 0:
        raise FormatError(f"zero-sized image in {path}")
    return arr / 255.0


def load_image(path: str | Path) -> np.ndarray:
    """Load a grayscale image as float64 in [0, 1] (scaled by the file's maxval)."""
    path = Path(path)
    data = path.read_bytes()
    if data.startswith(_PNG_MAGIC):
        img = _load_png(data, path)
    elif data[:1] == b"P":
        magic = data[:2]
        if magic not in (b"P2", b"P5"):
            raise FormatError(f"unsupported PNM format {magic.decode('ascii', 'replace')!r} in {path}")
        img = _load_pgm(data, path)
    else:
        raise FormatError(f"unsupported image format in {path}")
    return check_image(img, f"image {path}")


def save_image(img: np.ndarray, path: str | Path) -> None:
    """Write as raw 8-bit PGM; pixel v is stored as round-half-up of clamp(v)*255."""
    arr = check_image(img)
    bytes_ = np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    n, m = arr.shape
    header = f"P5\n{m} {n}\n255\n".encode("ascii")
    Path(path).write_bytes(header + bytes_.tobytes())


def extract_patches(
    img: np.ndarray, patch_h: int, patch_w: int, stride: int
) -> list[np.ndarray]:
    """Patches on the regular stride grid, anchored at the top-left corner.

    Yields (floor((n-h)/stride)+1) * (floor((m-w)/stride)+1) patches; trailing
    rows/columns that do not fit a full patch are dropped.
    """
    arr = check_image(img)
    n, m = arr.shape
    if patch_h < 1 or patch_w < 1 or stride < 1:
        raise ValueError("patch dimensions and stride must be positive")
    if patch_h > n or patch_w > m:
        raise ValueError(f"patch {patch_h}x{patch_w} larger than image {n}x{m}")
    patches = []
    for r in range(0, n - patch_h + 1, stride):
        for c in range(0, m - patch_w + 1, stride):
            patches.append(arr[r : r + patch_h, c : c + patch_w].copy())
    return patches


@dataclass(frozen=True)
class DatasetSplit:
    """Deterministic train/validation partition of a list of image references."""

    train: list
    validation: list
    fraction: float
    seed: int


def split_dataset(paths: list, fraction: float = 0.85, seed: int = 0) -> DatasetSplit:
    """Shuffle deterministically by seed; first ceil(fraction*N) go to train."""
    if not paths:
        raise ValueError("cannot split an empty dataset")
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"split fraction must be in (0, 1), got {fraction}")
    order = np.random.default_rng(seed).permutation(len(paths))
    n_train = math.ceil(fraction * len(paths))
    train = [paths[i] for i in order[:n_train]]
    validation = [paths[i] for i in order[n_train:]]
    return DatasetSplit(train=train, validation=validation, fraction=fraction, seed=seed)
