"""Seeded synthetic grayscale scenes for training, evaluation, and tests.

Scene kinds:

- ``smooth``: multi-scale bilinear-upsampled random fields; no sharp edges.
- ``blocks``: smooth background plus random rectangles; sharp vertical and
  horizontal edges (the case where column equalization smears structure).
- ``ramp``: horizontal/diagonal intensity ramps with mild texture.
- ``bars``: genuine vertical bars, the content most confusable with stripes.

``midgray`` scenes are smooth textures compressed around 0.5, used where
analytic PSNR oracles need clamping to stay negligible.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imaging import save_image

KINDS = ("smooth", "blocks", "ramp", "bars")


def _bilinear_upsample(grid: np.ndarray, n: int, m: int) -> np.ndarray:
    gh, gw = grid.shape
    rows = np.linspace(0.0, gh - 1.0, n)
    cols = np.linspace(0.0, gw - 1.0, m)
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, gh - 1)
    c1 = np.minimum(c0 + 1, gw - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    top = grid[np.ix_(r0, c0)] * (1 - fc) + grid[np.ix_(r0, c1)] * fc
    bot = grid[np.ix_(r1, c0)] * (1 - fc) + grid[np.ix_(r1, c1)] * fc
    return top * (1 - fr) + bot * fr


def _rescale(arr: np.ndarray, lo: float, hi: float) -> np.ndarray:
    amin, amax = arr.min(), arr.max()
    if amax - amin < 1e-12:
        return np.full_like(arr, (lo + hi) / 2.0)
    return lo + (arr - amin) * (hi - lo) / (amax - amin)


def smooth_scene(rng: np.random.Generator, n: int, m: int, lo=0.1, hi=0.9) -> np.ndarray:
    acc = np.zeros((n, m))
    for cell, weight in ((6, 1.0), (12, 0.5), (24, 0.25)):
        gh = max(2, n // cell)
        gw = max(2, m // cell)
        acc += weight * _bilinear_upsample(rng.standard_normal((gh, gw)), n, m)
    return _rescale(acc, lo, hi)


def blocks_scene(rng: np.random.Generator, n: int, m: int, lo=0.1, hi=0.9) -> np.ndarray:
    img = smooth_scene(rng, n, m, 0.3, 0.6)
    for _ in range(int(rng.integers(3, 7))):
        h = int(rng.integers(n // 6, max(n // 2, n // 6 + 1)))
        w = int(rng.integers(m // 6, max(m // 2, m // 6 + 1)))
        r = int(rng.integers(0, n - h + 1))
        c = int(rng.integers(0, m - w + 1))
        img[r : r + h, c : c + w] = rng.uniform(lo, hi)
    return np.clip(img, 0.0, 1.0)


def ramp_scene(rng: np.random.Generator, n: int, m: int, lo=0.1, hi=0.9) -> np.ndarray:
    direction = rng.uniform(-1.0, 1.0)
    base = np.linspace(0.0, 1.0, m)[None, :] + direction * np.linspace(0.0, 1.0, n)[:, None]
    texture = 0.15 * smooth_scene(rng, n, m, -1.0, 1.0)
    return _rescale(base + texture, lo, hi)


def bars_scene(rng: np.random.Generator, n: int, m: int, lo=0.1, hi=0.9) -> np.ndarray:
    img = np.full((n, m), float(rng.uniform(0.3, 0.6)))
    c = 0
    while c < m:
        width = int(rng.integers(2, max(m // 8, 3)))
        img[:, c : c + width] = rng.uniform(lo, hi)
        c += width
    img += 0.05 * smooth_scene(rng, n, m, -1.0, 1.0)
    return np.clip(img, 0.0, 1.0)


def midgray_scene(rng: np.random.Generator, n: int, m: int, amplitude: float = 0.1) -> np.ndarray:
    return smooth_scene(rng, n, m, 0.5 - amplitude, 0.5 + amplitude)


_MAKERS = {
    "smooth": smooth_scene,
    "blocks": blocks_scene,
    "ramp": ramp_scene,
    "bars": bars_scene,
}


def make_scene(kind: str, rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    if kind not in _MAKERS:
        raise ValueError(f"unknown scene kind {kind!r}; choose from {sorted(_MAKERS)}")
    return _MAKERS[kind](rng, n, m)


def generate_scenes(
    count: int, n: int, m: int, seed: int, kinds: tuple[str, ...] = KINDS
) -> list[np.ndarray]:
    """``count`` scenes cycling through ``kinds``, quantized to the 8-bit grid."""
    rng = np.random.default_rng(seed)
    scenes = []
    for i in range(count):
        img = make_scene(kinds[i % len(kinds)], rng, n, m)
        scenes.append(np.floor(img * 255.0 + 0.5) / 255.0)
    return scenes


def write_dataset(
    out_dir: str | Path,
    count: int,
    n: int,
    m: int,
    seed: int,
    kinds: tuple[str, ...] = KINDS,
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(generate_scenes(count, n, m, seed, kinds)):
        path = out_dir / f"scene_{i:04d}.pgm"
        save_image(img, path)
        paths.append(path)
    return paths
