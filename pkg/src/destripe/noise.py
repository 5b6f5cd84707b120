"""Column-wise fixed-pattern stripe noise.

A stripe field adds one scalar offset per image column. Offsets are drawn
N(0, sigma^2); per field, sigma is either one draw from U(0, beta)
("sampled" mode) or exactly beta ("fixed" mode). Pooled over many sampled
fields the offsets have second moment beta^2/3, versus beta^2 in fixed mode.

All randomness comes from numpy's default PCG64 generator. Field ``k`` of a
run seeded ``s`` uses the first 64-bit word of ``SeedSequence([s, k])``, so
corruption is reproducible and order-independent across a dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import check_image

SAMPLED = "sampled"
FIXED = "fixed"
MODES = (SAMPLED, FIXED)


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"noise mode must be one of {MODES}, got {mode!r}")
    return mode


def field_seed(run_seed: int, index: int) -> int:
    """Derive the stripe-field seed for item ``index`` of a run."""
    return int(np.random.SeedSequence([run_seed, index]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class StripeField:
    """Per-column additive offsets plus the sigma/beta that generated them."""

    offsets: np.ndarray
    sigma: float
    beta: float
    mode: str
    seed: int

    @property
    def m(self) -> int:
        return self.offsets.shape[0]


def sample_stripe_field(m: int, beta: float, mode: str, seed: int) -> StripeField:
    """Draw one stripe field for an m-column image.

    Sampled mode draws sigma ~ U(0, beta) once, then m offsets N(0, sigma^2);
    fixed mode uses sigma = beta. Deterministic given ``seed``.
    """
    check_mode(mode)
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    if m < 1:
        raise ValueError(f"need at least one column, got m={m}")
    rng = np.random.default_rng(seed)
    sigma = float(rng.uniform(0.0, beta)) if mode == SAMPLED else float(beta)
    offsets = rng.normal(0.0, sigma, size=m) if sigma > 0 else np.zeros(m)
    return StripeField(offsets=offsets, sigma=sigma, beta=float(beta), mode=mode, seed=seed)


def apply_stripes(img: np.ndarray, field: StripeField) -> np.ndarray:
    """Add the field's offset to every pixel of its column; clamp to [0, 1].

    The stored field keeps the unclamped offsets; only the output saturates,
    mimicking a sensor's limited range.
    """
    arr = check_image(img)
    if arr.shape[1] != field.m:
        raise ValueError(f"field has {field.m} columns, image has {arr.shape[1]}")
    return np.clip(arr + field.offsets[np.newaxis, :], 0.0, 1.0)


def corrupt_dataset(
    images: list[np.ndarray], beta: float, mode: str, seed: int
) -> list[tuple[np.ndarray, np.ndarray, StripeField]]:
    """Corrupt each image with an independently seeded stripe field.

    Returns (clean, noisy, field) triples; pairs are kept for supervised
    training and the field for audit.
    """
    check_mode(mode)
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    out = []
    for i, img in enumerate(images):
        arr = check_image(img)
        field = sample_stripe_field(arr.shape[1], beta, mode, field_seed(seed, i))
        out.append((arr, apply_stripes(arr, field), field))
    return out
