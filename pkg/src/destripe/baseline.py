"""Non-learned reference destriper: column-mean equalization.

Each column mean is pulled toward the moving average of its neighbours'
means. Column-constant offsets vanish (their local mean is near zero), smooth
horizontal gradients survive, but genuine sharp vertical edges are attenuated;
that failure mode is what motivates the learned model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import check_image


@dataclass(frozen=True)
class BaselineConfig:
    half_width: int = 10
    method: str = "column-equalize"

    def validate(self) -> "BaselineConfig":
        if self.half_width < 1:
            raise ValueError(f"smoothing half-width must be >= 1, got {self.half_width}")
        return self


def column_equalize(img: np.ndarray, cfg: BaselineConfig = BaselineConfig()) -> np.ndarray:
    """Subtract (column mean - local moving average of column means); clamp."""
    cfg.validate()
    arr = check_image(img)
    m = arr.shape[1]
    window = 2 * cfg.half_width + 1
    if m < window:
        raise ValueError(f"image has {m} columns, narrower than the {window}-column window")
    means = arr.mean(axis=0)
    ones = np.ones(window)
    sums = np.convolve(means, ones, mode="same")
    counts = np.convolve(np.ones(m), ones, mode="same")  # edge-truncated window sizes
    smoothed = sums / counts
    return np.clip(arr - (means - smoothed)[np.newaxis, :], 0.0, 1.0)
