"""Frames, Gaussian pyramids, level selection, and flow preprocessing.

Frames are single-channel luminance images normalized to [0, 1]. They are
immutable after construction so they can be handed freely between
concurrent pipeline stages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imageops import decimate2, divergence, forward_gradient, smooth_gaussian5

# Largest frame dimension processed without downscaling. Picking the
# smallest pyramid level whose longest side fits this bound keeps SD at
# native resolution while halving 2K and quartering 4K input.
MAX_LEVEL_DIM = 1280

BT601_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True, eq=False)
class Frame:
    """Single-channel luminance image with values in [0, 1]."""

    width: int
    height: int
    index: int
    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.shape != (self.height, self.width):
            raise ValueError(
                f"frame data shape {data.shape} does not match "
                f"{self.height}x{self.width}")
        if not np.all(np.isfinite(data)):
            raise ValueError("frame contains non-finite values")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ValueError("frame values must lie in [0, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, data: np.ndarray, index: int = 0) -> "Frame":
        data = np.asarray(data, dtype=np.float64)
        return cls(width=data.shape[1], height=data.shape[0],
                   index=index, data=data)

    @classmethod
    def from_gray8(cls, data: np.ndarray, index: int = 0) -> "Frame":
        """Build a frame from 8-bit luminance values (divided by 255)."""
        return cls.from_array(np.asarray(data, dtype=np.float64) / 255.0,
                              index=index)


@dataclass(frozen=True, eq=False)
class Pyramid:
    """Gaussian pyramid; level 0 is the original frame, factor 2 per level."""

    levels: tuple[Frame, ...]

    def __len__(self) -> int:
        return len(self.levels)


def rgb_to_luma(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma from an (H, W, 3) array (any real scale)."""
    wr, wg, wb = BT601_WEIGHTS
    return wr * rgb[..., 0] + wg * rgb[..., 1] + wb * rgb[..., 2]


def build_pyramid(frame: Frame, num_levels: int) -> Pyramid:
    """Blur with a 5-tap binomial kernel and decimate by 2, num_levels times.

    Rejects pyramids whose coarsest level would fall below 2x2.
    """
    if num_levels < 1:
        raise ValueError("num_levels must be >= 1")
    w, h = frame.width, frame.height
    for lvl in range(1, num_levels):
        w //= 2
        h //= 2
        if w < 2 or h < 2:
            raise ValueError(
                f"pyramid level {lvl} would be {w}x{h}; at least 2x2 required")
    levels = [frame]
    data = frame.data
    for _ in range(1, num_levels):
        data = decimate2(smooth_gaussian5(data))
        levels.append(Frame(width=data.shape[1], height=data.shape[0],
                            index=frame.index, data=data))
    return Pyramid(tuple(levels))


def select_level(width: int, height: int) -> int:
    """Smallest pyramid level whose longest side is at most MAX_LEVEL_DIM."""
    if width < 2 or height < 2:
        raise ValueError("frame must be at least 2x2")
    level = 0
    longest = float(max(width, height))
    while longest / (1 << level) > MAX_LEVEL_DIM:
        level += 1
    return level


def rof_denoise(img: np.ndarray, weight: float, iterations: int,
                step: float = 0.25) -> np.ndarray:
    """Total-variation smoothing via dual projected gradient ascent.

    Solves min_u TV(u) + |u - img|^2 / (2 * weight); larger weight means
    stronger smoothing.
    """
    if weight <= 0:
        raise ValueError("weight must be positive")
    px = np.zeros_like(img)
    py = np.zeros_like(img)
    for _ in range(iterations):
        gx, gy = forward_gradient(divergence(px, py) - img / weight)
        norm = 1.0 + step * np.hypot(gx, gy)
        px = (px + step * gx) / norm
        py = (py + step * gy) / norm
    return img - weight * divergence(px, py)


def structure_texture(frame: Frame, smoothing_weight: float = 12.0,
                      blend: float = 0.05, iterations: int = 40) -> Frame:
    """Split off the smooth structure part and keep mostly texture.

    The structure is the TV-smoothed frame, the texture the residual; the
    output is texture + blend * structure, mapped from its attainable
    range [blend - 1, 1] back onto [0, 1]. blend = 1 with zero iterations
    reproduces the input exactly.
    """
    if not 0.0 <= blend <= 1.0:
        raise ValueError("blend must lie in [0, 1]")
    structure = rof_denoise(frame.data, smoothing_weight, iterations)
    texture = frame.data - structure
    out = texture + blend * structure
    out = (out + (1.0 - blend)) / (2.0 - blend)
    return Frame(width=frame.width, height=frame.height, index=frame.index,
                 data=np.clip(out, 0.0, 1.0))
