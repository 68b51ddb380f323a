"""Directional gradient kernels and the classical Sobel baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


@dataclass(frozen=True)
class DirectionalKernel:
    """A 3x3 pure-difference operator tuned to one gradient direction."""
    angle: float          # radians in [0, 2*pi)
    weights: np.ndarray   # 3x3


def directional_bank(count: int = 16) -> list[DirectionalKernel]:
    """Steerable Sobel combinations at uniform angles.

    Kernel k has angle 2*pi*k/count and weights cos(a)*Sx + sin(a)*Sy, so
    the bank degenerates to plain Sobel at the axis angles and satisfies
    kernel(a + pi) == -kernel(a).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    bank = []
    for k in range(count):
        angle = 2.0 * np.pi * k / count
        c, s = _snap(np.cos(angle)), _snap(np.sin(angle))
        weights = c * SOBEL_X + s * SOBEL_Y
        bank.append(DirectionalKernel(angle=angle, weights=weights))
    return bank


def _snap(value: float, tol: float = 1e-12) -> float:
    """Clean up trig round-off so axis-angle kernels are exactly Sobel."""
    for target in (-1.0, 0.0, 1.0):
        if abs(value - target) < tol:
            return target
    return float(value)


def _conv3x3_replicate(image, kernel):
    # replicate-pad so the image border does not read as a step edge
    p = np.pad(image, 1, mode="edge")
    out = np.zeros_like(image, dtype=np.float64)
    for i in range(3):
        for j in range(3):
            out += kernel[i, j] * p[i:i + image.shape[0], j:j + image.shape[1]]
    return out


def sobel_detect(image: np.ndarray) -> np.ndarray:
    """Gradient-magnitude edge map, normalized to [0, 1] by the image maximum.

    ``image`` is a grayscale H x W array in [0, 1].  An all-constant image
    maps to all zeros.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] < 3 or image.shape[1] < 3:
        raise ValueError(f"sobel_detect needs a 2-D image of at least 3x3, got {image.shape}")
    gx = _conv3x3_replicate(image, SOBEL_X)
    gy = _conv3x3_replicate(image, SOBEL_Y)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak > 0:
        mag /= peak
    return mag
