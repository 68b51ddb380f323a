"""Non-maximum suppression: thin probability maps to ~1-pixel ridges.

Orientation comes from the gradient of a Gaussian-smoothed copy of the
map.  A pixel survives iff its value is >= both bilinear samples taken one
pixel away along the gradient (edge normal) direction; everything else is
zeroed.  Kept values are never modified, so the result is dominated by the
input, and plateaus survive (the >= comparison keeps ties).
"""

from __future__ import annotations

import numpy as np


def _gaussian_kernel_1d(sigma: float = 1.0, radius: int = 2) -> np.ndarray:
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(edge_map: np.ndarray, sigma: float = 1.0, radius: int = 2) -> np.ndarray:
    """Separable 5x5 Gaussian blur with replicated borders."""
    k = _gaussian_kernel_1d(sigma, radius)
    p = np.pad(edge_map, ((radius, radius), (0, 0)), mode="edge")
    rows = sum(k[i] * p[i:i + edge_map.shape[0], :] for i in range(2 * radius + 1))
    p = np.pad(rows, ((0, 0), (radius, radius)), mode="edge")
    return sum(k[j] * p[:, j:j + edge_map.shape[1]] for j in range(2 * radius + 1))


def estimate_orientation(edge_map: np.ndarray) -> np.ndarray:
    """Per-pixel edge-normal angle, atan2(dy, dx) of the smoothed map."""
    m = np.asarray(edge_map, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"edge map must be 2-D, got shape {m.shape}")
    s = gaussian_smooth(m)
    p = np.pad(s, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return np.arctan2(gy, gx)


def _sample(edge_map, ys, xs):
    h, w = edge_map.shape
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy, fx = ys - y0, xs - x0
    return (edge_map[y0, x0] * (1 - fy) * (1 - fx) + edge_map[y0, x1] * (1 - fy) * fx
            + edge_map[y1, x0] * fy * (1 - fx) + edge_map[y1, x1] * fy * fx)


def nms_thin(edge_map: np.ndarray) -> np.ndarray:
    """Suppress pixels that are not local maxima along the edge normal."""
    m = np.asarray(edge_map, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"edge map must be 2-D, got shape {m.shape}")
    theta = estimate_orientation(m)
    dy, dx = np.sin(theta), np.cos(theta)
    yy, xx = np.mgrid[0:m.shape[0], 0:m.shape[1]].astype(np.float64)
    ahead = _sample(m, yy + dy, xx + dx)
    behind = _sample(m, yy - dy, xx - dx)
    keep = (m >= ahead) & (m >= behind)
    return np.where(keep, m, 0.0)
