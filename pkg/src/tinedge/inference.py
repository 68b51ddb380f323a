"""Single- and multi-scale edge prediction."""

from __future__ import annotations

import warnings

import numpy as np

from .model import MIN_INPUT_SIZE, NetworkGraph, forward
from .tensor import Tensor, resize_bilinear

DEFAULT_SCALES = (0.5, 1.0, 1.5)


def _as_input(image) -> Tensor:
    if isinstance(image, Tensor):
        data = image.data
    else:
        data = np.asarray(image, dtype=np.float64)
    if data.ndim == 3:
        data = data[None]
    if data.ndim != 4 or data.shape[0] != 1 or data.shape[1] != 3:
        raise ValueError(f"expected a single (3, H, W) RGB image, got shape {data.shape}")
    return Tensor(data)


def predict(graph: NetworkGraph, image) -> np.ndarray:
    """Fused sigmoid edge map at the input resolution, as an H x W array."""
    x = _as_input(image)
    _, fused = forward(graph, x)
    return fused.data[0, 0].copy()


def _even_size(value: float) -> int:
    return max(2, int(round(value / 2.0)) * 2)


def predict_multiscale(graph: NetworkGraph, image,
                       scales=DEFAULT_SCALES) -> np.ndarray:
    """Average of per-scale predictions, each resized back to the input size.

    Scaled sizes are rounded to the nearest even integer (scale 1.0 keeps
    the image untouched).  Scales whose size falls under the minimum input
    size are skipped with a warning; if every scale is skipped that is an
    error.
    """
    x = _as_input(image)
    h, w = x.data.shape[2], x.data.shape[3]
    if any(s <= 0 for s in scales):
        raise ValueError("scales must be positive")
    maps = []
    for s in scales:
        if s == 1.0:
            maps.append(predict(graph, x))
            continue
        sh, sw = _even_size(s * h), _even_size(s * w)
        if sh < MIN_INPUT_SIZE or sw < MIN_INPUT_SIZE:
            warnings.warn(f"scale {s} gives {sh}x{sw}, below the {MIN_INPUT_SIZE} minimum; skipped")
            continue
        scaled = resize_bilinear(x, sh, sw)
        fused = predict(graph, scaled)
        back = resize_bilinear(Tensor(fused[None, None]), h, w)
        maps.append(back.data[0, 0].copy())
    if not maps:
        raise ValueError("every scale was skipped; nothing to average")
    acc = maps[0].copy()
    for m in maps[1:]:
        acc += m
    return acc / len(maps)
