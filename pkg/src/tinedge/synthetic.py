"""Synthetic shape fixtures: anti-aliased polygons and circles with exact
boundary ground truth.

Each image composites a few non-overlapping bright shapes over a shaded
background, with mild deterministic pixel noise.  Ground truth marks the
pixels the ideal outline crosses (partial-coverage pixels) as edges (255),
surrounds them with a one-pixel ignore ring (32), and labels the rest
non-edge (0).  Shape contrasts are mixed so a fixed gradient detector
struggles on the weak ones while a trained model does not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .loss import GroundTruth

SUPERSAMPLE = 8
EDGE_VALUE = 255
IGNORE_VALUE = 32


@dataclass(frozen=True)
class Circle:
    cy: float
    cx: float
    radius: float

    def contains(self, ys, xs):
        return (ys - self.cy) ** 2 + (xs - self.cx) ** 2 <= self.radius ** 2


@dataclass(frozen=True)
class Polygon:
    """Regular n-gon given by center, circumradius and rotation."""
    cy: float
    cx: float
    radius: float
    sides: int
    rotation: float = 0.0

    def contains(self, ys, xs):
        inside = np.ones_like(ys, dtype=bool)
        for k in range(self.sides):
            a0 = self.rotation + 2 * math.pi * k / self.sides
            a1 = self.rotation + 2 * math.pi * (k + 1) / self.sides
            y0, x0 = self.cy + self.radius * math.sin(a0), self.cx + self.radius * math.cos(a0)
            y1, x1 = self.cy + self.radius * math.sin(a1), self.cx + self.radius * math.cos(a1)
            # interior lies to the algebraic left of every directed edge
            cross = (x1 - x0) * (ys - y0) - (y1 - y0) * (xs - x0)
            inside &= cross >= 0
        return inside


def coverage(shape, size: int, supersample: int = SUPERSAMPLE) -> np.ndarray:
    """Fraction of each pixel covered by the shape (pixel centers at integers)."""
    ss = supersample
    sub = (np.arange(ss) + 0.5) / ss - 0.5
    coords = np.arange(size)[:, None] + sub[None, :]   # (size, ss)
    ys = np.broadcast_to(coords.reshape(size, ss, 1, 1), (size, ss, size, ss))
    xs = np.broadcast_to(coords.reshape(1, 1, size, ss), (size, ss, size, ss))
    hit = shape.contains(ys, xs)
    return hit.reshape(size, ss, size, ss).mean(axis=(1, 3))


def boundary_mask(cov: np.ndarray, lo: float = 0.01, hi: float = 0.99) -> np.ndarray:
    """Pixels the ideal outline crosses: partial coverage marks the boundary."""
    return (cov > lo) & (cov < hi)


def dilate8(mask: np.ndarray) -> np.ndarray:
    p = np.pad(mask, 1)
    out = np.zeros_like(mask)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            out |= p[1 + dy:1 + dy + mask.shape[0], 1 + dx:1 + dx + mask.shape[1]]
    return out


def ground_truth_from_edges(edges: np.ndarray, ignore_ring: bool = False) -> GroundTruth:
    """Edge pixels 255, remainder 0; optionally a one-pixel ignore ring of 32.

    The shipped fixtures skip the ring: leaving boundary neighbors in the
    negative class forces a trained model to localize its crest to the
    exact boundary pixels, which is what the NMS + matching evaluation
    rewards.
    """
    values = np.zeros(edges.shape, dtype=np.int64)
    if ignore_ring:
        ring = dilate8(edges) & ~edges
        values[ring] = IGNORE_VALUE
    values[edges] = EDGE_VALUE
    return GroundTruth(values)


def _shaded_background(size, rng):
    base = rng.uniform(0.2, 0.35)
    tilt_y, tilt_x = rng.uniform(-0.08, 0.08, size=2)
    ys, xs = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    phase = rng.uniform(0, 2 * math.pi)
    ripple = 0.02 * np.sin(2 * math.pi * 1.5 * xs + phase) * np.cos(2 * math.pi * 1.2 * ys)
    return base + tilt_y * ys + tilt_x * xs + ripple


def _random_shape(rng, size, placed):
    # keep outlines clear of the border vignette; shrink shapes on small canvases
    margin = 12 if size >= 72 else max(4, size // 8)
    radius_hi = min(17.0, (size - 2 * margin - 2) / 2.0)
    if radius_hi < 4.0:
        return None
    radius_lo = min(9.0, 0.75 * radius_hi)
    for _ in range(200):
        radius = rng.uniform(radius_lo, radius_hi)
        cy = rng.uniform(radius + margin, size - radius - margin - 1)
        cx = rng.uniform(radius + margin, size - radius - margin - 1)
        if all(math.hypot(cy - oy, cx - ox) > radius + orad + 4 for oy, ox, orad in placed):
            break
    else:
        return None
    kind = rng.integers(0, 4)
    if kind == 0:
        return Circle(cy, cx, radius)
    sides = int(rng.integers(3, 7))
    rotation = rng.uniform(0, 2 * math.pi)
    return Polygon(cy, cx, radius, sides, rotation)


def generate_sample(seed: int, size: int = 96, noise_sigma: float = 0.02,
                    min_contrast: float = 0.12):
    """One (image, ground truth) pair; image is (3, size, size) in [0, 1].

    Shape contrasts are drawn from [min_contrast, 0.6] with one strong
    shape guaranteed; raising ``min_contrast`` keeps every edge separable
    from a heavier noise floor.
    """
    rng = np.random.default_rng(seed)
    bg = _shaded_background(size, rng)
    image = np.repeat(bg[None], 3, axis=0)
    image *= np.array([1.0, 0.97, 1.03])[:, None, None]

    edges = np.zeros((size, size), dtype=bool)
    placed = []
    n_shapes = int(rng.integers(2, 4))
    # one strong shape, the rest spanning down to min_contrast
    contrasts = [rng.uniform(0.45, 0.6)]
    contrasts += [rng.uniform(min_contrast, min_contrast + 0.18) for _ in range(n_shapes - 1)]
    for contrast in contrasts:
        shape = _random_shape(rng, size, placed)
        if shape is None:
            continue
        placed.append((shape.cy, shape.cx, shape.radius))
        cov = coverage(shape, size)
        edges |= boundary_mask(cov)
        channel_gain = rng.uniform(0.7, 1.0, size=3)
        for c in range(3):
            image[c] += contrast * channel_gain[c] * cov

    if noise_sigma > 0:
        image += rng.normal(0.0, noise_sigma, size=image.shape)
    np.clip(image, 0.0, 1.0, out=image)
    return image, ground_truth_from_edges(edges, ignore_ring=True)


# images alternate between nearly-clean and noisy regimes; faint shapes
# appear in both, so a bare 3x3 gradient detector cannot separate the
# noisy images' weak edges at any threshold, while a trained model with a
# wide receptive field can average the noise out along the boundary
IMAGE_REGIMES = ((0.02, 0.12), (0.07, 0.12))


def generate_dataset(count: int = 8, seed: int = 0, size: int = 96,
                     regimes=IMAGE_REGIMES):
    """Deterministic list of (image, ground truth) fixtures."""
    out = []
    for i in range(count):
        noise_sigma, min_contrast = regimes[i % len(regimes)]
        out.append(generate_sample(seed * 100003 + i, size,
                                   noise_sigma=noise_sigma,
                                   min_contrast=min_contrast))
    return out


def make_square_fixture(size: int = 64, lo: float = 0.1, hi: float = 0.9,
                        inset: float = 15.8):
    """Clean axis-aligned bright square: the classical detector's best case.

    The default inset leaves a 0.7 coverage fraction on the boundary ring,
    which keeps the gradient-magnitude crest (corners included) exactly on
    the ground-truth pixels.
    """
    rect = AxisRect(inset, inset, size - 1 - inset, size - 1 - inset)
    cov = rect.coverage(size)
    edges = boundary_mask(cov)
    image = np.full((3, size, size), lo)
    image += (hi - lo) * cov[None]
    return image, ground_truth_from_edges(edges)


@dataclass(frozen=True)
class AxisRect:
    """Axis-aligned rectangle with exact analytic pixel coverage."""
    y0: float
    x0: float
    y1: float
    x1: float

    def contains(self, ys, xs):
        return (ys >= self.y0) & (ys <= self.y1) & (xs >= self.x0) & (xs <= self.x1)

    def coverage(self, size: int) -> np.ndarray:
        idx = np.arange(size)
        span_y = np.clip(np.minimum(self.y1, idx + 0.5) - np.maximum(self.y0, idx - 0.5), 0.0, 1.0)
        span_x = np.clip(np.minimum(self.x1, idx + 0.5) - np.maximum(self.x0, idx - 0.5), 0.0, 1.0)
        return span_y[:, None] * span_x[None, :]
