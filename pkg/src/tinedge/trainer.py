"""SGD training loop, learning-rate schedule, and data augmentation.

Augmentation enumerates a deterministic grid of variants per sample:
scales resize first, then rotation (cropped to the largest axis-aligned
interior rectangle), then an optional horizontal flip.  Images are sampled
bilinearly, ground truth nearest-neighbor, with one geometric transform
shared by both.  Variants are rendered on the fly; only their descriptors
are enumerated up front.

The optimizer is plain SGD with momentum and decoupled weight decay:
g' = g + wd*w; v <- m*v - lr*g'; w <- w + v.  The learning rate divides by
``lr_drop_factor`` every ``lr_drop_every`` epochs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .loss import DegenerateLabelError, GroundTruth, LossConfig, class_weights, total_loss
from .model import NetworkGraph, forward
from .tensor import Tensor, backward


class NumericError(RuntimeError):
    """Raised when training produces a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-2
    weight_decay: float = 5e-4
    momentum: float = 0.9
    epochs: int = 120
    lr_drop_every: int = 10
    lr_drop_factor: float = 10.0
    batch_size: int = 1
    seed: int = 0
    checkpoint_every: int = 0   # epochs between snapshots, 0 = final only

    def __post_init__(self):
        if min(self.lr0, self.weight_decay, self.momentum) < 0:
            raise ValueError("rates must be non-negative")
        if self.lr_drop_every < 1 or self.lr_drop_factor < 1.0:
            raise ValueError("invalid learning-rate schedule (factor >= 1 keeps lr non-increasing)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


MIN_CROP = 16


@dataclass(frozen=True)
class AugmentPlan:
    """Deterministic enumeration of rotation/flip/scale variants."""
    rotations: int = 16
    flips: bool = True
    scales: tuple[float, ...] = (0.5, 1.0, 1.5)

    def __post_init__(self):
        if self.rotations < 1:
            raise ValueError("need at least one rotation angle")
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ValueError("scales must be positive")

    @classmethod
    def identity(cls) -> "AugmentPlan":
        return cls(rotations=1, flips=False, scales=(1.0,))

    def descriptors(self, height: int, width: int):
        """(scale, angle, flip) triples whose rotation crop stays >= 16x16."""
        out = []
        flip_opts = (False, True) if self.flips else (False,)
        for s in self.scales:
            sh, sw = _scaled_size(height, s), _scaled_size(width, s)
            for k in range(self.rotations):
                angle = 2.0 * math.pi * k / self.rotations
                ch, cw = _interior_crop(sh, sw, angle)
                if ch < MIN_CROP or cw < MIN_CROP:
                    continue
                for f in flip_opts:
                    out.append((s, angle, f))
        return out


def _scaled_size(size: int, scale: float) -> int:
    return max(1, int(round(size * scale)))


def _interior_crop(height: int, width: int, angle: float):
    """Largest axis-aligned rectangle inside a height x width rectangle
    rotated by ``angle``."""
    quarter = round(angle / (math.pi / 2.0))
    if abs(angle - quarter * math.pi / 2.0) < 1e-12:
        return (height, width) if quarter % 2 == 0 else (width, height)
    sin_a, cos_a = abs(math.sin(angle)), abs(math.cos(angle))
    long_side, short_side = max(width, height), min(width, height)
    if short_side <= 2.0 * sin_a * cos_a * long_side or abs(sin_a - cos_a) < 1e-10:
        half = 0.5 * short_side
        if width >= height:
            cw, ch = half / sin_a, half / cos_a
        else:
            cw, ch = half / cos_a, half / sin_a
    else:
        cos_2a = cos_a * cos_a - sin_a * sin_a
        cw = (width * cos_a - height * sin_a) / cos_2a
        ch = (height * cos_a - width * sin_a) / cos_2a
    return int(math.floor(ch)), int(math.floor(cw))


def _resize_image(img, out_h, out_w):
    """Align-corners bilinear resize of a (C, H, W) array."""
    c, h, w = img.shape
    if (out_h, out_w) == (h, w):
        return img.copy()
    ys = np.arange(out_h) * ((h - 1) / (out_h - 1)) if out_h > 1 else np.zeros(1)
    xs = np.arange(out_w) * ((w - 1) / (out_w - 1)) if out_w > 1 else np.zeros(1)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1, x1 = np.minimum(y0 + 1, h - 1), np.minimum(x0 + 1, w - 1)
    fy, fx = (ys - y0)[None, :, None], (xs - x0)[None, None, :]
    out = (img[:, y0][:, :, x0] * (1 - fy) * (1 - fx)
           + img[:, y0][:, :, x1] * (1 - fy) * fx
           + img[:, y1][:, :, x0] * fy * (1 - fx)
           + img[:, y1][:, :, x1] * fy * fx)
    return out


def _resize_nearest(gt_values, out_h, out_w):
    h, w = gt_values.shape
    if (out_h, out_w) == (h, w):
        return gt_values.copy()
    ys = np.arange(out_h) * ((h - 1) / (out_h - 1)) if out_h > 1 else np.zeros(1)
    xs = np.arange(out_w) * ((w - 1) / (out_w - 1)) if out_w > 1 else np.zeros(1)
    yi = np.clip(np.rint(ys).astype(int), 0, h - 1)
    xi = np.clip(np.rint(xs).astype(int), 0, w - 1)
    return gt_values[yi][:, xi]


def _rotation_grid(src_h, src_w, crop_h, crop_w, angle):
    """Source coordinates for each pixel of the centered rotation crop."""
    cy, cx = (src_h - 1) / 2.0, (src_w - 1) / 2.0
    dy = np.arange(crop_h) - (crop_h - 1) / 2.0
    dx = np.arange(crop_w) - (crop_w - 1) / 2.0
    dyg, dxg = np.meshgrid(dy, dx, indexing="ij")
    cos_a, sin_a = math.cos(angle), math.sin(angle)
    # inverse rotation of the destination offsets (image y axis points down)
    src_y = cy + sin_a * dxg + cos_a * dyg
    src_x = cx + cos_a * dxg - sin_a * dyg
    return src_y, src_x


def _sample_bilinear(img, src_y, src_x):
    c, h, w = img.shape
    sy = np.clip(src_y, 0, h - 1)
    sx = np.clip(src_x, 0, w - 1)
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    y1, x1 = np.minimum(y0 + 1, h - 1), np.minimum(x0 + 1, w - 1)
    fy, fx = sy - y0, sx - x0
    out = (img[:, y0, x0] * (1 - fy) * (1 - fx) + img[:, y0, x1] * (1 - fy) * fx
           + img[:, y1, x0] * fy * (1 - fx) + img[:, y1, x1] * fy * fx)
    return out


def _sample_nearest(values, src_y, src_x):
    h, w = values.shape
    yi = np.clip(np.rint(src_y).astype(int), 0, h - 1)
    xi = np.clip(np.rint(src_x).astype(int), 0, w - 1)
    return values[yi, xi]


def render_variant(image, gt: GroundTruth, desc):
    """Apply one (scale, angle, flip) descriptor to an aligned sample."""
    scale, angle, flip = desc
    img = np.asarray(image, dtype=np.float64)
    values = gt.values
    if scale != 1.0:
        out_h, out_w = _scaled_size(img.shape[1], scale), _scaled_size(img.shape[2], scale)
        img = _resize_image(img, out_h, out_w)
        values = _resize_nearest(values, out_h, out_w)
    if angle != 0.0:
        h, w = img.shape[1], img.shape[2]
        crop_h, crop_w = _interior_crop(h, w, angle)
        src_y, src_x = _rotation_grid(h, w, crop_h, crop_w, angle)
        img = _sample_bilinear(img, src_y, src_x)
        values = _sample_nearest(values, src_y, src_x)
    if flip:
        img = img[:, :, ::-1].copy()
        values = values[:, ::-1].copy()
    return img, GroundTruth(values)


def augment(sample, plan: AugmentPlan):
    """All surviving variants of one (image, ground truth) sample."""
    image, gt = sample
    img = np.asarray(image, dtype=np.float64)
    if img.shape[1:] != gt.values.shape:
        raise ValueError(f"image {img.shape[1:]} and ground truth {gt.values.shape} misaligned")
    return [render_variant(img, gt, d) for d in plan.descriptors(img.shape[1], img.shape[2])]


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------

def lr_at(epoch: int, cfg: TrainConfig) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr0 / cfg.lr_drop_factor ** (epoch // cfg.lr_drop_every)


def sgd_step(params: dict[str, Tensor], velocity: dict[str, np.ndarray],
             lr: float, cfg: TrainConfig) -> bool:
    """One momentum step over all parameters; grads are zeroed afterwards.

    Returns False (and applies nothing) if any gradient is non-finite.
    """
    for t in params.values():
        if t.grad is not None and not np.all(np.isfinite(t.grad)):
            for p in params.values():
                p.zero_grad()
            return False
    for name, t in params.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        g = g + cfg.weight_decay * t.data
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(t.data)
        v = cfg.momentum * v - lr * g
        velocity[name] = v
        t.data += v
        t.zero_grad()
    return True


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    lr: float
    skipped: int


@dataclass
class TrainingLog:
    epochs: list[EpochStats] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [f"{e.epoch}\t{e.mean_loss!r}\t{e.lr!r}\t{e.skipped}" for e in self.epochs]
        return "\n".join(lines) + ("\n" if lines else "")

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_text())


def train(graph: NetworkGraph, samples, train_cfg: TrainConfig | None = None,
          loss_cfg: LossConfig | None = None, plan: AugmentPlan | None = None,
          checkpoint_fn=None) -> TrainingLog:
    """Seeded epochs of forward / loss / backward / step over augmented samples.

    ``samples`` is a non-empty list of ((3, H, W) image in [0, 1],
    GroundTruth) pairs.  Degenerate-label variants are skipped and counted.
    ``checkpoint_fn(graph, epoch)`` runs every ``checkpoint_every`` epochs
    when provided.
    """
    train_cfg = train_cfg or TrainConfig()
    loss_cfg = loss_cfg or LossConfig()
    plan = plan or AugmentPlan()
    if not samples:
        raise ValueError("empty training set")

    pairs = []
    for si, (image, gt) in enumerate(samples):
        img = np.asarray(image, dtype=np.float64)
        if img.ndim != 3 or img.shape[1:] != gt.values.shape:
            raise ValueError(f"sample {si}: image and ground truth misaligned")
        for desc in plan.descriptors(img.shape[1], img.shape[2]):
            pairs.append((si, desc))
    if not pairs:
        raise ValueError("augmentation plan leaves no usable variants")

    rng = np.random.default_rng(train_cfg.seed)
    velocity: dict[str, np.ndarray] = {}
    log = TrainingLog()
    graph.zero_grads()

    for epoch in range(train_cfg.epochs):
        lr = lr_at(epoch, train_cfg)
        order = rng.permutation(len(pairs))
        losses = []
        skipped = 0
        pending = 0
        for idx in order:
            si, desc = pairs[idx]
            img, gt = render_variant(samples[si][0], samples[si][1], desc)
            try:
                class_weights(gt, loss_cfg.gamma, loss_cfg.threshold)
            except DegenerateLabelError:
                skipped += 1
                continue
            x = Tensor(img[None])
            sides, fused = forward(graph, x)
            loss = total_loss(sides, fused, gt, loss_cfg)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            backward(loss)
            losses.append(value)
            pending += 1
            if pending == train_cfg.batch_size:
                if not sgd_step(graph.params, velocity, lr, train_cfg):
                    skipped += 1
                pending = 0
        if pending:
            if not sgd_step(graph.params, velocity, lr, train_cfg):
                skipped += 1
        mean_loss = float(np.mean(losses)) if losses else float("nan")
        log.epochs.append(EpochStats(epoch, mean_loss, lr, skipped))
        if (checkpoint_fn is not None and train_cfg.checkpoint_every
                and (epoch + 1) % train_cfg.checkpoint_every == 0):
            checkpoint_fn(graph, epoch)
    return log
