"""Boundary-detection scoring: matched precision/recall sweeps, ODS and OIS.

Predicted and ground-truth edge pixels correspond when their Euclidean
distance is at most the tolerance radius (a fraction of the image diagonal
in benchmark use).  Matching is one-to-one and greedy over candidate pairs
in ascending distance; an exhaustive maximum-matching oracle is provided
for bounding the greedy error on small instances.

ODS picks one threshold for the whole dataset (F computed from counts
summed across images); OIS lets every image keep its own best threshold
and aggregates those counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .loss import GroundTruth

DEFAULT_THRESHOLDS = tuple(i / 100.0 for i in range(1, 100))
EVAL_GT_THRESHOLD = 64


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f(self) -> float:
        return f_measure(self.precision, self.recall)


def f_measure(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _edge_pixels(binary) -> np.ndarray:
    return np.argwhere(np.asarray(binary, dtype=bool))   # row-major order


def _candidate_pairs(pred_px, gt_px, radius):
    """(squared distance, pred index, gt index) for all pairs within radius."""
    r2 = radius * radius
    reach = int(math.floor(radius))
    buckets: dict[tuple[int, int], list[int]] = {}
    for gi, (gy, gx) in enumerate(gt_px):
        buckets.setdefault((int(gy), int(gx)), []).append(gi)
    pairs = []
    for pi, (py, px) in enumerate(pred_px):
        for dy in range(-reach, reach + 1):
            for dx in range(-reach, reach + 1):
                for gi in buckets.get((int(py) + dy, int(px) + dx), ()):
                    d2 = dy * dy + dx * dx
                    if d2 <= r2:
                        pairs.append((d2, pi, gi))
    pairs.sort()
    return pairs


def match_edges(pred_binary, gt_binary, radius: float):
    """Greedy one-to-one correspondence; returns (tp, fp, fn).

    Candidate pairs are taken in ascending distance, ties broken by
    row-major pixel order (prediction first).
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    pred_px = _edge_pixels(pred_binary)
    gt_px = _edge_pixels(gt_binary)
    pairs = _candidate_pairs(pred_px, gt_px, radius)
    pred_used = np.zeros(len(pred_px), dtype=bool)
    gt_used = np.zeros(len(gt_px), dtype=bool)
    tp = 0
    for _, pi, gi in pairs:
        if not pred_used[pi] and not gt_used[gi]:
            pred_used[pi] = gt_used[gi] = True
            tp += 1
    return tp, len(pred_px) - tp, len(gt_px) - tp


def match_oracle(pred_binary, gt_binary, radius: float):
    """Maximum-cardinality one-to-one matching via augmenting paths.

    Test-suite oracle for bounding the greedy matcher; instances are
    limited to 200 edge pixels per side.
    """
    pred_px = _edge_pixels(pred_binary)
    gt_px = _edge_pixels(gt_binary)
    if len(pred_px) > 200 or len(gt_px) > 200:
        raise ValueError("oracle instance too large (limit 200 pixels per side)")
    adj: list[list[int]] = [[] for _ in range(len(pred_px))]
    for _, pi, gi in _candidate_pairs(pred_px, gt_px, radius):
        adj[pi].append(gi)
    owner = [-1] * len(gt_px)

    def try_assign(pi, seen):
        for gi in adj[pi]:
            if seen[gi]:
                continue
            seen[gi] = True
            if owner[gi] < 0 or try_assign(owner[gi], seen):
                owner[gi] = pi
                return True
        return False

    tp = 0
    for pi in range(len(pred_px)):
        if try_assign(pi, [False] * len(gt_px)):
            tp += 1
    return tp, len(pred_px) - tp, len(gt_px) - tp


def tolerance_radius(shape, max_tol: float) -> float:
    h, w = shape
    return max_tol * math.hypot(h, w)


def pr_sweep(pred, gt: GroundTruth, thresholds=DEFAULT_THRESHOLDS,
             max_tol: float = 0.0075, gt_threshold: int = EVAL_GT_THRESHOLD):
    """PRPoint per threshold for one (thinned) prediction map."""
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != gt.values.shape:
        raise ValueError(f"prediction {pred.shape} does not match ground truth {gt.values.shape}")
    thresholds = list(thresholds)
    if any(not 0.0 < t < 1.0 for t in thresholds):
        raise ValueError("thresholds must lie strictly inside (0, 1)")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing")
    gt_binary = gt.values >= gt_threshold
    radius = tolerance_radius(pred.shape, max_tol)
    points = []
    for t in thresholds:
        tp, fp, fn = match_edges(pred >= t, gt_binary, radius)
        points.append(PRPoint(t, tp, fp, fn))
    return points


def ods_ois(curves):
    """(ODS, OIS) from per-image PR curves sharing one threshold grid."""
    curves = list(curves)
    if not curves:
        raise ValueError("no PR curves to aggregate")
    n_t = len(curves[0])
    if any(len(c) != n_t for c in curves):
        raise ValueError("per-image curves must share the threshold grid")

    ods = 0.0
    for ti in range(n_t):
        tp = sum(c[ti].tp for c in curves)
        fp = sum(c[ti].fp for c in curves)
        fn = sum(c[ti].fn for c in curves)
        point = PRPoint(curves[0][ti].threshold, tp, fp, fn)
        ods = max(ods, point.f)

    tp = fp = fn = 0
    for c in curves:
        best = max(range(n_t), key=lambda ti: (c[ti].f, -ti))
        tp += c[best].tp
        fp += c[best].fp
        fn += c[best].fn
    ois = f_measure(tp / (tp + fp) if tp + fp else 0.0,
                    tp / (tp + fn) if tp + fn else 0.0)
    return ods, ois


@dataclass
class EvalReport:
    per_image: list
    thresholds: tuple
    ods: float
    ois: float
    tolerance: float
    aggregate: list = field(default_factory=list)   # dataset-level PRPoint per threshold


def evaluate_dataset(preds, gts, thresholds=DEFAULT_THRESHOLDS,
                     max_tol: float = 0.0075) -> EvalReport:
    if len(preds) != len(gts) or not preds:
        raise ValueError("need one prediction per ground truth, at least one pair")
    curves = [pr_sweep(p, g, thresholds, max_tol) for p, g in zip(preds, gts)]
    ods, ois = ods_ois(curves)
    aggregate = []
    for ti, t in enumerate(thresholds):
        tp = sum(c[ti].tp for c in curves)
        fp = sum(c[ti].fp for c in curves)
        fn = sum(c[ti].fn for c in curves)
        aggregate.append(PRPoint(t, tp, fp, fn))
    return EvalReport(per_image=curves, thresholds=tuple(thresholds),
                      ods=ods, ois=ois, tolerance=max_tol, aggregate=aggregate)


def format_report(report: EvalReport) -> str:
    lines = [f"{report.ods!r}\t{report.ois!r}\t{report.tolerance!r}"]
    for pt in report.aggregate:
        lines.append(f"{pt.threshold!r}\t{pt.tp}\t{pt.fp}\t{pt.fn}"
                     f"\t{pt.precision!r}\t{pt.recall!r}\t{pt.f!r}")
    return "\n".join(lines) + "\n"
