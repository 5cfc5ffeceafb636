"""Point-detection scoring: radius matching and P/R/F1 reports.

A detection counts as a true positive when it pairs with a ground-truth
point at distance <= theta. Pairing is global greedy by ascending
distance, so each detection and each truth is used at most once and the
closest available pair always wins. Degenerate denominators report 0 and
set an `undefined` flag instead of inventing a perfect score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

Point = tuple[float, float]


@dataclass
class MatchReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    undefined: bool
    pairs: list[tuple[Point, Point, float]] = field(default_factory=list)


def _xy(p) -> Point:
    if hasattr(p, "x"):
        return (float(p.x), float(p.y))
    return (float(p[0]), float(p[1]))


def f1_from_pr(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def report_from_counts(tp: int, fp: int, fn: int,
                       pairs: list | None = None) -> MatchReport:
    undefined = (tp + fp == 0) or (tp + fn == 0)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return MatchReport(
        tp=tp, fp=fp, fn=fn,
        precision=precision, recall=recall,
        f1=f1_from_pr(precision, recall),
        undefined=undefined or precision + recall == 0,
        pairs=list(pairs) if pairs else [],
    )


def match(detections, truths, theta: float) -> MatchReport:
    """Greedy distance matching: all pairs <= theta, closest first."""
    if theta <= 0:
        raise ConfigError(f"theta must be > 0, got {theta}")
    dets = [_xy(d) for d in detections]
    gts = [_xy(t) for t in truths]
    candidates = []
    if dets and gts:
        da = np.asarray(dets, np.float64)
        ga = np.asarray(gts, np.float64)
        dist = np.hypot(da[:, None, 0] - ga[None, :, 0], da[:, None, 1] - ga[None, :, 1])
        di, gi = np.nonzero(dist <= theta)
        candidates = sorted(zip(dist[di, gi].tolist(), di.tolist(), gi.tolist()))
    det_used = [False] * len(dets)
    gt_used = [False] * len(gts)
    pairs = []
    for d, i, j in candidates:
        if det_used[i] or gt_used[j]:
            continue
        det_used[i] = gt_used[j] = True
        pairs.append((dets[i], gts[j], d))
    tp = len(pairs)
    return report_from_counts(tp, len(dets) - tp, len(gts) - tp, pairs)


def aggregate(reports) -> MatchReport:
    """Micro-average: sum counts, recompute ratios, concatenate pairs."""
    tp = sum(r.tp for r in reports)
    fp = sum(r.fp for r in reports)
    fn = sum(r.fn for r in reports)
    pairs = [p for r in reports for p in r.pairs]
    return report_from_counts(tp, fp, fn, pairs)
