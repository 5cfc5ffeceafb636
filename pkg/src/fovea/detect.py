"""Heatmap post-processing into point detections.

A predicted heatmap is binarized with Otsu's threshold (256 bins over
[min, max]), segmented into 8-connected components, filtered by a strict
area threshold alpha, and each surviving component becomes one detection
at its intensity-weighted centroid, reported in full-resolution tile
coordinates (the heatmap grid is half resolution). Merged blobs stay one
detection; splitting is deliberately out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class SegmentationMap:
    mask: np.ndarray  # bool, heatmap-sized
    threshold: float


@dataclass(frozen=True)
class Component:
    area: int
    cx: float      # half-resolution column
    cy: float      # half-resolution row
    score: float   # mean heat over the component


@dataclass(frozen=True)
class Detection:
    x: float       # full-resolution tile coordinates
    y: float
    area: int      # half-resolution pixel count
    score: float


def _quantize(values: np.ndarray) -> tuple[np.ndarray, float, float] | None:
    v = np.asarray(values, np.float64)
    lo, hi = float(v.min()), float(v.max())
    if not np.isfinite(lo) or not np.isfinite(hi):
        raise ConfigError("heatmap contains non-finite values")
    if hi == lo:
        return None
    bins = np.minimum((v - lo) / (hi - lo) * 256.0, 255.0).astype(np.intp)
    return bins, lo, hi


def otsu_bin(values: np.ndarray) -> int | None:
    """Split bin t (classes [0..t] | [t+1..255]) maximizing between-class
    variance; first maximum wins. None for a constant input."""
    q = _quantize(values)
    if q is None:
        return None
    bins, _, _ = q
    hist = np.bincount(bins.ravel(), minlength=256).astype(np.float64)
    idx = np.arange(256, dtype=np.float64)
    total = hist.sum()
    w0 = np.cumsum(hist)[:255]
    w1 = total - w0
    s0 = np.cumsum(hist * idx)[:255]
    s1 = float((hist * idx).sum()) - s0
    var = np.zeros(255, np.float64)
    ok = (w0 > 0) & (w1 > 0)
    m0 = np.divide(s0, w0, out=np.zeros_like(s0), where=ok)
    m1 = np.divide(s1, w1, out=np.zeros_like(s1), where=ok)
    var[ok] = ((w0 / total) * (w1 / total) * (m0 - m1) ** 2)[ok]
    return int(np.argmax(var))


def otsu_threshold(values: np.ndarray) -> float:
    """The intensity at the chosen bin boundary; above max when constant."""
    q = _quantize(values)
    if q is None:
        v = np.asarray(values, np.float64)
        return float(v.max()) + 1.0
    _, lo, hi = q
    t = otsu_bin(values)
    return lo + (hi - lo) * (t + 1) / 256.0


def segment(values: np.ndarray) -> SegmentationMap:
    """Foreground = quantized bins above the Otsu split."""
    q = _quantize(values)
    if q is None:
        return SegmentationMap(np.zeros(np.asarray(values).shape, bool), otsu_threshold(values))
    bins, _, _ = q
    t = otsu_bin(values)
    return SegmentationMap(bins > t, otsu_threshold(values))


def label_components(mask: np.ndarray) -> np.ndarray:
    """8-connected labels, two-pass union-find over foreground pixels.

    Labels are 1..k in order of each component's first (row-major) pixel.
    """
    mask = np.asarray(mask, bool)
    labels = np.zeros(mask.shape, np.int32)
    parent: dict[int, int] = {}

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    h, w = mask.shape
    nxt = 0
    ys, xs = np.nonzero(mask)
    for y, x in zip(ys.tolist(), xs.tolist()):
        neighbors = []
        if y > 0:
            row = labels[y - 1]
            for nx in (x - 1, x, x + 1):
                if 0 <= nx < w and row[nx]:
                    neighbors.append(int(row[nx]))
        if x > 0 and labels[y, x - 1]:
            neighbors.append(int(labels[y, x - 1]))
        if not neighbors:
            nxt += 1
            parent[nxt] = nxt
            labels[y, x] = nxt
        else:
            roots = sorted({find(n) for n in neighbors})
            keep = roots[0]
            labels[y, x] = keep
            for r in roots[1:]:
                parent[r] = keep
    if nxt == 0:
        return labels
    # resolve unions and rename to first-appearance order
    rename: dict[int, int] = {}
    flat = labels.ravel()
    for i in np.nonzero(flat)[0].tolist():
        root = find(int(flat[i]))
        if root not in rename:
            rename[root] = len(rename) + 1
        flat[i] = rename[root]
    return labels


def connected_components(mask: np.ndarray, heat: np.ndarray) -> list[Component]:
    """Per-component area, heat-weighted centroid, and mean-heat score.

    Centroid weights are the non-negative part of the heat; a component
    with no positive heat falls back to its geometric centroid.
    """
    labels = label_components(mask)
    k = int(labels.max())
    if k == 0:
        return []
    heat = np.asarray(heat, np.float64)
    lab = labels.ravel()
    fg = lab > 0
    idx = lab[fg] - 1
    ys, xs = np.nonzero(labels)
    weights = np.clip(heat.ravel()[fg], 0.0, None)
    areas = np.bincount(idx, minlength=k)
    raw = np.bincount(idx, weights=heat.ravel()[fg], minlength=k)
    wsum = np.bincount(idx, weights=weights, minlength=k)
    wx = np.bincount(idx, weights=weights * xs, minlength=k)
    wy = np.bincount(idx, weights=weights * ys, minlength=k)
    gx = np.bincount(idx, weights=xs.astype(np.float64), minlength=k)
    gy = np.bincount(idx, weights=ys.astype(np.float64), minlength=k)
    out = []
    for i in range(k):
        if wsum[i] > 0:
            cx, cy = wx[i] / wsum[i], wy[i] / wsum[i]
        else:
            cx, cy = gx[i] / areas[i], gy[i] / areas[i]
        out.append(Component(int(areas[i]), float(cx), float(cy), float(raw[i] / areas[i])))
    return out


def extract_detections(heat: np.ndarray, alpha: float) -> list[Detection]:
    """Threshold, label, filter area > alpha, centroid at full resolution.

    Sorted by descending score; ties break on larger area, then position.
    """
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    seg = segment(heat)
    comps = connected_components(seg.mask, heat)
    dets = [
        Detection(x=2.0 * c.cx, y=2.0 * c.cy, area=c.area, score=c.score)
        for c in comps
        if c.area > alpha
    ]
    dets.sort(key=lambda d: (-d.score, -d.area, d.y, d.x))
    return dets
