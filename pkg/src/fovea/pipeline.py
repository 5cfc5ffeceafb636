"""Frame-level inference and sequence-level evaluation.

Training consumes fixed-size tiles, but the network is fully
convolutional, so a frame is processed in one pass: reflect-pad the
stack so borders carry real context, predict a half-resolution heatmap
for the whole frame, threshold it once, and read detections off the
component centroids. One global threshold lets the strongest peaks
calibrate the split, which suppresses the texture a per-tile threshold
would amplify on empty tiles. Evaluation mirrors dataset construction:
same downscale, same motion filter, so predicted and ground-truth
coordinates share one frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import data, detect, metrics, model


@dataclass(frozen=True)
class FrameDetection:
    """A merged detection in frame coordinates, with its source tile."""

    frame_id: int
    tile_x0: int
    tile_y0: int
    x: float
    y: float
    area: int
    score: float


# Half-width of the network's receptive field, rounded up to keep the
# pooling grid aligned. Band seams and frame borders are exact beyond it.
CONTEXT_PAD = 16


def predictor(net: model.Model, band_rows: int = 128):
    """Inference-mode closure over a trained network.

    Tile-sized inputs go straight through; frame-sized inputs stream in
    horizontal bands with CONTEXT_PAD rows of overlap so the im2col
    buffers stay small. Outputs are bitwise identical either way: every
    output pixel's dot products see the same operands in the same order.
    """

    def predict(stacks: np.ndarray) -> np.ndarray:
        b, _, h, w = np.shape(stacks)
        if h * w <= 96 * 96 or h <= band_rows + 2 * CONTEXT_PAD:
            return model.forward(net, stacks, training=False)
        out = np.empty((b, 1, h // 2, w // 2), np.float32)
        for y0 in range(0, h, band_rows):
            lo = max(0, y0 - CONTEXT_PAD)
            hi = min(h, y0 + band_rows + CONTEXT_PAD)
            band = np.ascontiguousarray(stacks[:, :, lo:hi, :])
            heat = model.forward(net, band, training=False)
            top = (y0 - lo) // 2
            rows = (min(h, y0 + band_rows) - y0) // 2
            out[:, :, y0 // 2:y0 // 2 + rows, :] = heat[:, :, top:top + rows, :]
        return out

    return predict


def merge_duplicates(detections, radius: float):
    """Greedy dedup: strongest detection wins, neighbors within radius drop."""
    ordered = sorted(detections, key=lambda d: (-d.score, -d.area, d.y, d.x))
    kept = []
    for d in ordered:
        if all(np.hypot(d.x - k.x, d.y - k.y) > radius for k in kept):
            kept.append(d)
    return kept


def frame_stack(seq: data.FrameSequence, center: int,
                params: data.DataParams, pad: int = CONTEXT_PAD) -> np.ndarray:
    """Whole-frame input stack, oldest first, with reflected context.

    Reflection keeps the temporal channels from seeing a false spatial
    edge at the frame border, which a motion-sensitive network would
    otherwise light up."""
    half_span = params.stride * (params.channels - 1) // 2
    t0 = center - half_span
    idx = [t0 + i * params.stride for i in range(params.channels)]
    return np.pad(seq.frames[idx], ((0, 0), (pad, pad), (pad, pad)),
                  mode="reflect")


def frame_heatmap(predict, seq: data.FrameSequence, center: int,
                  params: data.DataParams) -> np.ndarray:
    """Predicted half-resolution heatmap for one whole frame."""
    heat = predict(frame_stack(seq, center, params)[None])[0, 0]
    p = CONTEXT_PAD // 2
    return heat[p:heat.shape[0] - p, p:heat.shape[1] - p]


def detections_from_heat(center: int, heat: np.ndarray,
                         params: data.DataParams, alpha: float,
                         merge_radius: float):
    """Detections read off a frame heatmap, with their AOI grid cell."""
    found = []
    for d in detect.extract_detections(heat, alpha):
        found.append(FrameDetection(
            frame_id=center,
            tile_x0=int(d.x) // params.tile * params.tile,
            tile_y0=int(d.y) // params.tile * params.tile,
            x=d.x, y=d.y, area=d.area, score=d.score))
    return merge_duplicates(found, merge_radius)


def infer_frame(predict, seq: data.FrameSequence, center: int,
                params: data.DataParams, alpha: float, merge_radius: float):
    """All detections for one center frame, in frame coordinates."""
    heat = frame_heatmap(predict, seq, center, params)
    return detections_from_heat(center, heat, params, alpha, merge_radius)


def infer_centers(n_frames: int, params: data.DataParams) -> list[int]:
    """Center frames whose stack fits inside the sequence."""
    half_span = params.stride * (params.channels - 1) // 2
    return list(range(half_span, n_frames - half_span))


def eval_centers(n_frames: int, params: data.DataParams) -> list[int]:
    """Center frames whose stack fits and whose truth is judgeable."""
    half_span = params.stride * (params.channels - 1) // 2
    lo = max(half_span, data.MOTION_WINDOW)
    return list(range(lo, n_frames - half_span))


def evaluate(predict, seq: data.FrameSequence, annotations,
             params: data.DataParams, theta: float, alpha: float,
             frame_step: int = 1) -> metrics.MatchReport:
    """Micro-averaged detection quality over a sequence.

    Ground truth per frame is the moving subset of the annotations,
    computed after any downscale so both sides live in the same
    coordinate frame. Seam duplicates merge within theta / 2.
    """
    seq, annotations = data.downscale(seq, annotations, params.sf)
    moving, _ = data.moving_filter(annotations, params.omega)
    by_frame: dict[int, list] = {}
    for a in moving:
        by_frame.setdefault(a.frame_id, []).append(a)

    reports = []
    for center in eval_centers(len(seq.frames), params)[::frame_step]:
        found = infer_frame(predict, seq, center, params, alpha, theta / 2.0)
        truths = [(a.x, a.y) for a in by_frame.get(center, [])]
        reports.append(metrics.match(found, truths, theta))
    return metrics.aggregate(reports)
