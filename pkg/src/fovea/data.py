"""From registered frames and point tracks to training pairs.

The chain is: optional area-average downscale, motion filtering (only
vehicles that actually move get supervised), square tiling with an
inward-shifted last tile, frame-stack assembly around a center frame,
and Gaussian-sum target heatmaps at half resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BoundaryError, ConfigError, EmptyDatasetError

MOTION_WINDOW = 5  # frames between displacement endpoints


@dataclass
class FrameSequence:
    """Registered grayscale frames, (T, H, W) float32 in [0, 1], time-ordered."""

    frames: np.ndarray
    frame_rate: float = 1.0
    gsd: float = 1.0  # meters per pixel, metadata only

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 3:
            raise ConfigError(f"frames must be (T, H, W), got shape {self.frames.shape}")

    @property
    def dims(self) -> tuple[int, int]:
        return self.frames.shape[1:]


@dataclass(frozen=True)
class PointAnnotation:
    frame_id: int
    track_id: int
    x: float
    y: float


@dataclass
class FrameStack:
    x0: int
    y0: int
    size: int
    center_frame_id: int
    stride: int
    values: np.ndarray  # (c, N, N) float32


@dataclass
class DataParams:
    tile: int          # tile side N, even
    channels: int      # stack depth c, odd
    stride: int        # frame skip s
    sigma: float       # heatmap Gaussian scale, half-resolution px
    omega: float       # minimum displacement over the motion window, px
    sf: float = 1.0    # resolution scale factor

    def __post_init__(self):
        if self.tile < 2 or self.tile % 2:
            raise ConfigError(f"tile must be even and >= 2, got {self.tile}")
        if self.channels < 1 or self.channels % 2 == 0:
            raise ConfigError(f"channels must be odd and >= 1, got {self.channels}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        if self.omega < 0:
            raise ConfigError(f"omega must be >= 0, got {self.omega}")
        if not 0.0 < self.sf <= 1.0:
            raise ConfigError(f"sf must be in (0, 1], got {self.sf}")


@dataclass
class TileDataset:
    stacks: np.ndarray            # (n, c, N, N)
    targets: np.ndarray           # (n, 1, N/2, N/2)
    centers: list[int] = field(default_factory=list)
    origins: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.stacks)


@dataclass
class MovingFilterReport:
    kept: int = 0
    removed_static: int = 0
    removed_short: int = 0


def tile_axis(dim: int, n: int) -> list[int]:
    """Origins along one axis: stride n, last tile shifted inward to fit."""
    if n > dim:
        raise ConfigError(f"tile size {n} exceeds frame extent {dim}")
    xs = list(range(0, dim - n + 1, n))
    if xs[-1] + n < dim:
        xs.append(dim - n)
    return xs


def tile_aoi(dims: tuple[int, int], n: int) -> list[tuple[int, int]]:
    """Row-major (x0, y0) tile origins covering an (H, W) frame."""
    h, w = dims
    if n % 2:
        raise ConfigError(f"tile size must be even, got {n}")
    if n > min(h, w):
        raise ConfigError(f"tile size {n} exceeds frame dims {dims}")
    return [(x0, y0) for y0 in tile_axis(h, n) for x0 in tile_axis(w, n)]


def assemble_stack(seq: FrameSequence, center_frame_id: int,
                   tile: tuple[int, int, int], c: int, stride: int) -> FrameStack:
    """Crop c frames around the center, oldest first, center in the middle."""
    x0, y0, n = tile
    t, h, w = seq.frames.shape
    if not (0 <= x0 <= w - n and 0 <= y0 <= h - n):
        raise ConfigError(f"tile ({x0}, {y0}, {n}) leaves frame bounds {h}x{w}")
    half = (c - 1) // 2
    frame_ids = [center_frame_id + stride * (k - half) for k in range(c)]
    if frame_ids[0] < 0 or frame_ids[-1] >= t:
        raise BoundaryError(
            f"stack around frame {center_frame_id} needs frames "
            f"{frame_ids[0]}..{frame_ids[-1]}, sequence has 0..{t - 1}"
        )
    values = seq.frames[frame_ids, y0:y0 + n, x0:x0 + n].copy()
    return FrameStack(x0, y0, n, center_frame_id, stride, values)


def make_heatmap(points, N: int, sigma: float) -> np.ndarray:
    """Sum of unit-mass Gaussians on the half-resolution grid.

    Each (x, y) in full-resolution tile coordinates contributes
    exp(-d^2 / (2 sigma^2)) / (2 pi sigma^2) centered at (x/2, y/2),
    where d is measured in half-resolution pixels. No clipping.
    """
    if sigma <= 0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    if N % 2:
        raise ConfigError(f"tile size must be even, got {N}")
    half = N // 2
    out = np.zeros((half, half), np.float64)
    if len(points) == 0:
        return out.astype(np.float32)
    cols = np.arange(half, dtype=np.float64)
    rows = np.arange(half, dtype=np.float64)[:, None]
    norm = 1.0 / (2.0 * np.pi * sigma * sigma)
    inv = 1.0 / (2.0 * sigma * sigma)
    for x, y in points:
        d2 = (cols - x / 2.0) ** 2 + (rows - y / 2.0) ** 2
        out += norm * np.exp(-d2 * inv)
    return out.astype(np.float32)


def moving_filter(annotations, omega: float,
                  window: int = MOTION_WINDOW) -> tuple[list[PointAnnotation], MovingFilterReport]:
    """Keep annotations whose track moves >= omega px across the window.

    The displacement endpoint for frame t is t+window when the track has
    it, else t-window; annotations with neither endpoint are dropped and
    counted separately (track too short to judge).
    """
    by_track: dict[int, dict[int, PointAnnotation]] = {}
    for a in annotations:
        by_track.setdefault(a.track_id, {})[a.frame_id] = a
    report = MovingFilterReport()
    kept = []
    for a in annotations:
        track = by_track[a.track_id]
        other = track.get(a.frame_id + window) or track.get(a.frame_id - window)
        if other is None:
            report.removed_short += 1
            continue
        if np.hypot(a.x - other.x, a.y - other.y) >= omega:
            report.kept += 1
            kept.append(a)
        else:
            report.removed_static += 1
    return kept, report


def _axis_weights(dim: int, out_dim: int) -> np.ndarray:
    """(out_dim, dim) row-stochastic overlap weights for area averaging."""
    scale = dim / out_dim
    w = np.zeros((out_dim, dim), np.float64)
    for i in range(out_dim):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(min(np.ceil(hi), dim))
        for j in range(j0, j1):
            w[i, j] = min(hi, j + 1) - max(lo, j)
        w[i] /= scale
    return w


def downscale(seq: FrameSequence, annotations, sf: float) -> tuple[FrameSequence, list[PointAnnotation]]:
    """Area-average resample by sf; annotation coordinates multiply by sf."""
    if not 0.0 < sf <= 1.0:
        raise ConfigError(f"sf must be in (0, 1], got {sf}")
    if sf == 1.0:
        return FrameSequence(seq.frames.copy(), seq.frame_rate, seq.gsd), list(annotations)
    t, h, w = seq.frames.shape
    out_h = max(1, int(round(h * sf)))
    out_w = max(1, int(round(w * sf)))
    wr = _axis_weights(h, out_h)
    wc = _axis_weights(w, out_w)
    frames = np.matmul(np.matmul(wr[None], seq.frames.astype(np.float64)), wc.T[None])
    out_seq = FrameSequence(frames.astype(np.float32), seq.frame_rate, seq.gsd / sf)
    scaled = [
        replace(a,
                x=min(a.x * sf, np.nextafter(np.float64(out_w), 0.0)),
                y=min(a.y * sf, np.nextafter(np.float64(out_h), 0.0)))
        for a in annotations
    ]
    return out_seq, scaled


def _check_bounds(annotations, dims: tuple[int, int], n_frames: int):
    h, w = dims
    for a in annotations:
        if not (0 <= a.x < w and 0 <= a.y < h):
            raise ConfigError(
                f"annotation track {a.track_id} frame {a.frame_id} at ({a.x}, {a.y}) "
                f"lies outside the {h}x{w} frame"
            )
        if not 0 <= a.frame_id < n_frames:
            raise ConfigError(
                f"annotation frame {a.frame_id} outside sequence of {n_frames} frames"
            )


def build_dataset(seq: FrameSequence, annotations, params: DataParams) -> TileDataset:
    """All (stack, heatmap) pairs whose center tile holds a moving vehicle.

    Ordering is deterministic: center frames ascending, tiles row-major.
    """
    _check_bounds(annotations, seq.dims, len(seq.frames))
    seq, annotations = downscale(seq, annotations, params.sf)
    moving, _ = moving_filter(annotations, params.omega)
    by_frame: dict[int, list[PointAnnotation]] = {}
    for a in moving:
        by_frame.setdefault(a.frame_id, []).append(a)

    t = len(seq.frames)
    half_span = params.stride * (params.channels - 1) // 2
    origins = tile_aoi(seq.dims, params.tile)
    stacks, targets, centers, kept_origins = [], [], [], []
    for center in range(half_span, t - half_span):
        frame_anns = by_frame.get(center)
        if not frame_anns:
            continue
        for x0, y0 in origins:
            local = [(a.x - x0, a.y - y0) for a in frame_anns
                     if x0 <= a.x < x0 + params.tile and y0 <= a.y < y0 + params.tile]
            if not local:
                continue
            stack = assemble_stack(seq, center, (x0, y0, params.tile),
                                   params.channels, params.stride)
            stacks.append(stack.values)
            targets.append(make_heatmap(local, params.tile, params.sigma)[None])
            centers.append(center)
            kept_origins.append((x0, y0))
    if not stacks:
        raise EmptyDatasetError("no tiles with moving vehicles in range")
    return TileDataset(
        stacks=np.stack(stacks).astype(np.float32),
        targets=np.stack(targets).astype(np.float32),
        centers=centers,
        origins=kept_origins,
    )
