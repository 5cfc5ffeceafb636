"""Synthetic registered overhead video with exact vehicle ground truth.

Scenes are a static background (optionally with darker road bands and a
curved overpass arc), plus anti-aliased vehicle rectangles following
analytic trajectories, plus per-frame Gaussian sensor noise. Because
trajectories are closed-form, annotations are exact by construction and
every derived quantity (displacement, density) can be recomputed
independently of the renderer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import data
from .errors import ConfigError

ROAD_DARKEN = 0.10   # roads sit below the surrounding background level
TEXTURE_AMP = 0.015  # low-frequency background modulation amplitude
SUPERSAMPLE = 4      # subpixel samples per axis when rasterizing vehicles

_HEADING_MODELS = ("straight", "curved")
_BACKGROUNDS = ("flat", "roads")


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to regenerate one scene bit-for-bit."""

    dims: tuple[int, int]             # (height, width) px
    n_frames: int
    n_vehicles: int
    extent: tuple[float, float]       # vehicle (length, width) px
    speed_range: tuple[float, float]  # px per frame
    heading_model: str                # straight | curved
    contrast: float                   # vehicle brightness above background
    background: str                   # flat | roads
    noise_sigma: float
    seed: int
    static_fraction: float = 0.0      # parked distractors, annotated but unmoving
    curved_fraction: float = 0.3      # movers on the arc when heading_model=curved
    background_level: float = 0.45
    contrast_jitter: float = 0.2      # per-vehicle relative contrast spread

    def __post_init__(self):
        h, w = self.dims
        if h < 8 or w < 8:
            raise ConfigError(f"dims must be at least 8x8, got {self.dims}")
        if self.n_frames < 1:
            raise ConfigError(f"n_frames must be >= 1, got {self.n_frames}")
        if self.n_vehicles < 0:
            raise ConfigError(f"n_vehicles must be >= 0, got {self.n_vehicles}")
        if self.extent[0] <= 0 or self.extent[1] <= 0:
            raise ConfigError(f"extent must be positive, got {self.extent}")
        lo, hi = self.speed_range
        if lo < 0 or hi < lo:
            raise ConfigError(f"speed_range must satisfy 0 <= lo <= hi, got {self.speed_range}")
        if self.heading_model not in _HEADING_MODELS:
            raise ConfigError(f"heading_model must be one of {_HEADING_MODELS}")
        if self.background not in _BACKGROUNDS:
            raise ConfigError(f"background must be one of {_BACKGROUNDS}")
        if not 0.0 <= self.contrast <= 1.0:
            raise ConfigError(f"contrast must be in [0, 1], got {self.contrast}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        for name in ("static_fraction", "curved_fraction", "background_level", "contrast_jitter"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class Road:
    kind: str            # h | v | arc
    a: float             # y for h, x for v, center x for arc
    b: float = 0.0       # center y for arc
    radius: float = 0.0
    halfwidth: float = 3.0


@dataclass(frozen=True)
class Vehicle:
    """Closed-form trajectory; position fields are at t = 0."""

    track_id: int
    kind: str            # straight | arc | static
    length: float
    width: float
    contrast: float
    x0: float = 0.0
    y0: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    heading: float = 0.0  # static orientation; movers derive theirs
    cx: float = 0.0
    cy: float = 0.0
    radius: float = 0.0
    phi0: float = 0.0
    dphi: float = 0.0


def vehicle_position(v: Vehicle, t: float) -> tuple[float, float]:
    if v.kind == "arc":
        phi = v.phi0 + v.dphi * t
        return v.cx + v.radius * math.cos(phi), v.cy + v.radius * math.sin(phi)
    return v.x0 + v.vx * t, v.y0 + v.vy * t


def vehicle_heading(v: Vehicle, t: float) -> float:
    if v.kind == "arc":
        return v.phi0 + v.dphi * t + math.copysign(math.pi / 2.0, v.dphi)
    if v.kind == "static":
        return v.heading
    return math.atan2(v.vy, v.vx)


def _arc_phase_window(arc: Road, dims: tuple[int, int]) -> tuple[float, float]:
    """Phase interval whose positions land inside the frame."""
    h, _ = dims
    lo = max(-1.0, (1.0 - arc.b) / arc.radius)
    hi = min(1.0, (h - 2.0 - arc.b) / arc.radius)
    return math.asin(lo) * 0.9, math.asin(hi) * 0.9


def _spread_positions(rng, lo: float, hi: float, count: int, min_gap: float):
    """Sorted positions in [lo, hi] with pairwise gaps >= min_gap when the
    interval allows it; otherwise the widest-spread attempt seen."""
    best, best_gap = None, -1.0
    for _ in range(40):
        xs = np.sort(rng.uniform(lo, hi, size=count))
        gap = float(np.min(np.diff(xs))) if count > 1 else float("inf")
        if gap >= min_gap:
            return [float(x) for x in xs]
        if gap > best_gap:
            best, best_gap = xs, gap
    return [float(x) for x in best]


def _plan(spec: SceneSpec):
    root = np.random.SeedSequence(spec.seed)
    layout_ss, veh_ss, tex_ss, noise_ss = root.spawn(4)

    h, w = spec.dims
    length, width = spec.extent
    halfwidth = max(2.0, 1.5 * width)
    # Parallel carriageways keep enough separation that one lane's traffic
    # (and its shoulder parking) cannot bleed into the next lane's blobs.
    road_gap = 2.0 * halfwidth + 3.0 * width + 3.0
    rng = np.random.default_rng(layout_ss)
    roads = []
    for y in _spread_positions(rng, 0.1 * h, 0.9 * h, int(rng.integers(2, 5)), road_gap):
        roads.append(Road("h", y, halfwidth=halfwidth))
    for x in _spread_positions(rng, 0.1 * w, 0.9 * w, int(rng.integers(2, 5)), road_gap):
        roads.append(Road("v", x, halfwidth=halfwidth))
    arc = None
    if spec.heading_model == "curved":
        cx = (-0.6 + rng.uniform(-0.1, 0.1)) * w
        cy = (0.5 + rng.uniform(-0.1, 0.1)) * h
        radius = rng.uniform(1.05, 1.4) * w
        arc = Road("arc", float(cx), float(cy), float(radius), halfwidth)
        roads.append(arc)

    vehicles = _assign_vehicles(spec, roads, arc, np.random.default_rng(veh_ss))
    return roads, vehicles, tex_ss, noise_ss


def _assign_vehicles(spec: SceneSpec, roads, arc, rng) -> list[Vehicle]:
    h, w = spec.dims
    length, width = spec.extent
    t_mid = (spec.n_frames - 1) / 2.0
    lanes = [r for r in roads if r.kind in ("h", "v")]
    n_static = int(round(spec.n_vehicles * spec.static_fraction))
    n_moving = spec.n_vehicles - n_static
    n_curved = int(round(n_moving * spec.curved_fraction)) if arc is not None else 0

    vehicles = []
    for i in range(n_curved):
        speed = float(rng.uniform(*spec.speed_range))
        contrast = spec.contrast * (1.0 + spec.contrast_jitter * float(rng.uniform(-1.0, 1.0)))
        dphi = (speed / arc.radius) * (1.0 if rng.random() < 0.5 else -1.0)
        p_lo, p_hi = _arc_phase_window(arc, spec.dims)
        phi_mid = float(rng.uniform(p_lo, p_hi))
        r = arc.radius + float(rng.uniform(-0.5, 0.5)) * arc.halfwidth
        vehicles.append(Vehicle(
            i, "arc", length, width, contrast,
            cx=arc.a, cy=arc.b, radius=r,
            phi0=phi_mid - dphi * t_mid, dphi=dphi,
        ))

    # Straight movers form per-lane platoons: one flow direction and base
    # speed per lane, headways of a few car lengths. Chained spacing keeps
    # neighbouring response blobs separable for the whole sequence instead
    # of letting uniform placement clump vehicles into joint segments.
    gap = 3.0 * length + 4.0
    idxs = list(range(n_curved, n_moving))
    lane_of = [int(rng.integers(0, len(lanes))) for _ in idxs]
    flow = [(1.0 if rng.random() < 0.5 else -1.0,
             float(rng.uniform(*spec.speed_range))) for _ in lanes]
    for k, lane in enumerate(lanes):
        members = [i for i, ln in zip(idxs, lane_of) if ln == k]
        if not members:
            continue
        sign, base = flow[k]
        pos = float(rng.uniform(0.0, gap))
        for i in members:
            speed = min(spec.speed_range[1],
                        max(spec.speed_range[0],
                            base * (1.0 + 0.01 * float(rng.uniform(-1.0, 1.0)))))
            contrast = spec.contrast * (1.0 + spec.contrast_jitter * float(rng.uniform(-1.0, 1.0)))
            off = float(rng.uniform(-1.0, 1.0)) * max(0.5, lane.halfwidth - width)
            if lane.kind == "h":
                mid_x, mid_y = pos, lane.a + off
                vx, vy = sign * speed, 0.0
            else:
                mid_x, mid_y = lane.a + off, pos
                vx, vy = 0.0, sign * speed
            vehicles.append(Vehicle(
                i, "straight", length, width, contrast,
                x0=mid_x - vx * t_mid, y0=mid_y - vy * t_mid, vx=vx, vy=vy,
            ))
            pos += gap * (1.0 + float(rng.exponential(0.8)))

    # Parked distractors sit on the shoulder, clear of the traffic lanes,
    # so movers never drive through them.
    clearance = width + 1.0
    for j in range(n_static):
        contrast = spec.contrast * (1.0 + spec.contrast_jitter * float(rng.uniform(-1.0, 1.0)))
        if j % 2 == 0 and lanes:
            lane = lanes[int(rng.integers(0, len(lanes)))]
            side = 1.0 if rng.random() < 0.5 else -1.0
            off = side * (lane.halfwidth + clearance + float(rng.uniform(0.0, width)))
            if lane.kind == "h":
                x0 = float(rng.uniform(1.0, w - 2.0))
                y0 = min(max(lane.a + off, 1.0), h - 2.0)
                heading = 0.0
            else:
                x0 = min(max(lane.a + off, 1.0), w - 2.0)
                y0 = float(rng.uniform(1.0, h - 2.0))
                heading = math.pi / 2.0
        else:
            x0 = float(rng.uniform(1.0, w - 2.0))
            y0 = float(rng.uniform(1.0, h - 2.0))
            heading = float(rng.uniform(0.0, math.pi))
            for _ in range(20):
                if all(abs((x0 if l.kind == "v" else y0) - l.a)
                       > l.halfwidth + clearance for l in lanes):
                    break
                x0 = float(rng.uniform(1.0, w - 2.0))
                y0 = float(rng.uniform(1.0, h - 2.0))
                heading = float(rng.uniform(0.0, math.pi))
        vehicles.append(Vehicle(n_moving + j, "static", length, width, contrast,
                                x0=x0, y0=y0, heading=heading))
    return vehicles


def plan_vehicles(spec: SceneSpec) -> list[Vehicle]:
    """The exact vehicle set generate() will render, without rendering."""
    return _plan(spec)[1]


def _background(spec: SceneSpec, roads, tex_ss) -> np.ndarray:
    h, w = spec.dims
    img = np.full((h, w), spec.background_level, dtype=np.float64)
    if spec.background == "flat":
        return img
    rng = np.random.default_rng(tex_ss)
    rows = np.arange(h, dtype=np.float64)[:, None]
    cols = np.arange(w, dtype=np.float64)[None, :]
    for _ in range(3):
        fy, fx = rng.uniform(0.5, 2.0, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        img += TEXTURE_AMP * np.cos(2.0 * np.pi * (fy * rows / h + fx * cols / w) + phase)
    for r in roads:
        if r.kind == "h":
            band = np.abs(rows - r.a) <= r.halfwidth
            img -= ROAD_DARKEN * band
        elif r.kind == "v":
            band = np.abs(cols - r.a) <= r.halfwidth
            img -= ROAD_DARKEN * band
        else:
            dist = np.hypot(cols - r.a, rows - r.b)
            img -= ROAD_DARKEN * (np.abs(dist - r.radius) <= r.halfwidth)
    return img


_SUB = (np.arange(SUPERSAMPLE, dtype=np.float64) + 0.5) / SUPERSAMPLE - 0.5


def _render_vehicle(img, x, y, heading, length, width, contrast):
    """Add an oriented rectangle with supersampled pixel coverage."""
    h, w = img.shape
    pad = 0.5 * math.hypot(length, width)
    x_lo, x_hi = max(0, math.floor(x - pad)), min(w - 1, math.ceil(x + pad))
    y_lo, y_hi = max(0, math.floor(y - pad)), min(h - 1, math.ceil(y + pad))
    if x_lo > x_hi or y_lo > y_hi:
        return
    xs = (np.arange(x_lo, x_hi + 1, dtype=np.float64)[:, None] + _SUB).ravel() - x
    ys = (np.arange(y_lo, y_hi + 1, dtype=np.float64)[:, None] + _SUB).ravel() - y
    c, s = math.cos(heading), math.sin(heading)
    along = c * xs[None, :] + s * ys[:, None]
    cross = -s * xs[None, :] + c * ys[:, None]
    inside = (np.abs(along) <= 0.5 * length) & (np.abs(cross) <= 0.5 * width)
    cover = inside.reshape(y_hi - y_lo + 1, SUPERSAMPLE,
                           x_hi - x_lo + 1, SUPERSAMPLE).mean(axis=(1, 3))
    img[y_lo:y_hi + 1, x_lo:x_hi + 1] += contrast * cover


def generate(spec: SceneSpec) -> tuple[data.FrameSequence, list[data.PointAnnotation]]:
    """Render the scene and return exact center annotations per frame.

    A vehicle is annotated only while its center lies inside the frame;
    the rectangle itself is still drawn when partially visible.
    """
    roads, vehicles, tex_ss, noise_ss = _plan(spec)
    h, w = spec.dims
    bg = _background(spec, roads, tex_ss)
    frame_noise = noise_ss.spawn(spec.n_frames)

    frames = np.empty((spec.n_frames, h, w), dtype=np.float32)
    for t in range(spec.n_frames):
        img = bg.copy()
        for v in vehicles:
            x, y = vehicle_position(v, t)
            pad = 0.5 * math.hypot(v.length, v.width) + 1.0
            if -pad <= x <= w - 1 + pad and -pad <= y <= h - 1 + pad:
                _render_vehicle(img, x, y, vehicle_heading(v, t),
                                v.length, v.width, v.contrast)
        if spec.noise_sigma > 0:
            img += np.random.default_rng(frame_noise[t]).normal(
                0.0, spec.noise_sigma, size=(h, w))
        np.clip(img, 0.0, 1.0, out=img)
        frames[t] = img.astype(np.float32)

    annotations = []
    for v in vehicles:
        for t in range(spec.n_frames):
            x, y = vehicle_position(v, t)
            if 0.0 <= x <= w - 1.0 and 0.0 <= y <= h - 1.0:
                annotations.append(data.PointAnnotation(
                    frame_id=t, track_id=v.track_id, x=float(x), y=float(y)))
    return data.FrameSequence(frames), annotations


@dataclass(frozen=True)
class Profile:
    """A named benchmark recipe: scene template plus processing parameters."""

    scene: SceneSpec       # training-scene template; seed replaced per benchmark
    eval_frames: int
    params: data.DataParams
    theta: float           # match radius, full-resolution px
    alpha: float           # minimum component area, half-resolution px


PROFILES = {
    "wami_full": Profile(
        scene=SceneSpec(dims=(480, 480), n_frames=30, n_vehicles=35,
                        extent=(18.0, 9.0), speed_range=(3.2, 7.0),
                        heading_model="straight", contrast=0.30,
                        background="roads", noise_sigma=0.04, seed=0,
                        static_fraction=0.15),
        eval_frames=12,
        params=data.DataParams(tile=100, channels=5, stride=1, sigma=2.0, omega=15.0),
        theta=40.0, alpha=15.0,
    ),
    "wami_sf04": Profile(
        scene=SceneSpec(dims=(192, 192), n_frames=60, n_vehicles=40,
                        extent=(7.2, 3.6), speed_range=(1.28, 2.8),
                        heading_model="straight", contrast=0.30,
                        background="roads", noise_sigma=0.016, seed=0,
                        static_fraction=0.24),
        eval_frames=20,
        params=data.DataParams(tile=40, channels=5, stride=1, sigma=2.0, omega=6.0),
        theta=16.0, alpha=15.0,
    ),
    "wami_sf02": Profile(
        scene=SceneSpec(dims=(320, 320), n_frames=128, n_vehicles=68,
                        extent=(3.6, 1.8), speed_range=(1.0, 2.0),
                        heading_model="straight", contrast=0.45,
                        background="roads", noise_sigma=0.01, seed=0,
                        static_fraction=0.30),
        eval_frames=30,
        params=data.DataParams(tile=64, channels=5, stride=1, sigma=1.0, omega=3.0),
        theta=8.0, alpha=8.0,
    ),
    "satellite": Profile(
        scene=SceneSpec(dims=(256, 256), n_frames=64, n_vehicles=44,
                        extent=(3.6, 1.8), speed_range=(0.3, 0.6),
                        heading_model="curved", contrast=0.28,
                        background="roads", noise_sigma=0.012, seed=0,
                        static_fraction=0.2, curved_fraction=0.3),
        eval_frames=32,
        params=data.DataParams(tile=32, channels=5, stride=5, sigma=1.0, omega=1.0),
        theta=8.0, alpha=4.0,
    ),
}


@dataclass(frozen=True)
class Benchmark:
    profile: str
    train_scene: SceneSpec
    eval_scene: SceneSpec
    train_seq: data.FrameSequence
    train_annotations: list
    eval_seq: data.FrameSequence
    eval_annotations: list
    params: data.DataParams
    theta: float
    alpha: float


def _derived_seed(seed: int, role: int) -> int:
    return int(np.random.SeedSequence((seed, role)).generate_state(1)[0])


def make_benchmark(profile: str, seed: int = 0, train_frames: int | None = None,
                   eval_frames: int | None = None) -> Benchmark:
    """Instantiate train and eval scenes with disjoint derived seeds."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}, have {sorted(PROFILES)}")
    prof = PROFILES[profile]
    train_scene = replace(prof.scene, seed=_derived_seed(seed, 0),
                          n_frames=train_frames or prof.scene.n_frames)
    eval_scene = replace(prof.scene, seed=_derived_seed(seed, 1),
                         n_frames=eval_frames or prof.eval_frames)
    train_seq, train_annotations = generate(train_scene)
    eval_seq, eval_annotations = generate(eval_scene)
    return Benchmark(
        profile=profile,
        train_scene=train_scene,
        eval_scene=eval_scene,
        train_seq=train_seq,
        train_annotations=train_annotations,
        eval_seq=eval_seq,
        eval_annotations=eval_annotations,
        params=prof.params,
        theta=prof.theta,
        alpha=prof.alpha,
    )
