"""
Desk-scale synthetic dataset.

Each motion class moves a bright shape over a smooth textured background:

    translating  solid square drifting horizontally at a constant velocity
    oscillating  plus shape circling a fixed point
    expanding    hollow square ring growing about a fixed center
    static       solid square that never moves

Shapes are rendered with exact pixel coverage, so frame differences scale
linearly with displacement. Noise clips hold a still background whose one
quadrant steps up or down in brightness now and then (one large difference per
event, events at least a window apart); static clips hold sensor noise only.
"""
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import ndimage

from core.config import FilterDefaults, SyntheticDefaults
from core.frames.seeding import spawn_rng
from core.frames.stream import Frame, FrameStream, Modality, save_stream
from core.models.main import ClipEntry, DatasetIndex
from core.models.settings import SyntheticSpec
from core.utils.error_handling import ValidationError

logger = logging.getLogger(__name__)

INDEX_FILE = "labels.json"
CLIPS_DIR = "clips"

BLOB_INTENSITY = 0.85
TEXTURE_RANGE = (0.05, 0.30)

SQUARE_SIDE = 6.0
TRANSLATION_SPEED = 1.0  # px per frame
ORBIT_RADIUS = 9.0
ORBIT_PERIOD = 12.0  # frames
PLUS_ARM = 3.0
PLUS_THICKNESS = 2.0
RING_START_HALF = 5.0
RING_GROWTH = 0.4  # half-side growth per frame
RING_THICKNESS = 2.5

# spawn_rng keys
_CLIP_STREAM = 10
_BENCH_STREAM = 11
_CROPS_STREAM = 12


def _coverage_1d(lo: float, hi: float, n: int) -> np.ndarray:
    """Fraction of each unit pixel [i, i+1) covered by the interval [lo, hi)."""
    edges = np.arange(n, dtype=np.float64)
    return np.clip(np.minimum(edges + 1.0, hi) - np.maximum(edges, lo), 0.0, 1.0)


def rect_coverage(x0: float, y0: float, x1: float, y1: float, size: int) -> np.ndarray:
    return np.outer(_coverage_1d(y0, y1, size), _coverage_1d(x0, x1, size))


def square_mask(cx: float, cy: float, side: float, size: int) -> np.ndarray:
    h = side / 2.0
    return rect_coverage(cx - h, cy - h, cx + h, cy + h, size)


def plus_mask(cx: float, cy: float, size: int, arm: float = PLUS_ARM, thickness: float = PLUS_THICKNESS) -> np.ndarray:
    t = thickness / 2.0
    extent = arm + t
    horizontal = rect_coverage(cx - extent, cy - t, cx + extent, cy + t, size)
    vertical = rect_coverage(cx - t, cy - extent, cx + t, cy + extent, size)
    overlap = rect_coverage(cx - t, cy - t, cx + t, cy + t, size)
    return horizontal + vertical - overlap


def ring_mask(cx: float, cy: float, half: float, size: int, thickness: float = RING_THICKNESS) -> np.ndarray:
    outer = square_mask(cx, cy, 2.0 * half, size)
    inner_half = max(half - thickness, 0.0)
    inner = square_mask(cx, cy, 2.0 * inner_half, size) if inner_half > 0 else 0.0
    return outer - inner


def textured_background(size: int, rng: np.random.Generator) -> np.ndarray:
    smooth = ndimage.gaussian_filter(rng.random((size, size)), sigma=2.0)
    smooth = (smooth - smooth.min()) / max(smooth.max() - smooth.min(), 1e-12)
    low, high = TEXTURE_RANGE
    return low + (high - low) * smooth


@dataclass(frozen=True)
class MotionParams:
    """Per-clip trajectory; the generator's own oracle for blob positions."""
    pattern: str
    start: Tuple[float, float]
    velocity: Tuple[float, float] = (0.0, 0.0)
    phase: float = 0.0

    def center(self, t: int) -> Tuple[float, float]:
        x, y = self.start
        if self.pattern == "oscillating":
            angle = self.phase + 2.0 * math.pi * t / ORBIT_PERIOD
            return x + ORBIT_RADIUS * math.cos(angle), y + ORBIT_RADIUS * math.sin(angle)
        return x + self.velocity[0] * t, y + self.velocity[1] * t

    def mask(self, t: int, size: int) -> np.ndarray:
        cx, cy = self.center(t)
        if self.pattern == "oscillating":
            return plus_mask(cx, cy, size)
        if self.pattern == "expanding":
            return ring_mask(cx, cy, RING_START_HALF + RING_GROWTH * t, size)
        return square_mask(cx, cy, SQUARE_SIDE, size)


def sample_motion(pattern: str, size: int, frames: int, rng: np.random.Generator) -> MotionParams:
    mid = size / 2.0
    if pattern == "translating":
        direction = 1.0 if rng.random() < 0.5 else -1.0
        travel = TRANSLATION_SPEED * (frames - 1)
        margin = SQUARE_SIDE / 2.0 + 1.0
        start_x = margin if direction > 0 else size - margin
        start_x += direction * rng.uniform(0.0, max(size - 2 * margin - travel, 0.0))
        start_y = rng.uniform(margin, size - margin)
        return MotionParams(pattern, (start_x, start_y), (direction * TRANSLATION_SPEED, 0.0))
    if pattern == "oscillating":
        jitter = rng.uniform(-1.0, 1.0, 2)
        return MotionParams(pattern, (mid + jitter[0], mid + jitter[1]), phase=rng.uniform(0.0, 2.0 * math.pi))
    if pattern == "expanding":
        jitter = rng.uniform(-0.5, 0.5, 2)
        return MotionParams(pattern, (mid + jitter[0], mid + jitter[1]))
    if pattern == "static":
        return MotionParams(pattern, tuple(rng.uniform(size / 4.0, 3.0 * size / 4.0, 2)))
    raise ValidationError(f"Unknown synthetic pattern '{pattern}'", field="pattern")


def _to_stream(pixels: List[np.ndarray], source_id: str, fps: float, maxval: int) -> FrameStream:
    frames = tuple(
        Frame.from_samples(np.rint(np.clip(p, 0.0, 1.0) * maxval), maxval, int(round(i * 1000.0 / fps)))
        for i, p in enumerate(pixels)
    )
    return FrameStream(frames, source_id, Modality.SYNTHETIC)


def render_motion_clip(params: MotionParams, size: int, frames: int, sensor_noise: float,
                       rng: np.random.Generator, source_id: str, fps: float, maxval: int) -> FrameStream:
    background = textured_background(size, rng)
    pixels = []
    for t in range(frames):
        coverage = np.clip(params.mask(t, size), 0.0, 1.0)
        image = background + coverage * (BLOB_INTENSITY - background)
        pixels.append(image + rng.normal(0.0, sensor_noise, image.shape))
    return _to_stream(pixels, source_id, fps, maxval)


def step_events(frames: int, probability: float, min_gap: int, rng: np.random.Generator) -> List[int]:
    """Frames where a persistent step happens; at least one, spaced >= min_gap apart."""
    events: List[int] = []
    for t in range(1, frames):
        draw = rng.random()
        if draw < probability and (not events or t - events[-1] >= min_gap):
            events.append(t)
    if not events:
        events.append(frames // 2)
    return events


def render_noise_clip(size: int, frames: int, spec: SyntheticSpec, rng: np.random.Generator,
                      source_id: str, min_gap: int = FilterDefaults.WINDOW_SIZE,
                      events: Optional[List[int]] = None) -> FrameStream:
    background = textured_background(size, rng)
    events = step_events(frames, spec.spike_probability, min_gap, rng) if events is None else events
    quadrant = np.zeros((size, size))
    qy, qx = rng.integers(0, 2, 2)
    half = size // 2
    quadrant[qy * half:(qy + 1) * half, qx * half:(qx + 1) * half] = 1.0

    level = 0.0
    pixels = []
    for t in range(frames):
        if t in events:
            level = spec.spike_amplitude - level  # toggle on, then off
        image = background + level * quadrant
        pixels.append(image + rng.normal(0.0, spec.sensor_noise_std, image.shape))
    return _to_stream(pixels, source_id, spec.fps, spec.maxval)


def render_static_clip(size: int, frames: int, spec: SyntheticSpec, rng: np.random.Generator,
                       source_id: str) -> FrameStream:
    params = sample_motion("static", size, frames, rng)
    return render_motion_clip(params, size, frames, spec.sensor_noise_std, rng, source_id, spec.fps, spec.maxval)


def dataset_taxonomy(spec: SyntheticSpec) -> List[str]:
    return [SyntheticDefaults.CLASS_ACTIONS[c] for c in spec.classes]


def gen_synthetic(spec: SyntheticSpec, out_dir: Path) -> DatasetIndex:
    """
    Write frame containers under <out_dir>/clips/ and the index <out_dir>/labels.json.

    Every clip draws from its own random stream, so the dataset is
    byte-identical for a given spec.
    """
    out_dir = Path(out_dir)
    (out_dir / CLIPS_DIR).mkdir(parents=True, exist_ok=True)
    size, frames = spec.frame_size, spec.frames_per_clip
    clips: List[ClipEntry] = []
    labeled_per_class = max(1, int(round(spec.labeled_fraction * spec.clips_per_class)))
    clip_number = 0

    def emit(stream: FrameStream, entry: ClipEntry) -> None:
        save_stream(stream, out_dir / entry.clip)
        clips.append(entry)

    for label, pattern in enumerate(spec.classes):
        for i in range(spec.clips_per_class):
            rng = spawn_rng(spec.seed, _CLIP_STREAM, clip_number)
            clip_number += 1
            name = f"{CLIPS_DIR}/motion_{pattern}_{i:03d}"
            params = sample_motion(pattern, size, frames, rng)
            stream = render_motion_clip(params, size, frames, spec.sensor_noise_std, rng,
                                        name.split("/")[-1], spec.fps, spec.maxval)
            emit(stream, ClipEntry(clip=name, kind="motion", label=label, pattern=pattern,
                                   labeled=i < labeled_per_class))

    for i in range(spec.resolved_noise_clips):
        rng = spawn_rng(spec.seed, _CLIP_STREAM, clip_number)
        clip_number += 1
        name = f"{CLIPS_DIR}/noise_{i:03d}"
        emit(render_noise_clip(size, frames, spec, rng, name.split("/")[-1]), ClipEntry(clip=name, kind="noise"))

    static_label = spec.classes.index("static") if "static" in spec.classes else None
    for i in range(spec.resolved_static_clips):
        rng = spawn_rng(spec.seed, _CLIP_STREAM, clip_number)
        clip_number += 1
        name = f"{CLIPS_DIR}/static_{i:03d}"
        emit(render_static_clip(size, frames, spec, rng, name.split("/")[-1]),
             ClipEntry(clip=name, kind="static", label=static_label, pattern="static"))

    index = DatasetIndex(taxonomy=dataset_taxonomy(spec), fps=spec.fps, seed=spec.seed, clips=clips)
    (out_dir / INDEX_FILE).write_text(json.dumps(index.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8")
    logger.info(f"🧪 Generated {len(clips)} synthetic clips in {out_dir}")
    return index


def load_index(dataset_dir: Path) -> DatasetIndex:
    path = Path(dataset_dir) / INDEX_FILE
    if not path.is_file():
        raise ValidationError(f"Dataset index not found: {path}", field=str(path))
    return DatasetIndex.model_validate_json(path.read_text(encoding="utf-8"))


def filter_benchmark(seed: int, spec: Optional[SyntheticSpec] = None,
                     window_size: int = FilterDefaults.WINDOW_SIZE,
                     counts: Tuple[int, int, int] = (100, 50, 50)) -> List[Tuple[str, List[Frame]]]:
    """
    Labeled filter windows: (kind, frames) with kind in motion / noise / static.

    Noise windows contain exactly one step event.
    """
    spec = spec or SyntheticSpec(seed=seed)
    size = spec.frame_size
    motion_patterns = [p for p in spec.classes if p != "static"]
    windows: List[Tuple[str, List[Frame]]] = []
    n_motion, n_noise, n_static = counts

    for i in range(n_motion):
        rng = spawn_rng(seed, _BENCH_STREAM, 0, i)
        pattern = motion_patterns[i % len(motion_patterns)]
        params = sample_motion(pattern, size, window_size, rng)
        stream = render_motion_clip(params, size, window_size, spec.sensor_noise_std, rng,
                                    f"bench_motion_{i}", spec.fps, spec.maxval)
        windows.append(("motion", list(stream)))
    for i in range(n_noise):
        rng = spawn_rng(seed, _BENCH_STREAM, 1, i)
        event = int(rng.integers(1, window_size))
        stream = render_noise_clip(size, window_size, spec, rng, f"bench_noise_{i}", events=[event])
        windows.append(("noise", list(stream)))
    for i in range(n_static):
        rng = spawn_rng(seed, _BENCH_STREAM, 2, i)
        windows.append(("static", list(render_static_clip(size, window_size, spec, rng, f"bench_static_{i}"))))
    return windows


def person_enters_stream(seed: int, frames: int = 16, size: int = SyntheticDefaults.FRAME_SIZE,
                         decay: float = 0.96, static_tail: int = 0) -> FrameStream:
    """A square decelerating across the frame (gradually decaying differences), then optionally resting."""
    rng = spawn_rng(seed, _BENCH_STREAM, 3)
    background = textured_background(size, rng)
    side = 8.0
    pixels = []
    x, speed = side / 2.0 + 1.0, 1.4
    for t in range(frames + static_tail):
        coverage = square_mask(x, size / 2.0, side, size)
        image = background + coverage * (BLOB_INTENSITY - background)
        pixels.append(image + rng.normal(0.0, SyntheticDefaults.SENSOR_NOISE_STD, image.shape))
        if t < frames - 1:
            x += speed
            speed *= decay
    return _to_stream(pixels, "person_enters", SyntheticDefaults.FPS, SyntheticDefaults.MAXVAL)


def make_separable_crops(seed: int, per_class: int = 64, size: int = 32,
                         patterns: Tuple[str, ...] = ("translating", "oscillating", "expanding"),
                         noise_std: float = 0.02) -> Tuple[np.ndarray, np.ndarray]:
    """
    Box-normalized crops of each class's shape with small jitter and noise,
    as capture would produce them; linearly separable by construction.
    """
    rng = spawn_rng(seed, _CROPS_STREAM)
    crops, labels = [], []
    mid = size / 2.0
    for label, pattern in enumerate(patterns):
        for _ in range(per_class):
            cx, cy = mid + rng.uniform(-1.0, 1.0, 2)
            scale = rng.uniform(0.85, 1.0)
            if pattern == "oscillating":
                mask = plus_mask(cx, cy, size, arm=size * 0.38 * scale, thickness=size * 0.25 * scale)
            elif pattern == "expanding":
                mask = ring_mask(cx, cy, size * 0.42 * scale, size, thickness=size * 0.12)
            else:
                mask = square_mask(cx, cy, size * 0.8 * scale, size)
            background = rng.uniform(*TEXTURE_RANGE)
            image = background + np.clip(mask, 0.0, 1.0) * (BLOB_INTENSITY - background)
            crops.append(np.clip(image + rng.normal(0.0, noise_std, image.shape), 0.0, 1.0))
            labels.append(label)
    return np.stack(crops), np.asarray(labels, dtype=int)
