"""
Frame and FrameStream types plus the on-disk frame container.

Container layout: <dir>/manifest.json + <dir>/frames/NNNNNN.pgm. The manifest's
frame order is the iteration order, regardless of file names.
"""
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from core.config import FrameDefaults
from core.frames.pgm import read_pgm, write_pgm
from core.models.main import ManifestEntry, StreamManifest
from core.utils.error_handling import FrameFormatError, ValidationError

logger = logging.getLogger(__name__)


class Modality(str, Enum):
    DEPTH = "depth"
    THERMAL = "thermal"
    INFRARED = "infrared"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True, eq=False)
class Frame:
    """One grayscale frame with intensities normalized to [0, 1]."""
    pixels: np.ndarray
    timestamp_ms: int
    modality: Modality = Modality.SYNTHETIC
    maxval: int = FrameDefaults.DEFAULT_MAXVAL

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=np.float64)
        if pixels.ndim != 2:
            raise ValidationError(f"Frame pixels must be 2-D, got shape {pixels.shape}", field="pixels")
        if min(pixels.shape) < FrameDefaults.MIN_FRAME_SIDE:
            raise ValidationError(
                f"Frame {pixels.shape[1]}x{pixels.shape[0]} is smaller than "
                f"{FrameDefaults.MIN_FRAME_SIDE}x{FrameDefaults.MIN_FRAME_SIDE}", field="pixels")
        if not np.all(np.isfinite(pixels)) or pixels.min() < 0.0 or pixels.max() > 1.0:
            raise ValidationError("Frame intensities must be finite and within [0, 1]", field="pixels")
        if self.timestamp_ms < 0:
            raise ValidationError(f"Negative timestamp {self.timestamp_ms}", field="timestamp_ms")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "modality", Modality(self.modality))

    @classmethod
    def from_samples(cls, samples: np.ndarray, maxval: int, timestamp_ms: int,
                     modality: Modality = Modality.SYNTHETIC) -> "Frame":
        """Normalize integer samples stored at bit depth `maxval`."""
        if not 1 <= maxval <= FrameDefaults.MAX_MAXVAL:
            raise ValidationError(f"Unsupported maxval {maxval}", field="maxval")
        return cls(np.asarray(samples, dtype=np.float64) / float(maxval), timestamp_ms, modality, maxval)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape

    def counts(self) -> np.ndarray:
        """Stored integer sample values at this frame's bit depth."""
        return np.rint(self.pixels * self.maxval).astype(np.uint16)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return (self.timestamp_ms == other.timestamp_ms and self.modality == other.modality
                and self.maxval == other.maxval and np.array_equal(self.pixels, other.pixels))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FrameStream:
    """Ordered frames of one recording; timestamps strictly increase."""
    frames: Tuple[Frame, ...]
    source_id: str
    modality: Modality = Modality.SYNTHETIC

    def __post_init__(self):
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "modality", Modality(self.modality))
        if not frames:
            return
        shape = frames[0].shape
        for previous, frame in zip(frames, frames[1:]):
            if frame.timestamp_ms <= previous.timestamp_ms:
                raise FrameFormatError(
                    f"Non-monotone timestamps in '{self.source_id}': "
                    f"{previous.timestamp_ms} then {frame.timestamp_ms}")
        for frame in frames:
            if frame.shape != shape:
                raise FrameFormatError(
                    f"Frame dimension mismatch in '{self.source_id}': {frame.shape} vs {shape}")
            if frame.modality != self.modality:
                raise FrameFormatError(
                    f"Modality mismatch in '{self.source_id}': {frame.modality.value} vs {self.modality.value}")

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[Frame]:
        return iter(self.frames)

    def __getitem__(self, index: int) -> Frame:
        return self.frames[index]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FrameStream):
            return NotImplemented
        return (self.source_id == other.source_id and self.modality == other.modality
                and self.frames == other.frames)

    __hash__ = None

    @property
    def width(self) -> Optional[int]:
        return self.frames[0].width if self.frames else None

    @property
    def height(self) -> Optional[int]:
        return self.frames[0].height if self.frames else None

    def segment(self, start: int, end: int) -> "FrameStream":
        """Half-open sub-stream [start, end)."""
        return FrameStream(self.frames[start:end], self.source_id, self.modality)

    def as_array(self) -> np.ndarray:
        """(n, H, W) float64 stack of all frames."""
        if not self.frames:
            return np.zeros((0, 0, 0), dtype=np.float64)
        return np.stack([f.pixels for f in self.frames])


@dataclass(frozen=True, eq=False)
class LabeledClip:
    """A non-empty stream segment with its taxonomy class index."""
    frames: FrameStream
    label: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.frames) == 0:
            raise ValidationError("A labeled clip needs at least one frame", field="frames")
        if self.label < 0:
            raise ValidationError(f"Invalid class index {self.label}", field="label")

    def check_taxonomy(self, num_classes: int) -> None:
        if self.label >= num_classes:
            raise ValidationError(
                f"Label {self.label} is outside a taxonomy of {num_classes} actions", field="label")


def frame_file_name(index: int) -> str:
    return f"{index:0{FrameDefaults.FRAME_NAME_DIGITS}d}.pgm"


def load_stream(path: Union[str, Path]) -> FrameStream:
    """
    Load a frame container directory.

    Raises:
        FrameFormatError: missing manifest, missing frame, dimension mismatch,
            non-monotone timestamps or malformed PGM data
    """
    root = Path(path)
    manifest_path = root / FrameDefaults.MANIFEST_NAME
    if not manifest_path.is_file():
        raise FrameFormatError(f"missing manifest: {manifest_path}", path=str(manifest_path))

    try:
        manifest = StreamManifest.model_validate(json.loads(manifest_path.read_text(encoding="utf-8")))
        modality = Modality(manifest.modality)
    except (json.JSONDecodeError, PydanticValidationError, ValueError) as e:
        raise FrameFormatError(f"Malformed manifest {manifest_path}: {e}", path=str(manifest_path)) from e

    frames = []
    for entry in manifest.frames:
        counts, maxval = read_pgm(root / entry.file)
        frames.append(Frame.from_samples(counts, maxval, entry.timestamp_ms, modality))

    stream = FrameStream(tuple(frames), manifest.source_id, modality)
    logger.debug(f"Loaded {len(stream)} frames from {root}")
    return stream


def save_stream(stream: FrameStream, path: Union[str, Path]) -> None:
    """Write `stream` as a frame container; lossless for frames on their maxval grid."""
    root = Path(path)
    frames_dir = root / FrameDefaults.FRAMES_DIR
    frames_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for index, frame in enumerate(stream):
        name = frame_file_name(index)
        write_pgm(frames_dir / name, frame.counts(), frame.maxval)
        entries.append(ManifestEntry(file=f"{FrameDefaults.FRAMES_DIR}/{name}", timestamp_ms=frame.timestamp_ms))

    manifest = StreamManifest(source_id=stream.source_id, modality=stream.modality.value, frames=entries)
    (root / FrameDefaults.MANIFEST_NAME).write_text(
        json.dumps(manifest.model_dump(), indent=2) + "\n", encoding="utf-8")
    logger.debug(f"Saved {len(stream)} frames to {root}")
