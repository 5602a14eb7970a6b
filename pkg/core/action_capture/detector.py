"""
Person detectors behind a small port.

`BlobDetector` is the built-in brute-force detector (background subtraction
plus connected components). `PrecomputedDetector` serves boxes produced by an
external model from a boxes.jsonl file.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Protocol

import numpy as np
from scipy import ndimage

from core.config import CaptureDefaults
from core.frames.jsonl import read_jsonl, write_jsonl
from core.frames.stream import Frame, FrameStream
from core.models.main import BoundingBox, FrameBoxes
from core.utils.error_handling import ValidationError

logger = logging.getLogger(__name__)

# 4-connectivity
_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


class DetectorPort(Protocol):
    def detect(self, frame: Frame, index: int) -> List[BoundingBox]:
        """Boxes for the frame at stream position `index`, descending by p."""
        ...


def blob_detect(frame: Frame, background: Frame, threshold: float,
                min_area: int = 1) -> List[BoundingBox]:
    """
    Foreground components of |frame - background| > threshold.

    Each 4-connected component becomes its tight box with p = area / box area.
    Boxes use pixel-edge coordinates, so a component covering columns 2..5
    has cx = 4.0 and w = 4. Largest component first.
    """
    if frame.shape != background.shape:
        raise ValidationError(f"Frame {frame.shape} and background {background.shape} differ", field="background")

    mask = np.abs(frame.pixels - background.pixels) > threshold
    labels, count = ndimage.label(mask, structure=_FOUR_CONNECTED)
    if count == 0:
        return []

    areas = np.bincount(labels.ravel(), minlength=count + 1)
    candidates = []
    for label_id, slices in enumerate(ndimage.find_objects(labels), start=1):
        if slices is None or areas[label_id] < min_area:
            continue
        rows, cols = slices
        h = rows.stop - rows.start
        w = cols.stop - cols.start
        box = BoundingBox(
            cx=cols.start + w / 2.0,
            cy=rows.start + h / 2.0,
            w=float(w),
            h=float(h),
            p=float(areas[label_id]) / float(w * h)
        )
        candidates.append((-int(areas[label_id]), rows.start, cols.start, box))

    candidates.sort(key=lambda c: c[:3])
    return [c[3] for c in candidates]


def temporal_median_background(stream: FrameStream,
                               frame_count: int = CaptureDefaults.BACKGROUND_FRAMES) -> Frame:
    """Per-pixel median of the first min(frame_count, len) frames."""
    if len(stream) == 0:
        raise ValidationError("Cannot estimate a background from an empty stream", field="stream")
    head = stream.as_array()[:min(frame_count, len(stream))]
    first = stream[0]
    return Frame(np.median(head, axis=0), first.timestamp_ms, first.modality, first.maxval)


class BlobDetector:
    def __init__(self, background: Frame, threshold: float = CaptureDefaults.BLOB_THRESHOLD,
                 min_area: int = CaptureDefaults.BLOB_MIN_AREA):
        self.background = background
        self.threshold = threshold
        self.min_area = min_area

    @classmethod
    def for_stream(cls, stream: FrameStream, threshold: float = CaptureDefaults.BLOB_THRESHOLD,
                   min_area: int = CaptureDefaults.BLOB_MIN_AREA,
                   background_frames: int = CaptureDefaults.BACKGROUND_FRAMES) -> "BlobDetector":
        return cls(temporal_median_background(stream, background_frames), threshold, min_area)

    def detect(self, frame: Frame, index: int) -> List[BoundingBox]:
        boxes = blob_detect(frame, self.background, self.threshold, self.min_area)
        # Port contract: descending confidence
        return sorted(boxes, key=lambda b: -b.p)


class PrecomputedDetector:
    """Serves externally computed boxes keyed by frame index."""

    def __init__(self, boxes: Dict[int, List[BoundingBox]]):
        self.boxes = {index: sorted(items, key=lambda b: -b.p) for index, items in boxes.items()}

    @classmethod
    def from_file(cls, path: Path) -> "PrecomputedDetector":
        records = read_jsonl(path, FrameBoxes)
        logger.info(f"📦 Loaded precomputed boxes for {len(records)} frames from {path}")
        return cls({record.index: list(record.boxes) for record in records})

    def detect(self, frame: Frame, index: int) -> List[BoundingBox]:
        return list(self.boxes.get(index, []))


def detect_frames(stream: FrameStream, detector: DetectorPort, start: int = 0,
                  end: Optional[int] = None, workers: int = 1) -> List[List[BoundingBox]]:
    """Run the detector over stream[start:end]; output order never depends on `workers`."""
    end = len(stream) if end is None else end
    indices = range(start, end)
    if workers <= 1:
        return [detector.detect(stream[i], i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: detector.detect(stream[i], i), indices))


def save_boxes(path: Path, per_frame: Iterable[FrameBoxes]) -> int:
    return write_jsonl(path, per_frame)
