"""Box expansion and bilinear crop resampling."""
import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy import ndimage

from core.action_capture.coherence import BoxTrack, best_box, coherence_filter
from core.action_capture.detector import DetectorPort, detect_frames
from core.config import CaptureDefaults, FrameDefaults
from core.frames.stream import Frame, FrameStream
from core.models.main import BoundingBox, Segment
from core.models.settings import CaptureConfig
from core.utils.error_handling import ValidationError

logger = logging.getLogger(__name__)


def expand_box(box: BoundingBox, width: int, height: int,
               margin: float = CaptureDefaults.CROP_MARGIN) -> Tuple[float, float, float, float]:
    """(x0, y0, x1, y1) after adding `margin` of the extent on every side, clamped to the frame."""
    half_w = box.w * (1.0 + 2.0 * margin) / 2.0
    half_h = box.h * (1.0 + 2.0 * margin) / 2.0
    x0 = max(0.0, box.cx - half_w)
    y0 = max(0.0, box.cy - half_h)
    x1 = min(float(width), box.cx + half_w)
    y1 = min(float(height), box.cy + half_h)
    if x1 <= x0 or y1 <= y0:
        raise ValidationError(f"Box {box} does not intersect a {width}x{height} frame", field="box")
    return x0, y0, x1, y1


def resample_region(pixels: np.ndarray, region: Tuple[float, float, float, float],
                    out_size: Tuple[int, int]) -> np.ndarray:
    """
    Bilinear resample of a pixel-edge region onto an (H, W) grid.

    Output pixel centers map to source pixel centers; samples beyond the outer
    pixel centers take the edge value.
    """
    x0, y0, x1, y1 = region
    out_h, out_w = out_size
    ys = y0 + (np.arange(out_h) + 0.5) * (y1 - y0) / out_h - 0.5
    xs = x0 + (np.arange(out_w) + 0.5) * (x1 - x0) / out_w - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    crop = ndimage.map_coordinates(pixels, [grid_y, grid_x], order=1, mode="nearest")
    return np.clip(crop, 0.0, 1.0)


def crop_track(stream: FrameStream, track: BoxTrack,
               out_size: Tuple[int, int] = CaptureDefaults.CROP_SIZE,
               margin: float = CaptureDefaults.CROP_MARGIN, offset: int = 0) -> FrameStream:
    """
    Crops of every frame inside the track's sub-tracks, in frame order.

    Args:
        stream: Source frames
        track: Coherent sub-tracks with indices relative to `offset`
        out_size: (H, W) of each crop
        margin: Fractional margin added on each side of a box
        offset: Stream index of the track's first frame

    Raises:
        ValidationError if the track has no sub-tracks or indexes past the stream
    """
    if not track.subtracks:
        raise ValidationError("Cannot crop an empty track", field="track")

    crops = []
    for i in track.frame_indices():
        index = offset + i
        if not 0 <= index < len(stream):
            raise ValidationError(f"Track index {index} outside stream of {len(stream)}", field="track")
        frame = stream[index]
        region = expand_box(track.boxes[i], frame.width, frame.height, margin)
        crops.append(Frame(resample_region(frame.pixels, region, out_size),
                           frame.timestamp_ms, frame.modality, FrameDefaults.DEFAULT_MAXVAL))

    return FrameStream(tuple(crops), stream.source_id, stream.modality)


@dataclass(frozen=True)
class CaptureResult:
    """Capture output for one retained segment."""
    source_id: str
    segment: Segment
    track: BoxTrack
    crops: FrameStream

    @property
    def frame_indices(self) -> List[int]:
        return [self.segment.start + i for i in self.track.frame_indices()]


def capture_segment(stream: FrameStream, segment: Segment, detector: DetectorPort,
                    config: CaptureConfig, workers: int = 1) -> CaptureResult:
    """Detect, enforce coherence and crop one retained segment; an empty track yields no crops."""
    per_frame = detect_frames(stream, detector, segment.start, segment.end, workers)
    chosen = [best_box(boxes, config.coherence.min_confidence) for boxes in per_frame]
    track = coherence_filter(chosen, config.coherence, frame_size=(stream.width, stream.height))

    if track.subtracks:
        crops = crop_track(stream, track, tuple(config.crop_size), config.crop_margin, offset=segment.start)
    else:
        crops = FrameStream((), stream.source_id, stream.modality)

    logger.info(
        f"✂️ {stream.source_id} [{segment.start}, {segment.end}): "
        f"{len(track.subtracks)} sub-track(s), {len(crops)} crop(s)"
    )
    return CaptureResult(source_id=stream.source_id, segment=segment, track=track, crops=crops)
