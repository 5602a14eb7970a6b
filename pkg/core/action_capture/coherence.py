"""Temporal coherence of per-frame person boxes."""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.models.main import BoundingBox, Segment
from core.models.settings import CoherenceConfig
from core.utils.error_handling import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoxTrack:
    """One optional box per frame plus the coherent sub-tracks (half-open, relative indices)."""
    boxes: Tuple[Optional[BoundingBox], ...]
    subtracks: Tuple[Segment, ...]
    epsilon: float

    def frame_indices(self) -> List[int]:
        return [i for s in self.subtracks for i in range(s.start, s.end)]

    @property
    def covered_frames(self) -> int:
        return sum(len(s) for s in self.subtracks)


def best_box(boxes: Sequence[BoundingBox], min_confidence: float) -> Optional[BoundingBox]:
    """Highest-confidence box at or above `min_confidence`; earliest wins ties."""
    best = None
    for box in boxes:
        if box.p >= min_confidence and (best is None or box.p > best.p):
            best = box
    return best


def box_displacement(a: BoundingBox, b: BoundingBox) -> float:
    """Euclidean norm of the (cx, cy, w, h) difference."""
    return float(np.linalg.norm(a.geometry() - b.geometry()))


def coherence_filter(boxes: Sequence[Optional[BoundingBox]], config: CoherenceConfig,
                     frame_size: Optional[Tuple[int, int]] = None) -> BoxTrack:
    """
    Split a per-frame box sequence into maximal coherent sub-tracks.

    A sub-track breaks where a frame has no box or where consecutive boxes move
    by epsilon or more.

    Args:
        boxes: Best box per frame (None where nothing passed min_confidence)
        config: Coherence settings; epsilon None means a fraction of the diagonal
        frame_size: (width, height), required when epsilon is relative
    """
    if config.epsilon is None and frame_size is None:
        raise ConfigurationError("A relative epsilon needs the frame size", field="capture.coherence.epsilon")
    epsilon = config.resolve_epsilon(*frame_size) if config.epsilon is None else config.epsilon

    subtracks: List[Segment] = []
    start = None
    for i, box in enumerate(boxes):
        if box is None:
            if start is not None:
                subtracks.append(Segment(start=start, end=i))
                start = None
            continue
        if start is None:
            start = i
        elif box_displacement(boxes[i - 1], box) >= epsilon:
            subtracks.append(Segment(start=start, end=i))
            start = i
    if start is not None:
        subtracks.append(Segment(start=start, end=len(boxes)))

    logger.debug(f"Coherence: {len(subtracks)} sub-track(s) over {len(boxes)} frames (ε={epsilon:.2f})")
    return BoxTrack(boxes=tuple(boxes), subtracks=tuple(subtracks), epsilon=epsilon)
