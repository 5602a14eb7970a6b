"""
Crop directories shared by the capture, training and pseudo-labeling commands.

Layout: `<dir>/crops.json` plus one frame container per captured segment.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from pydantic import ValidationError as PydanticValidationError

from core.action_capture.cropping import CaptureResult
from core.frames.stream import load_stream, save_stream
from core.models.main import Segment
from core.utils.error_handling import FrameFormatError, ValidationError

logger = logging.getLogger(__name__)

CROP_INDEX_FILE = "crops.json"


class CropEntry(BaseModel):
    container: str = Field(..., description="Container directory relative to the crop directory")
    source_id: str
    segment: Segment
    crops: int = Field(..., ge=0)
    label: Optional[int] = Field(None, description="Class index when the source clip is labeled")
    frame_indices: List[int] = Field(default_factory=list, description="Source frame index of every crop")


class CropIndex(BaseModel):
    entries: List[CropEntry] = Field(default_factory=list)


@dataclass
class CropSet:
    crops: np.ndarray  # (n, H, W)
    labels: np.ndarray  # (n,), -1 where unknown
    frame_indices: np.ndarray  # (n,) source frame of each crop
    entries: List[CropEntry]


def container_name(source_id: str, segment: Segment) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in source_id)
    return f"{safe}_{segment.start:06d}_{segment.end:06d}"


def read_crop_index(directory: Path) -> CropIndex:
    path = Path(directory) / CROP_INDEX_FILE
    if not path.is_file():
        return CropIndex()
    try:
        return CropIndex.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, PydanticValidationError) as e:
        raise FrameFormatError(f"Malformed crop index {path}: {e}", path=str(path)) from e


def save_captures(directory: Path, captures: Sequence[CaptureResult], label: Optional[int] = None) -> CropIndex:
    """
    Write every non-empty capture as a container and merge it into the index.

    Re-capturing the same (source, segment) replaces the earlier entry.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = read_crop_index(directory)
    by_name = {entry.container: entry for entry in index.entries}

    for capture in captures:
        if len(capture.crops) == 0:
            continue
        name = container_name(capture.source_id, capture.segment)
        save_stream(capture.crops, directory / name)
        by_name[name] = CropEntry(container=name, source_id=capture.source_id, segment=capture.segment,
                                  crops=len(capture.crops), label=label,
                                  frame_indices=capture.frame_indices)

    index = CropIndex(entries=[by_name[name] for name in sorted(by_name)])
    (directory / CROP_INDEX_FILE).write_text(json.dumps(index.model_dump(), indent=2) + "\n", encoding="utf-8")
    logger.info(f"💾 Crop directory {directory}: {len(index.entries)} container(s)")
    return index


def load_crop_set(directory: Path, labeled_only: bool = False, source_id: Optional[str] = None) -> CropSet:
    """
    Stack all crops of a directory in index order, optionally of one source only.

    Entries written without frame indices number their crops from the segment start.

    Raises:
        ValidationError when the directory holds no crops
        FrameFormatError on malformed containers
    """
    directory = Path(directory)
    entries = [
        e for e in read_crop_index(directory).entries
        if (not labeled_only or e.label is not None) and (source_id is None or e.source_id == source_id)
    ]
    arrays, labels, frame_indices = [], [], []
    for entry in entries:
        stack = load_stream(directory / entry.container).as_array()
        indices = entry.frame_indices or list(range(entry.segment.start, entry.segment.start + len(stack)))
        if len(indices) != len(stack):
            raise FrameFormatError(f"{entry.container}: {len(indices)} frame indices for {len(stack)} crops",
                                   path=str(directory / entry.container))
        arrays.append(stack)
        labels.append(np.full(len(stack), -1 if entry.label is None else entry.label, dtype=int))
        frame_indices.append(np.asarray(indices, dtype=int))

    if not arrays:
        raise ValidationError(f"No crops found in {directory}", field=str(directory))
    return CropSet(crops=np.concatenate(arrays), labels=np.concatenate(labels),
                   frame_indices=np.concatenate(frame_indices), entries=entries)
