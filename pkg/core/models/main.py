from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator


class ManifestEntry(BaseModel):
    file: str = Field(..., description="Frame file path relative to the container directory")
    timestamp_ms: int = Field(..., ge=0, description="Capture time in milliseconds")


class StreamManifest(BaseModel):
    source_id: str = Field(..., description="Identifier of the recording")
    modality: str = Field(..., description="depth | thermal | infrared | synthetic")
    frames: List[ManifestEntry] = Field(default_factory=list, description="Frames in iteration order")


class Segment(BaseModel):
    start: int = Field(..., ge=0, description="First frame index (inclusive)")
    end: int = Field(..., description="Last frame index (exclusive)")

    @model_validator(mode='after')
    def non_empty(self):
        if self.end <= self.start:
            raise ValueError(f"Segment end {self.end} must be greater than start {self.start}")
        return self

    def __len__(self) -> int:
        return self.end - self.start


class DiffWindow(BaseModel):
    diffs: List[float] = Field(..., description="Consecutive pixel differences D_t")
    d_max: float = Field(..., ge=0.0, description="Largest difference in the window")
    scores: List[int] = Field(..., description="1 where a difference is significant")
    decision_sum: int = Field(..., ge=0, description="C(S), number of significant differences")

    @property
    def mean_diff(self) -> float:
        return float(np.mean(self.diffs)) if self.diffs else 0.0


class WindowDiagnostic(BaseModel):
    start: int = Field(..., description="Index of the window's first frame")
    diffs: List[float]
    d_max: float
    scores: List[int]
    decision_sum: int
    mean_diff: float
    retained: bool


class RetainedSegments(BaseModel):
    stream_length: int = Field(..., ge=0)
    window_size: int = Field(..., ge=3)
    segments: List[Segment] = Field(default_factory=list, description="Disjoint sorted half-open intervals")
    diagnostics: List[WindowDiagnostic] = Field(default_factory=list, description="Per-window detail (debug only)")

    @model_validator(mode='after')
    def sorted_and_disjoint(self):
        previous_end = -1
        for segment in self.segments:
            if segment.start <= previous_end or segment.end > self.stream_length:
                raise ValueError("Retained segments must be sorted, disjoint and within stream bounds")
            previous_end = segment.end
        return self

    @property
    def retained_frames(self) -> int:
        return sum(len(s) for s in self.segments)


class BoundingBox(BaseModel):
    cx: float = Field(..., description="Box center x in pixels")
    cy: float = Field(..., description="Box center y in pixels")
    w: float = Field(..., gt=0, description="Box width in pixels")
    h: float = Field(..., gt=0, description="Box height in pixels")
    p: float = Field(..., ge=0.0, le=1.0, description="Detection confidence for the person class")

    def geometry(self) -> np.ndarray:
        """(cx, cy, w, h) as a float64 vector; confidence is not a displacement."""
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)

    def clamped(self, width: int, height: int) -> "BoundingBox":
        x0 = max(0.0, self.cx - self.w / 2)
        y0 = max(0.0, self.cy - self.h / 2)
        x1 = min(float(width), self.cx + self.w / 2)
        y1 = min(float(height), self.cy + self.h / 2)
        if x1 <= x0 or y1 <= y0:
            raise ValueError(f"Box {self} lies outside a {width}x{height} frame")
        return BoundingBox(cx=(x0 + x1) / 2, cy=(y0 + y1) / 2, w=x1 - x0, h=y1 - y0, p=self.p)


class FrameBoxes(BaseModel):
    index: int = Field(..., ge=0, description="Frame index in the source stream")
    boxes: List[BoundingBox] = Field(default_factory=list, description="Detections, descending by p")


class PseudoLabelRecord(BaseModel):
    frame_index: int = Field(..., ge=0)
    probabilities: List[float] = Field(..., description="Full class distribution")
    top_k: List[Tuple[int, float]] = Field(..., description="(class index, probability), descending")

    @field_validator('probabilities')
    @classmethod
    def is_distribution(cls, v):
        if not v:
            raise ValueError("probabilities cannot be empty")
        if min(v) < 0.0 or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError("probabilities must be non-negative and sum to 1")
        return v

    @field_validator('top_k')
    @classmethod
    def descending(cls, v):
        if not v:
            raise ValueError("top_k needs at least one entry")
        probs = [p for _, p in v]
        if any(a < b for a, b in zip(probs, probs[1:])):
            raise ValueError("top_k must be sorted by descending probability")
        return v


class FrameState(BaseModel):
    frame_index: int = Field(..., ge=0)
    top_k: List[Tuple[str, float]] = Field(..., min_length=1, description="(action, probability), descending")
    uncertain: bool = Field(..., description="True when the top-1 probability is below p_min")

    @property
    def action(self) -> str:
        return self.top_k[0][0]

    @property
    def probability(self) -> float:
        return self.top_k[0][1]


class ActionSegment(BaseModel):
    start_index: int = Field(..., ge=0)
    end_index: int = Field(..., description="Exclusive")
    action: str
    mean_probability: float = Field(..., ge=0.0, le=1.0)
    candidates: List[Tuple[str, float]] = Field(default_factory=list,
                                                description="Segment-mean top-k actions, descending")

    @model_validator(mode='after')
    def non_empty(self):
        if self.end_index <= self.start_index:
            raise ValueError("ActionSegment must cover at least one frame")
        return self


class ChatExchange(BaseModel):
    system: str
    user: str
    response: str = Field(..., min_length=1)
    latency_ms: float = Field(..., ge=0.0)
    attempts: int = Field(1, ge=1)
    model: Optional[str] = None


class CaptionRecord(BaseModel):
    source_id: str
    caption: str
    segments: List[ActionSegment]
    prompt_sha256: str


class ClipEntry(BaseModel):
    clip: str = Field(..., description="Clip directory relative to the dataset root")
    kind: str = Field(..., description="motion | noise | static")
    label: Optional[int] = Field(None, description="Taxonomy index of the clip's action")
    pattern: Optional[str] = Field(None, description="Synthetic motion pattern")
    labeled: bool = Field(False, description="True when the label may be used for training")


class DatasetIndex(BaseModel):
    taxonomy: List[str] = Field(..., min_length=1)
    fps: float = Field(..., gt=0)
    seed: int
    clips: List[ClipEntry] = Field(default_factory=list)


class TimingRow(BaseModel):
    round: int
    client: int
    compute_ms: float
    comm_ms: float
    wait_ms: float


class StageReport(BaseModel):
    name: str
    counts: Dict[str, Any] = Field(default_factory=dict)
    skipped: bool = False
    note: Optional[str] = None


class PipelineReport(BaseModel):
    seed: int
    dataset: str
    stages: List[StageReport] = Field(default_factory=list)
    captions: List[CaptionRecord] = Field(default_factory=list)
    timings_ms: Dict[str, float] = Field(default_factory=dict, description="Wall-clock fields")
