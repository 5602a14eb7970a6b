"""
Window-based sensitivity filtering.

A window of w frames yields w-1 consecutive differences. A difference is
significant when it exceeds sigma times the largest difference in its window,
so the decision is scale free. Sustained motion produces several significant
differences; an isolated glitch produces one.
"""
import logging
from typing import List, Sequence

import numpy as np

from core.frames.stream import Frame, FrameStream
from core.models.main import DiffWindow, RetainedSegments, Segment, WindowDiagnostic
from core.models.settings import FilterConfig
from core.utils.error_handling import ValidationError

logger = logging.getLogger(__name__)


def pixel_diff(a: Frame, b: Frame) -> float:
    """Mean absolute per-pixel intensity difference between two frames."""
    if a.shape != b.shape:
        raise ValidationError(f"Frame dimension mismatch: {a.shape} vs {b.shape}", field="frames")
    return float(np.mean(np.abs(a.pixels - b.pixels)))


def consecutive_diffs(stream: FrameStream) -> np.ndarray:
    """D_t for t = 1..n-1, computed once for the whole stream."""
    if len(stream) < 2:
        return np.zeros(0, dtype=np.float64)
    stack = stream.as_array()
    return np.abs(np.diff(stack, axis=0)).mean(axis=(1, 2))


def score_diffs(diffs: Sequence[float], sigma: float) -> DiffWindow:
    """Score precomputed differences; useful for injected test windows."""
    values = np.asarray(diffs, dtype=np.float64)
    if values.size == 0 or np.any(values < 0):
        raise ValidationError("Differences must be a non-empty list of non-negative values", field="diffs")
    d_max = float(values.max())
    if d_max == 0.0:
        scores = np.zeros(values.size, dtype=int)
    else:
        scores = (values > sigma * d_max).astype(int)
    return DiffWindow(
        diffs=values.tolist(),
        d_max=d_max,
        scores=scores.tolist(),
        decision_sum=int(scores.sum())
    )


def score_window(window: Sequence[Frame], config: FilterConfig) -> DiffWindow:
    """
    Score exactly `config.window_size` consecutive frames.

    Raises:
        ValidationError if the window has the wrong length
    """
    if len(window) != config.window_size:
        raise ValidationError(
            f"Window has {len(window)} frames, expected {config.window_size}", field="window")
    diffs = [pixel_diff(a, b) for a, b in zip(window, window[1:])]
    return score_diffs(diffs, config.sigma)


def is_retained(window: DiffWindow, config: FilterConfig) -> bool:
    """Activity floor first, then the sustained-motion test (or its literal inverse)."""
    if window.mean_diff < config.activity_floor:
        return False
    sustained = window.decision_sum >= config.min_significant
    return not sustained if config.invert_rule else sustained


def merge_windows(starts: Sequence[int], window_size: int) -> List[Segment]:
    """Union of [s, s+w) intervals for ascending starts; touching intervals merge."""
    segments: List[Segment] = []
    current_start = current_end = None
    for start in starts:
        end = start + window_size
        if current_end is not None and start <= current_end:
            current_end = max(current_end, end)
            continue
        if current_end is not None:
            segments.append(Segment(start=current_start, end=current_end))
        current_start, current_end = start, end
    if current_end is not None:
        segments.append(Segment(start=current_start, end=current_end))
    return segments


def filter_stream(stream: FrameStream, config: FilterConfig, debug: bool = False) -> RetainedSegments:
    """
    Slide a window of `config.window_size` frames with stride 1 and keep
    behavior-relevant windows, merged into maximal segments.

    Args:
        stream: Source frames
        config: Window size, sigma, N, activity floor and rule polarity
        debug: Attach per-window diagnostics to the result

    Returns:
        RetainedSegments over the source stream's frame indices

    Raises:
        ValidationError if the stream is shorter than the window
    """
    w = config.window_size
    if len(stream) < w:
        raise ValidationError(f"Stream '{stream.source_id}' has {len(stream)} frames, window needs {w}",
                              field="stream")

    diffs = consecutive_diffs(stream)
    retained_starts = []
    diagnostics = []

    for start in range(len(stream) - w + 1):
        window = score_diffs(diffs[start:start + w - 1], config.sigma)
        keep = is_retained(window, config)
        if keep:
            retained_starts.append(start)
        if debug:
            diagnostics.append(WindowDiagnostic(
                start=start,
                diffs=window.diffs,
                d_max=window.d_max,
                scores=window.scores,
                decision_sum=window.decision_sum,
                mean_diff=window.mean_diff,
                retained=keep
            ))

    segments = merge_windows(retained_starts, w)
    total_windows = len(stream) - w + 1
    logger.info(
        f"🎞️ {stream.source_id}: {len(retained_starts)}/{total_windows} windows retained "
        f"-> {len(segments)} segment(s)"
    )
    return RetainedSegments(stream_length=len(stream), window_size=w, segments=segments, diagnostics=diagnostics)


def retained_fraction(result: RetainedSegments) -> float:
    """Share of source frames kept by the filter."""
    if result.stream_length == 0:
        return 0.0
    return result.retained_frames / result.stream_length
