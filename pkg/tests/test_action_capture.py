"""
Tests for the detector port, box coherence and cropping.
"""
import math

import numpy as np
import pytest

from core.action_capture.coherence import best_box, box_displacement, coherence_filter
from core.action_capture.cropping import capture_segment, crop_track, expand_box, resample_region
from core.action_capture.detector import (
    BlobDetector,
    PrecomputedDetector,
    blob_detect,
    detect_frames,
    save_boxes,
    temporal_median_background,
)
from core.frames.stream import Frame
from core.models.main import BoundingBox, FrameBoxes, Segment
from core.models.settings import CaptureConfig, CoherenceConfig
from core.utils.error_handling import ConfigurationError, ValidationError


def _square_frame(x0, y0, side=4, size=32, value=1.0):
    pixels = np.zeros((size, size))
    pixels[y0:y0 + side, x0:x0 + side] = value
    return pixels


@pytest.fixture
def moving_square(make_stream):
    """A 4x4 square moving one pixel right per frame over a black 32x32 background."""
    return make_stream([_square_frame(4 + t, 10) for t in range(12)], source_id="square")


def _box(cx, cy, w=4.0, h=4.0, p=1.0):
    return BoundingBox(cx=cx, cy=cy, w=w, h=h, p=p)


def test_blob_detect_empty_when_frame_is_background():
    frame = Frame(np.full((16, 16), 0.3), 0)
    assert blob_detect(frame, frame, 0.1) == []


def test_blob_detect_single_square():
    boxes = blob_detect(Frame(_square_frame(2, 2), 0), Frame(np.zeros((32, 32)), 0), 0.1)
    assert len(boxes) == 1
    box = boxes[0]
    assert (box.cx, box.cy, box.w, box.h, box.p) == (4.0, 4.0, 4.0, 4.0, 1.0)


def test_blob_detect_orders_by_area():
    pixels = _square_frame(2, 2)
    pixels[20:22, 20:22] = 1.0
    boxes = blob_detect(Frame(pixels, 0), Frame(np.zeros((32, 32)), 0), 0.1)
    assert [b.w * b.h for b in boxes] == [16.0, 4.0]


def test_blob_detect_uses_four_connectivity():
    pixels = np.zeros((16, 16))
    pixels[4, 4] = 1.0
    pixels[5, 5] = 1.0
    boxes = blob_detect(Frame(pixels, 0), Frame(np.zeros((16, 16)), 0), 0.1)
    assert len(boxes) == 2


def test_blob_detect_dimension_mismatch():
    with pytest.raises(ValidationError):
        blob_detect(Frame(np.zeros((8, 8)), 0), Frame(np.zeros((8, 9)), 0), 0.1)


def test_temporal_median_background_ignores_mover(moving_square):
    background = temporal_median_background(moving_square)
    assert background.pixels.max() == 0.0


def test_best_box_respects_min_confidence():
    boxes = [_box(1, 1, p=0.2), _box(2, 2, p=0.6), _box(3, 3, p=0.6)]
    assert best_box(boxes, 0.25).cx == 2
    assert best_box([_box(1, 1, p=0.2)], 0.25) is None


def test_coherence_static_box():
    track = coherence_filter([_box(10, 10)] * 10, CoherenceConfig(epsilon=10))
    assert [(s.start, s.end) for s in track.subtracks] == [(0, 10)]
    assert track.covered_frames == 10


def test_coherence_three_four_five():
    a, b = _box(10, 10), _box(13, 14)
    assert box_displacement(a, b) == 5.0
    track = coherence_filter([a, b], CoherenceConfig(epsilon=10))
    assert len(track.subtracks) == 1


def test_coherence_splits_on_jump_and_gap():
    boxes = [_box(10, 10), _box(11, 10), _box(61, 10), _box(62, 10), None, _box(62, 10)]
    track = coherence_filter(boxes, CoherenceConfig(epsilon=10))
    assert [(s.start, s.end) for s in track.subtracks] == [(0, 2), (2, 4), (5, 6)]

    for s in track.subtracks:
        for i in range(s.start, s.end - 1):
            assert box_displacement(boxes[i], boxes[i + 1]) < track.epsilon


def test_coherence_relative_epsilon():
    track = coherence_filter([_box(10, 10)], CoherenceConfig(), frame_size=(30, 40))
    assert track.epsilon == pytest.approx(0.2 * 50)
    with pytest.raises(ConfigurationError):
        coherence_filter([_box(10, 10)], CoherenceConfig())


def test_expand_box_adds_margin_and_clamps():
    assert expand_box(_box(16, 16, w=10, h=10), 32, 32, 0.1) == pytest.approx((10.0, 10.0, 22.0, 22.0))
    assert expand_box(_box(1, 1, w=4, h=4), 32, 32, 0.1) == pytest.approx((0.0, 0.0, 3.4, 3.4))


def test_full_frame_box_is_identity(make_stream, rng):
    pixels = rng.random((32, 32))
    stream = make_stream([pixels])
    track = coherence_filter([_box(16, 16, w=32, h=32)], CoherenceConfig(epsilon=1))
    crops = crop_track(stream, track, out_size=(32, 32))
    assert np.array_equal(crops[0].pixels, stream[0].pixels)


def test_constant_field_crop(make_stream):
    stream = make_stream([np.full((64, 64), 0.7)])
    track = coherence_filter([_box(32, 32, w=16, h=16)], CoherenceConfig(epsilon=1))
    crop = crop_track(stream, track)[0]
    assert crop.shape == (32, 32)
    assert np.allclose(crop.pixels, 0.7, atol=1e-12)


def _reference_bilinear(pixels, region, out_size):
    """Brute-force bilinear sampler with edge clamping."""
    x0, y0, x1, y1 = region
    out_h, out_w = out_size
    height, width = pixels.shape
    out = np.zeros(out_size)
    for i in range(out_h):
        for j in range(out_w):
            y = min(max(y0 + (i + 0.5) * (y1 - y0) / out_h - 0.5, 0.0), height - 1.0)
            x = min(max(x0 + (j + 0.5) * (x1 - x0) / out_w - 0.5, 0.0), width - 1.0)
            r0, c0 = int(math.floor(y)), int(math.floor(x))
            r1, c1 = min(r0 + 1, height - 1), min(c0 + 1, width - 1)
            fy, fx = y - r0, x - c0
            top = pixels[r0, c0] * (1 - fx) + pixels[r0, c1] * fx
            bottom = pixels[r1, c0] * (1 - fx) + pixels[r1, c1] * fx
            out[i, j] = top * (1 - fy) + bottom * fy
    return out


def test_gradient_crop_matches_reference_sampler():
    yy, xx = np.mgrid[0:40, 0:48]
    pixels = (0.3 * xx / 47.0 + 0.6 * yy / 39.0) / 0.9
    region = expand_box(_box(20.5, 17.0, w=13, h=9), 48, 40, 0.1)
    ours = resample_region(pixels, region, (32, 32))
    assert np.max(np.abs(ours - _reference_bilinear(pixels, region, (32, 32)))) < 1e-6


def test_crop_empty_track_raises(make_stream):
    stream = make_stream([np.zeros((8, 8))])
    track = coherence_filter([None], CoherenceConfig(epsilon=1))
    with pytest.raises(ValidationError):
        crop_track(stream, track)


def test_capture_segment_moving_square(moving_square):
    detector = BlobDetector.for_stream(moving_square)
    result = capture_segment(moving_square, Segment(start=0, end=12), detector, CaptureConfig())

    assert [(s.start, s.end) for s in result.track.subtracks] == [(0, 12)]
    assert len(result.crops) == 12
    assert result.track.boxes[3].cx == 4 + 3 + 2.0
    assert result.crops[0].timestamp_ms == moving_square[0].timestamp_ms


def test_capture_segment_offsets_indices(moving_square):
    detector = BlobDetector.for_stream(moving_square)
    result = capture_segment(moving_square, Segment(start=4, end=10), detector, CaptureConfig())
    assert result.frame_indices == list(range(4, 10))
    assert result.crops[0].timestamp_ms == moving_square[4].timestamp_ms


def test_precomputed_detector_is_substitutable(tmp_path, moving_square):
    blob = BlobDetector.for_stream(moving_square)
    per_frame = [FrameBoxes(index=i, boxes=boxes) for i, boxes in enumerate(detect_frames(moving_square, blob))]
    save_boxes(tmp_path / "boxes.jsonl", per_frame)
    stub = PrecomputedDetector.from_file(tmp_path / "boxes.jsonl")

    segment = Segment(start=0, end=12)
    a = capture_segment(moving_square, segment, blob, CaptureConfig())
    b = capture_segment(moving_square, segment, stub, CaptureConfig())
    assert a.crops == b.crops
    assert a.track.subtracks == b.track.subtracks


def test_detection_independent_of_workers(moving_square):
    detector = BlobDetector.for_stream(moving_square)
    assert detect_frames(moving_square, detector, workers=1) == detect_frames(moving_square, detector, workers=4)


def test_crops_are_deterministic(moving_square):
    config = CaptureConfig()
    segment = Segment(start=0, end=12)
    first = capture_segment(moving_square, segment, BlobDetector.for_stream(moving_square), config)
    second = capture_segment(moving_square, segment, BlobDetector.for_stream(moving_square), config)
    assert first.crops == second.crops
