"""
Shared fixtures for the test suite.
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path to import core modules
sys.path.append(str(Path(__file__).parent.parent))

from core.frames.stream import Frame, FrameStream, Modality
from core.models.main import PseudoLabelRecord


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_stream():
    """Build a FrameStream from a list of 2-D arrays (timestamps 0, 100, 200, ...)."""
    def _make(arrays, source_id="clip", maxval=255, step_ms=100, modality=Modality.SYNTHETIC):
        frames = tuple(Frame(np.asarray(a, dtype=np.float64), i * step_ms, modality, maxval)
                       for i, a in enumerate(arrays))
        return FrameStream(frames, source_id, modality)
    return _make


@pytest.fixture
def make_records():
    """Pseudo-label records from (class index, top-1 probability) pairs over `num_classes` classes."""
    def _make(pairs, num_classes=3, start=0):
        records = []
        for offset, (label, top) in enumerate(pairs):
            rest = (1.0 - top) / (num_classes - 1)
            probabilities = [rest] * num_classes
            probabilities[label] = top
            order = sorted(range(num_classes), key=lambda c: (-probabilities[c], c))
            records.append(PseudoLabelRecord(frame_index=start + offset, probabilities=probabilities,
                                             top_k=[(c, probabilities[c]) for c in order]))
        return records
    return _make
