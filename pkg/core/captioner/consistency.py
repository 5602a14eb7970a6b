"""
Rule-based temporal consistency over top-1 frame labels.

Uncertain frames are transparent: runs and windows are computed over the
certain frames only, and uncertain frames pass through untouched. Only runs
of length 1 are ever relabeled, always to the label of an adjacent run, so
every change merges runs and the loop below reaches a fixpoint.

Incompatibility pass: a singleton whose label is incompatible with an
adjacent context run of length >= min_run takes that run's label and mean
probability. When the runs on both sides share a label they count as one
enclosing run.

Smoothing pass: a singleton takes the mode of its edge-padded window when
that mode covers at least ceil(window / 2) positions.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.models.main import FrameState
from core.models.settings import ConsistencyRules

logger = logging.getLogger(__name__)


@dataclass
class _Run:
    label: str
    start: int  # position in the certain subsequence
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start


def _runs(labels: Sequence[str]) -> List[_Run]:
    runs: List[_Run] = []
    for i, label in enumerate(labels):
        if runs and runs[-1].label == label:
            runs[-1].end = i + 1
        else:
            runs.append(_Run(label, i, i + 1))
    return runs


def _incompatibility_fix(labels: List[str], probs: List[float],
                         rules: ConsistencyRules) -> Optional[Tuple[int, str, float]]:
    runs = _runs(labels)
    for r, run in enumerate(runs):
        if run.length != 1:
            continue
        left = runs[r - 1] if r > 0 else None
        right = runs[r + 1] if r + 1 < len(runs) else None

        contexts = []
        if left and right and left.label == right.label:
            contexts.append((left.label, list(range(left.start, left.end)) + list(range(right.start, right.end))))
        else:
            # Longer side first; left wins ties
            sides = [s for s in (left, right) if s is not None]
            sides.sort(key=lambda s: -s.length)
            contexts.extend((s.label, list(range(s.start, s.end))) for s in sides)

        for label, positions in contexts:
            if len(positions) >= rules.min_run and rules.is_incompatible(run.label, label):
                return run.start, label, float(np.mean([probs[p] for p in positions]))
    return None


def _smoothing_fix(labels: List[str], probs: List[float],
                   rules: ConsistencyRules) -> Optional[Tuple[int, str, float]]:
    half = rules.window // 2
    needed = math.ceil(rules.window / 2)
    runs = _runs(labels)
    n = len(labels)

    for r, run in enumerate(runs):
        if run.length != 1:
            continue
        i = run.start
        positions = np.clip(np.arange(i - half, i + half + 1), 0, n - 1)
        window = [labels[p] for p in positions]
        values, counts = np.unique(window, return_counts=True)
        best = int(np.argmax(counts))
        mode, count = str(values[best]), int(counts[best])
        if mode == run.label or count < needed:
            continue
        neighbours = {runs[x].label for x in (r - 1, r + 1) if 0 <= x < len(runs)}
        if mode not in neighbours:
            continue
        return i, mode, float(np.mean([probs[p] for p in positions if labels[p] == mode]))
    return None


def _relabel(state: FrameState, label: str, probability: float) -> FrameState:
    kept = [(a, p) for a, p in state.top_k if a != label and p <= probability]
    return FrameState(frame_index=state.frame_index, top_k=[(label, probability)] + kept,
                      uncertain=state.uncertain)


def temporal_filter(states: Sequence[FrameState], rules: ConsistencyRules) -> List[FrameState]:
    """
    Apply both passes until nothing changes; idempotent.

    Incompatibility fixes take priority over smoothing, and within a pass the
    leftmost applicable singleton is fixed first.
    """
    result = list(states)
    certain = [i for i, s in enumerate(result) if not s.uncertain]
    labels = [result[i].action for i in certain]
    probs = [result[i].probability for i in certain]

    changes = 0
    while True:
        fix = _incompatibility_fix(labels, probs, rules) or _smoothing_fix(labels, probs, rules)
        if fix is None:
            break
        position, label, probability = fix
        labels[position] = label
        probs[position] = probability
        target = certain[position]
        result[target] = _relabel(result[target], label, probability)
        changes += 1

    if changes:
        logger.debug(f"Temporal filter relabeled {changes} frame(s)")
    return result
