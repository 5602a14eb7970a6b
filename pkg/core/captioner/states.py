"""Frame states from pseudo-label distributions and their run-length segments."""
import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from core.models.main import ActionSegment, FrameState, PseudoLabelRecord
from core.utils.error_handling import ValidationError

logger = logging.getLogger(__name__)


def make_states(records: Sequence[PseudoLabelRecord], k: int, p_min: float,
                taxonomy: Sequence[str]) -> List[FrameState]:
    """
    Truncate each distribution to its top-k actions and flag uncertain frames.

    Raises:
        ValidationError on empty input, k outside [1, num_classes] or a
        distribution whose length differs from the taxonomy
    """
    if not records:
        raise ValidationError("No pseudo-label records to convert", field="records")
    if not 1 <= k <= len(taxonomy):
        raise ValidationError(f"k={k} must lie in [1, {len(taxonomy)}]", field="k")

    states = []
    for record in records:
        probabilities = np.asarray(record.probabilities, dtype=np.float64)
        if len(probabilities) != len(taxonomy):
            raise ValidationError(
                f"Frame {record.frame_index}: {len(probabilities)} probabilities for {len(taxonomy)} actions",
                field="probabilities")
        order = np.argsort(-probabilities, kind="stable")[:k]
        top_k = [(taxonomy[c], float(probabilities[c])) for c in order]
        states.append(FrameState(frame_index=record.frame_index, top_k=top_k, uncertain=top_k[0][1] < p_min))

    uncertain = sum(s.uncertain for s in states)
    logger.debug(f"{len(states)} frame states, {uncertain} uncertain")
    return states


def _candidates(frames: Sequence[FrameState], k: int) -> List[tuple]:
    """Segment-mean probability of every action seen in the frames' top-k lists, best k kept."""
    totals: Dict[str, float] = {}
    for state in frames:
        for action, p in state.top_k:
            totals[action] = totals.get(action, 0.0) + p
    ranked = sorted(totals.items(), key=lambda item: -item[1])
    return [(action, total / len(frames)) for action, total in ranked[:k]]


def segment(states: Sequence[FrameState], k: Optional[int] = None) -> List[ActionSegment]:
    """
    Run-length encode consecutive certain frames sharing a top-1 action.

    Uncertain frames and gaps in frame_index close the open segment.

    Args:
        states: Filtered frame states in frame order
        k: Candidates kept per segment; defaults to the longest top-k list
    """
    if k is None:
        k = max((len(s.top_k) for s in states), default=1)

    segments: List[ActionSegment] = []
    current: List[FrameState] = []

    def close():
        if current:
            segments.append(ActionSegment(
                start_index=current[0].frame_index,
                end_index=current[-1].frame_index + 1,
                action=current[0].action,
                mean_probability=float(np.mean([s.probability for s in current])),
                candidates=_candidates(current, k)
            ))
            current.clear()

    for state in states:
        if state.uncertain:
            close()
            continue
        if current and (state.action != current[-1].action or state.frame_index != current[-1].frame_index + 1):
            close()
        current.append(state)
    close()
    return segments


def expand_segments(segments: Sequence[ActionSegment]) -> Dict[int, str]:
    """frame_index -> action for every frame a segment covers."""
    return {i: s.action for s in segments for i in range(s.start_index, s.end_index)}
