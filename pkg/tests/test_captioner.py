"""
Tests for frame states, temporal consistency, segmentation, prompts and caption generation.
"""
import json

import pytest

from core.captioner.consistency import temporal_filter
from core.captioner.generator import caption_records, generate_caption
from core.captioner.prompts import PromptTemplates, build_prompt, format_segment_line, prompt_sha256
from core.captioner.states import expand_segments, make_states, segment
from core.config import CaptionDefaults
from core.llm_client.client import MockChatClient, ReplayChatClient
from core.models.main import ActionSegment, FrameState, PseudoLabelRecord
from core.models.settings import CaptionConfig, ConsistencyRules
from core.utils.error_handling import ConfigurationError, LlmResponseError, ValidationError

RUN_SLEEP = ["running", "sleeping"]


def _states(labels, p=0.9):
    return [FrameState(frame_index=i, top_k=[(label, p)], uncertain=False) for i, label in enumerate(labels)]


def _top1(states):
    return [s.action for s in states]


def test_make_states_truncates_to_top_k():
    record = PseudoLabelRecord(frame_index=0, probabilities=[0.5, 0.3, 0.2],
                               top_k=[(0, 0.5), (1, 0.3), (2, 0.2)])
    state = make_states([record], k=2, p_min=0.4, taxonomy=["a", "b", "c"])[0]
    assert state.top_k == [("a", 0.5), ("b", 0.3)]
    assert not state.uncertain


def test_make_states_flags_uncertain_frames(make_records):
    states = make_states(make_records([(0, 0.25)], num_classes=4), k=4, p_min=0.4, taxonomy=list("abcd"))
    assert states[0].uncertain
    assert len(states[0].top_k) == 4


def test_make_states_errors(make_records):
    records = make_records([(0, 0.9)])
    with pytest.raises(ValidationError):
        make_states(records, k=4, p_min=0.4, taxonomy=list("abc"))
    with pytest.raises(ValidationError):
        make_states(records, k=2, p_min=0.4, taxonomy=list("ab"))
    with pytest.raises(ValidationError):
        make_states([], k=1, p_min=0.4, taxonomy=list("abc"))


def test_incompatible_singleton_takes_enclosing_run(make_records):
    rules = ConsistencyRules(min_run=4, window=5, incompatible=[("running", "sleeping")])
    records = make_records([(0, 0.9)] * 3 + [(1, 0.8)] + [(0, 0.9)] * 3, num_classes=2)
    states = make_states(records, k=2, p_min=0.4, taxonomy=RUN_SLEEP)

    filtered = temporal_filter(states, rules)
    assert _top1(filtered) == ["running"] * 7
    assert filtered[3].probability == pytest.approx(0.9)
    assert filtered[3].top_k[1] == ("sleeping", pytest.approx(0.8))


def test_uniform_sequence_unchanged():
    states = _states(["a"] * 8)
    assert temporal_filter(states, ConsistencyRules(incompatible=[("a", "b")])) == states


def test_alternating_sequence_is_smoothed():
    rules = ConsistencyRules(min_run=4, window=5)
    assert _top1(temporal_filter(_states(list("ABABA")), rules)) == list("AAAAA")


def test_temporal_filter_is_idempotent():
    rules = ConsistencyRules(min_run=2, window=3, incompatible=[("A", "C")])
    states = _states(list("AACAABBBCBAAB"))
    once = temporal_filter(states, rules)
    assert temporal_filter(once, rules) == once


def test_temporal_filter_random_sequences(rng):
    rules = ConsistencyRules(min_run=2, window=3, incompatible=[("A", "C"), ("B", "C")])
    for _ in range(50):
        labels = [str(x) for x in rng.choice(list("ABC"), size=int(rng.integers(1, 30)))]
        states = _states(labels)
        filtered = temporal_filter(states, rules)

        assert set(_top1(filtered)) <= set(labels)
        for i, label in enumerate(labels):
            in_run = (i > 0 and labels[i - 1] == label) or (i + 1 < len(labels) and labels[i + 1] == label)
            if in_run:
                assert filtered[i] == states[i]
        assert temporal_filter(filtered, rules) == filtered


def test_uncertain_frames_pass_through():
    states = _states(list("AAAA")) + [FrameState(frame_index=4, top_k=[("B", 0.2)], uncertain=True)]
    states += [FrameState(frame_index=5 + i, top_k=[(a, 0.9)], uncertain=False) for i, a in enumerate("AAA")]
    filtered = temporal_filter(states, ConsistencyRules(incompatible=[("A", "B")]))
    assert filtered[4] == states[4]


def test_segment_run_length():
    segments = segment(_states(list("AAABB")))
    assert [(s.start_index, s.end_index, s.action) for s in segments] == [(0, 3, "A"), (3, 5, "B")]
    assert segments[0].mean_probability == pytest.approx(0.9)


def test_segment_single_frame_and_uncertain_gap():
    assert len(segment(_states(["A"]))) == 1

    states = _states(list("AAA"))
    states[1] = FrameState(frame_index=1, top_k=[("A", 0.1)], uncertain=True)
    assert [(s.start_index, s.end_index) for s in segment(states)] == [(0, 1), (2, 3)]


def test_segment_expand_round_trip(rng):
    labels = [str(x) for x in rng.choice(["A", "B", "C"], size=100, p=[0.5, 0.3, 0.2])]
    expanded = expand_segments(segment(_states(labels)))
    assert expanded == dict(enumerate(labels))


def test_segment_line_format():
    line = format_segment_line(ActionSegment(start_index=0, end_index=30, action="walking", mean_probability=0.9), 10)
    assert line == "[0.0 s – 3.0 s] walking (confidence 0.90)"


def test_build_prompt_lists_taxonomy_and_is_deterministic():
    segments = [ActionSegment(start_index=0, end_index=30, action="Walking", mean_probability=0.9)]
    system, runtime = build_prompt(segments, CaptionDefaults.TAXONOMY, fps=10)
    for action in CaptionDefaults.TAXONOMY:
        assert f"- {action}" in system
    assert "[0.0 s – 3.0 s] Walking (confidence 0.90)" in runtime
    assert (system, runtime) == build_prompt(segments, CaptionDefaults.TAXONOMY, fps=10)
    assert "{taxonomy}" not in system and "{segments}" not in runtime

    with pytest.raises(ValidationError):
        build_prompt([], CaptionDefaults.TAXONOMY, fps=10)


@pytest.mark.parametrize("k", [1, 3, 5])
def test_top_k_candidates_reach_the_prompt(make_records, k):
    taxonomy = ["a", "b", "c", "d", "e", "f"]
    records = make_records([(0, 0.5)] * 4 + [(2, 0.6)] * 3, num_classes=6)
    states = make_states(records, k=k, p_min=0.2, taxonomy=taxonomy)
    assert all(len(s.top_k) == k for s in states)

    segments = segment(states)
    assert [len(s.candidates) for s in segments] == [k, k]
    _, runtime = build_prompt(segments, taxonomy, fps=10)
    lines = [line for line in runtime.splitlines() if " candidates: " in line]
    assert [len(line.split(" candidates: ")[1].split(", ")) for line in lines] == [k, k]


def test_templates_from_files(tmp_path):
    (tmp_path / "system.txt").write_text("Actions:\n{taxonomy}\n")
    (tmp_path / "bad.txt").write_text("no placeholder here")
    templates = PromptTemplates.from_files(str(tmp_path / "system.txt"))
    assert templates.system.startswith("Actions:")

    with pytest.raises(ConfigurationError):
        PromptTemplates.from_files(runtime_path=str(tmp_path / "bad.txt"))


def test_mock_caption_mentions_every_segment(make_records):
    taxonomy = ["Sitting", "Walking", "Transitioning (Sit/Stand)"]
    records = make_records([(0, 0.9)] * 6 + [(2, 0.8)] * 5 + [(1, 0.85)] * 6)
    config = CaptionConfig(top_k=2, rules=ConsistencyRules())
    record = caption_records("clip", records, taxonomy, config, MockChatClient())

    assert [s.action for s in record.segments] == ["Sitting", "Transitioning (Sit/Stand)", "Walking"]
    for action in taxonomy:
        assert action in record.caption
    assert record == caption_records("clip", records, taxonomy, config, MockChatClient())


def test_all_uncertain_gives_no_caption(make_records):
    records = make_records([(0, 0.34)] * 5)
    config = CaptionConfig(rules=ConsistencyRules())
    assert caption_records("clip", records, list("abc"), config, MockChatClient()) is None


def test_replayed_fixture_becomes_caption(tmp_path, make_records):
    taxonomy = ["Sitting", "Walking", "Standing"]
    records = make_records([(1, 0.9)] * 8)
    config = CaptionConfig(rules=ConsistencyRules())

    segments = segment(temporal_filter(make_states(records, 3, 0.4, taxonomy), config.rules), 3)
    system, runtime = build_prompt(segments, taxonomy, config.fps)
    key = prompt_sha256(system, runtime)
    (tmp_path / f"{key}.json").write_text(json.dumps({"response": "The person walks steadily.", "model": "m"}))

    record = caption_records("clip", records, taxonomy, config, ReplayChatClient(tmp_path))
    assert record.caption == "The person walks steadily."
    assert record.prompt_sha256 == key


def test_empty_completion_is_an_error():
    class Blank(MockChatClient):
        def complete(self, system, user):
            return super().complete(system, user).model_copy(update={"response": "   "})

    with pytest.raises(LlmResponseError):
        generate_caption(("s", "u"), Blank())
