"""
Tests for the synthetic generator, crop directories, the end-to-end runner,
lexical scoring and the command line.
"""
import json

import numpy as np
import pytest

from cli.main import main
from core.action_capture.cropping import capture_segment
from core.action_capture.detector import BlobDetector
from core.captioner.generator import caption_records
from core.frames.jsonl import read_jsonl
from core.frames.stream import save_stream
from core.labeler.network import EmbeddingNetwork
from core.labeler.trainer import save_model
from core.llm_client.client import MockChatClient
from core.models.main import ClipEntry, DatasetIndex, PseudoLabelRecord, Segment
from core.models.settings import (
    CaptionConfig,
    ConsistencyRules,
    ContrastiveConfig,
    LlmConfig,
    PipelineConfig,
    SyntheticSpec,
)
from core.pipeline.crops import container_name, load_crop_set, read_crop_index, save_captures
from core.pipeline.evaluation import lexical_f1
from core.pipeline.runner import CAPTIONS_FILE, REPORT_FILE, ClipRun, _pseudo_label, run_all
from core.pipeline.synthetic import INDEX_FILE, gen_synthetic, sample_motion
from core.utils.error_handling import ValidationError

SMALL_SPEC = dict(clips_per_class=2, noise_clips=1, static_clips=1, labeled_fraction=1.0, seed=3)


def _fast_config(**overrides):
    return PipelineConfig(
        seed=3,
        labeler=ContrastiveConfig(epochs=2),
        captioner=CaptionConfig(rules=ConsistencyRules(p_min=0.0)),
        **overrides
    )


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("dataset")
    gen_synthetic(SyntheticSpec(**SMALL_SPEC), out)
    return out


def test_gen_synthetic_counts(tmp_path):
    index = gen_synthetic(SyntheticSpec(frames_per_clip=8, seed=1), tmp_path)
    kinds = [c.kind for c in index.clips]
    assert kinds.count("motion") == 60
    assert kinds.count("noise") == 20
    assert kinds.count("static") == 20
    assert index.taxonomy == ["Walking", "Exercising", "Transitioning (Sit/Stand)"]
    assert (tmp_path / INDEX_FILE).is_file()


def test_gen_synthetic_is_byte_identical(tmp_path):
    spec = SyntheticSpec(clips_per_class=1, noise_clips=1, static_clips=1, frames_per_clip=8, seed=5)
    gen_synthetic(spec, tmp_path / "a")
    gen_synthetic(spec, tmp_path / "b")
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    for relative in files_a:
        assert (tmp_path / "a" / relative).read_bytes() == (tmp_path / "b" / relative).read_bytes()


def test_translating_blob_moves_by_velocity():
    params = sample_motion("translating", 32, 24, np.random.default_rng(0))
    yy, xx = np.mgrid[0:32, 0:32] + 0.5
    centroids = []
    for t in range(24):
        mask = params.mask(t, 32)
        centroids.append((float((mask * xx).sum() / mask.sum()), float((mask * yy).sum() / mask.sum())))
    for (x0, y0), (x1, y1) in zip(centroids, centroids[1:]):
        assert x1 - x0 == pytest.approx(params.velocity[0], abs=1e-9)
        assert y1 - y0 == pytest.approx(0.0, abs=1e-9)


def _moving_blob(make_stream, frames, source_id):
    arrays = []
    for t in range(frames):
        pixels = np.zeros((32, 32))
        pixels[8:12, 4 + t:8 + t] = 1.0
        arrays.append(pixels)
    return make_stream(arrays, source_id=source_id)


def test_crop_directory_round_trip(tmp_path, make_stream):
    stream = _moving_blob(make_stream, 10, "cam/1")
    capture = capture_segment(stream, Segment(start=0, end=10), BlobDetector.for_stream(stream), _fast_config().capture)

    save_captures(tmp_path, [capture], label=2)
    index = save_captures(tmp_path, [capture], label=2)
    assert [e.container for e in index.entries] == [container_name("cam/1", Segment(start=0, end=10))]
    assert index.entries[0].container == "cam_1_000000_000010"
    assert read_crop_index(tmp_path) == index

    crop_set = load_crop_set(tmp_path, labeled_only=True)
    assert crop_set.crops.shape == (10, 32, 32)
    assert crop_set.labels.tolist() == [2] * 10
    assert crop_set.frame_indices.tolist() == list(range(10))


def test_pseudo_labels_keep_source_frame_indices(make_stream):
    stream = _moving_blob(make_stream, 20, "hall")
    config = _fast_config()
    capture = capture_segment(stream, Segment(start=10, end=20), BlobDetector.for_stream(stream), config.capture)
    assert capture.frame_indices == list(range(10, 20))

    clip = ClipRun(ClipEntry(clip="clips/hall", kind="motion"), stream, captures=[capture])
    model = EmbeddingNetwork.initialize(3, 0, input_dim=32 * 32)
    _pseudo_label([clip], model, config)
    assert [r.frame_index for r in clip.records] == list(range(10, 20))

    taxonomy = ["Walking", "Exercising", "Sitting"]
    caption = caption_records("hall", clip.records, taxonomy, config.captioner, MockChatClient())
    assert caption.segments[0].start_index == 10
    assert caption.segments[-1].end_index == 20


def test_cli_pseudo_label_writes_source_frame_indices(tmp_path, make_stream):
    config = _fast_config()
    captures = []
    for source_id in ("hall", "kitchen"):
        stream = _moving_blob(make_stream, 20, source_id)
        captures.append(capture_segment(stream, Segment(start=10, end=20), BlobDetector.for_stream(stream),
                                        config.capture))
    save_captures(tmp_path / "crops", captures)
    save_model(tmp_path / "model.bin", EmbeddingNetwork.initialize(3, 0, input_dim=32 * 32), 0, config.labeler)

    assert main(["pseudo-label", "--model", str(tmp_path / "model.bin"), "--in", str(tmp_path / "crops"),
                 "--out", str(tmp_path / "labels.jsonl"), "--source-id", "kitchen"]) == 0
    records = read_jsonl(tmp_path / "labels.jsonl", PseudoLabelRecord)
    assert [r.frame_index for r in records] == list(range(10, 20))


def test_empty_crop_directory(tmp_path):
    with pytest.raises(ValidationError, match="No crops"):
        load_crop_set(tmp_path)


def test_run_all_captions_retained_clips(tmp_path, small_dataset):
    report = run_all(_fast_config(), small_dataset, tmp_path / "run")

    stages = {s.name: s for s in report.stages}
    assert not any(s.skipped for s in report.stages)
    assert stages["filter"].counts["clips_retained"] >= 6
    assert len(report.captions) >= 1
    assert len(report.captions) == stages["caption"].counts["captions"]
    assert all(record.caption for record in report.captions)

    written = (tmp_path / "run" / CAPTIONS_FILE).read_text().splitlines()
    assert len(written) == len(report.captions)
    assert json.loads((tmp_path / "run" / REPORT_FILE).read_text())["seed"] == 3


def test_run_all_is_reproducible_apart_from_timings(tmp_path, small_dataset):
    first = run_all(_fast_config(), small_dataset, tmp_path / "one")
    second = run_all(_fast_config(), small_dataset, tmp_path / "two")
    assert first.model_dump(exclude={"timings_ms"}) == second.model_dump(exclude={"timings_ms"})


def test_run_all_replays_recorded_fixtures(tmp_path, small_dataset):
    fixtures = tmp_path / "fixtures"
    recorded = run_all(_fast_config(llm=LlmConfig(record_dir=str(fixtures))), small_dataset, tmp_path / "rec")
    assert len(list(fixtures.glob("*.json"))) == len({c.prompt_sha256 for c in recorded.captions})

    replay = _fast_config(llm=LlmConfig(mode="replay", fixtures_dir=str(fixtures)))
    first = run_all(replay, small_dataset, tmp_path / "one")
    second = run_all(replay, small_dataset, tmp_path / "two")
    assert first.model_dump(exclude={"timings_ms"}) == second.model_dump(exclude={"timings_ms"})
    assert first.model_dump(exclude={"timings_ms"}) == recorded.model_dump(exclude={"timings_ms"})


def test_run_all_static_only_dataset(tmp_path, make_stream):
    dataset = tmp_path / "static"
    save_stream(make_stream([np.full((32, 32), 0.4)] * 16, source_id="still"), dataset / "clips" / "still")
    index = DatasetIndex(taxonomy=["Sitting"], fps=10.0, seed=0,
                         clips=[ClipEntry(clip="clips/still", kind="static")])
    (dataset / INDEX_FILE).write_text(index.model_dump_json())

    report = run_all(_fast_config(), dataset, tmp_path / "out")
    skipped = [s for s in report.stages if s.skipped]
    assert [s.name for s in skipped] == ["capture", "train", "pseudo-label", "caption"]
    assert all(s.note == "zero retained segments" for s in skipped)
    assert report.captions == []


def test_lexical_f1():
    assert lexical_f1("a person walks", "A person walks") == 1.0
    assert lexical_f1("sitting quietly", "walking fast") == 0.0
    assert lexical_f1("a b c", "a b d") == pytest.approx(2 / 3)
    assert lexical_f1("a b c", "a b d") == lexical_f1("a b d", "a b c")
    assert lexical_f1("", "") == 1.0
    assert lexical_f1("", "a") == 0.0


def test_cli_lora_budget(capsys):
    assert main(["lora-budget", "--d", "4096", "--r", "8"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["adapter_params"] == 65536
    assert payload["full_params"] == 16777216


def test_cli_invalid_flag_exits_with_config_error(tmp_path, capsys):
    code = main(["filter", "--in", str(tmp_path), "--out", str(tmp_path / "s.json"), "--sigma", "1.5"])
    assert code == 2
    assert "error" in json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_cli_bad_config_file(tmp_path):
    config = tmp_path / "config.toml"
    config.write_text("[filter\nsigma = ")
    assert main(["lora-budget", "--d", "8", "--r", "2", "--config", str(config)]) == 2


def test_cli_filter_then_capture(tmp_path, small_dataset):
    clip = small_dataset / "clips" / "motion_translating_000"
    segments = tmp_path / "segments.json"
    assert main(["filter", "--in", str(clip), "--out", str(segments)]) == 0
    written = json.loads(segments.read_text())
    assert written["source_id"] == "motion_translating_000"
    assert written["segments"]
    assert "diagnostics" not in written

    crops = tmp_path / "crops"
    assert main(["capture", "--in", str(clip), "--segments", str(segments), "--out", str(crops),
                 "--label", "0"]) == 0
    crop_set = load_crop_set(crops, labeled_only=True)
    assert len(crop_set.crops) > 0
    assert set(crop_set.labels.tolist()) == {0}


def test_cli_eval_lexical(capsys):
    assert main(["eval-lexical", "--candidate", "a b c", "--reference", "a b d"]) == 0
    assert json.loads(capsys.readouterr().out)["f1"] == pytest.approx(2 / 3)
