"""
Tests for frames, the frame container, the PGM codec and the weight-file codec.
"""
import json

import numpy as np
import pytest

from core.frames.jsonl import read_jsonl, write_jsonl
from core.frames.pgm import decode_pgm, encode_pgm, write_pgm
from core.frames.seeding import spawn_rng, validate_seed
from core.frames.stream import Frame, FrameStream, LabeledClip, Modality, load_stream, save_stream
from core.frames.weights import read_weights, write_weights
from core.models.main import FrameBoxes, BoundingBox
from core.utils.error_handling import ConfigurationError, FrameFormatError, ValidationError


def _grid_frames(rng, n, size=32, maxval=255):
    return [rng.integers(0, maxval + 1, size=(size, size)) / float(maxval) for _ in range(n)]


def test_load_three_frame_container(tmp_path, rng, make_stream):
    stream = make_stream(_grid_frames(rng, 3), source_id="three")
    save_stream(stream, tmp_path / "c")

    loaded = load_stream(tmp_path / "c")
    assert len(loaded) == 3
    assert loaded.width == 32 and loaded.height == 32
    assert loaded == stream


def test_round_trip_16_bit(tmp_path, rng, make_stream):
    stream = make_stream(_grid_frames(rng, 5, size=16, maxval=65535), maxval=65535)
    save_stream(stream, tmp_path / "c16")
    assert load_stream(tmp_path / "c16") == stream


@pytest.mark.parametrize("maxval", [100, 1023])
def test_round_trip_uncommon_maxval(tmp_path, rng, maxval):
    counts = rng.integers(0, maxval + 1, size=(8, 8))
    dtype = np.uint8 if maxval < 256 else ">u2"
    (tmp_path / "in" / "frames").mkdir(parents=True)
    (tmp_path / "in" / "frames" / "a.pgm").write_bytes(
        f"P5\n8 8\n{maxval}\n".encode("ascii") + counts.astype(dtype).tobytes())
    manifest = {"source_id": "thermal", "modality": "thermal", "frames": [{"file": "frames/a.pgm", "timestamp_ms": 0}]}
    (tmp_path / "in" / "manifest.json").write_text(json.dumps(manifest))

    loaded = load_stream(tmp_path / "in")
    assert loaded[0].maxval == maxval
    save_stream(loaded, tmp_path / "out")
    assert load_stream(tmp_path / "out") == loaded
    assert (tmp_path / "out" / "frames" / "000000.pgm").read_bytes() == (tmp_path / "in" / "frames" / "a.pgm").read_bytes()


def test_encode_pgm_limits():
    with pytest.raises(FrameFormatError):
        encode_pgm(np.zeros((8, 8), dtype=np.uint16), 0)
    with pytest.raises(FrameFormatError):
        encode_pgm(np.zeros((8, 8), dtype=np.uint16), 70000)
    with pytest.raises(FrameFormatError, match="exceeds maxval"):
        encode_pgm(np.full((8, 8), 1024, dtype=np.uint16), 1023)


def test_sixteen_bit_normalization(tmp_path):
    counts = np.zeros((8, 8), dtype=np.uint16)
    counts[0, 0] = 32768
    counts[1, 1] = 65535
    (tmp_path / "frames").mkdir()
    write_pgm(tmp_path / "frames" / "a.pgm", counts, 65535)
    manifest = {"source_id": "s", "modality": "depth", "frames": [{"file": "frames/a.pgm", "timestamp_ms": 0}]}
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))

    frame = load_stream(tmp_path)[0]
    assert frame.pixels[0, 0] == pytest.approx(32768 / 65535)
    assert frame.pixels[1, 1] == 1.0
    assert frame.modality == Modality.DEPTH


def test_missing_frame_file(tmp_path, rng, make_stream):
    save_stream(make_stream(_grid_frames(rng, 2)), tmp_path)
    (tmp_path / "frames" / "000001.pgm").unlink()
    with pytest.raises(FrameFormatError, match="missing frame"):
        load_stream(tmp_path)


def test_missing_manifest(tmp_path):
    with pytest.raises(FrameFormatError, match="missing manifest"):
        load_stream(tmp_path)


def test_empty_stream_round_trip(tmp_path):
    empty = FrameStream((), "empty", Modality.THERMAL)
    save_stream(empty, tmp_path / "e")
    manifest = json.loads((tmp_path / "e" / "manifest.json").read_text())
    assert manifest["frames"] == []
    assert load_stream(tmp_path / "e") == empty


def test_hundred_frames_write_hundred_files(tmp_path, rng, make_stream):
    save_stream(make_stream(_grid_frames(rng, 100, size=8)), tmp_path / "h")
    assert len(list((tmp_path / "h" / "frames").glob("*.pgm"))) == 100
    assert (tmp_path / "h" / "frames" / "000099.pgm").is_file()


def test_manifest_order_wins_over_file_names(tmp_path):
    (tmp_path / "frames").mkdir()
    dark = np.zeros((8, 8), dtype=np.uint16)
    bright = np.full((8, 8), 255, dtype=np.uint16)
    write_pgm(tmp_path / "frames" / "000000.pgm", dark, 255)
    write_pgm(tmp_path / "frames" / "000001.pgm", bright, 255)
    manifest = {"source_id": "s", "modality": "synthetic", "frames": [
        {"file": "frames/000001.pgm", "timestamp_ms": 0},
        {"file": "frames/000000.pgm", "timestamp_ms": 40},
    ]}
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))

    stream = load_stream(tmp_path)
    assert stream[0].pixels.max() == 1.0
    assert stream[1].pixels.max() == 0.0


def test_non_monotone_timestamps_rejected():
    frame_a = Frame(np.zeros((8, 8)), 100)
    frame_b = Frame(np.zeros((8, 8)), 100)
    with pytest.raises(FrameFormatError, match="Non-monotone"):
        FrameStream((frame_a, frame_b), "s")


def test_dimension_mismatch_rejected():
    with pytest.raises(FrameFormatError, match="dimension mismatch"):
        FrameStream((Frame(np.zeros((8, 8)), 0), Frame(np.zeros((8, 9)), 1)), "s")


def test_frame_invariants():
    with pytest.raises(ValidationError):
        Frame(np.zeros((4, 8)), 0)
    with pytest.raises(ValidationError):
        Frame(np.full((8, 8), 1.5), 0)
    with pytest.raises(ValidationError):
        Frame(np.zeros((8, 8)), -1)

    frame = Frame(np.zeros((8, 8)), 0)
    with pytest.raises(ValueError):
        frame.pixels[0, 0] = 1.0


def test_labeled_clip_checks_taxonomy(make_stream):
    clip = LabeledClip(make_stream([np.zeros((8, 8))]), label=2)
    clip.check_taxonomy(3)
    with pytest.raises(ValidationError):
        clip.check_taxonomy(2)
    with pytest.raises(ValidationError):
        LabeledClip(FrameStream((), "s"), label=0)


def test_pgm_header_comments_and_errors():
    data = b"P5\n# comment line\n2 2\n255\n" + bytes([0, 64, 128, 255])
    counts, maxval = decode_pgm(data)
    assert maxval == 255
    assert counts.tolist() == [[0, 64], [128, 255]]

    with pytest.raises(FrameFormatError):
        decode_pgm(b"P2\n2 2\n255\n0 0 0 0")
    with pytest.raises(FrameFormatError, match="Truncated"):
        decode_pgm(b"P5\n2 2\n255\n" + bytes([1, 2]))


def test_pgm_sixteen_bit_is_big_endian():
    encoded = encode_pgm(np.array([[1, 256]] * 8, dtype=np.uint16), 65535)
    payload = encoded.split(b"65535\n", 1)[1]
    assert payload[:4] == b"\x00\x01\x01\x00"


def test_spawn_rng_is_deterministic_and_keyed():
    a = spawn_rng(42, 1, 3).random(4)
    b = spawn_rng(42, 1, 3).random(4)
    c = spawn_rng(42, 1, 4).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert validate_seed(2 ** 64 - 1) == 2 ** 64 - 1
    with pytest.raises(ConfigurationError):
        validate_seed(-1)


def test_weights_round_trip(tmp_path, rng):
    arrays = [rng.normal(size=(3, 4)), rng.normal(size=(4,))]
    write_weights(tmp_path / "w.bin", {"kind": "matrix", "seed": 5}, arrays)
    header, loaded = read_weights(tmp_path / "w.bin")

    assert header["kind"] == "matrix"
    assert header["shapes"] == [[3, 4], [4]]
    assert all(np.array_equal(a, b) for a, b in zip(arrays, loaded))


def test_weights_truncated_and_trailing(tmp_path, rng):
    path = tmp_path / "w.bin"
    write_weights(path, {}, [rng.normal(size=(2, 2))])
    data = path.read_bytes()

    path.write_bytes(data[:-8])
    with pytest.raises(FrameFormatError, match="truncated"):
        read_weights(path)
    path.write_bytes(data + b"\x00")
    with pytest.raises(FrameFormatError, match="trailing"):
        read_weights(path)


def test_jsonl_round_trip_and_line_errors(tmp_path):
    records = [FrameBoxes(index=0, boxes=[BoundingBox(cx=4, cy=4, w=2, h=2, p=0.9)]), FrameBoxes(index=1)]
    path = tmp_path / "boxes.jsonl"
    assert write_jsonl(path, records) == 2
    assert read_jsonl(path, FrameBoxes) == records

    path.write_text('{"index": 0, "boxes": []}\n{"index": -3}\n')
    with pytest.raises(ValidationError, match=":2:"):
        read_jsonl(path, FrameBoxes)


def test_frame_from_samples():
    frame = Frame.from_samples(np.full((8, 8), 51, dtype=np.uint16), 255, 40, Modality.THERMAL)
    assert frame.pixels.max() == pytest.approx(0.2)
    assert frame.counts().max() == 51
    assert frame.modality == Modality.THERMAL
    with pytest.raises(ValidationError):
        Frame.from_samples(np.zeros((8, 8)), 0, 0)
    with pytest.raises(ValidationError):
        Frame.from_samples(np.full((8, 8), 300), 255, 0)
