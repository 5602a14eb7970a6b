"""
Tests for the HTTP surface: captioning, LoRA budgets, lexical scoring and error bodies.
"""
import json

import pytest
from fastapi.testclient import TestClient

from api.main import app
from core.captioner.prompts import build_prompt, prompt_sha256
from core.models.main import ActionSegment


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


def _records(pairs, num_classes=3):
    return [
        {"frame_index": i, "probabilities": probabilities,
         "top_k": sorted(enumerate(probabilities), key=lambda item: -item[1])}
        for i, probabilities in enumerate(
            [[top if c == label else (1.0 - top) / (num_classes - 1) for c in range(num_classes)]
             for label, top in pairs])
    ]


def test_root_lists_endpoints(client):
    response = client.get("/")
    assert response.status_code == 200
    assert "/caption" in response.json()["endpoints"]


def test_caption_with_mock(client):
    payload = {
        "source_id": "kitchen",
        "records": _records([(0, 0.9)] * 5 + [(1, 0.8)] * 5),
        "taxonomy": ["Sitting", "Walking", "Standing"],
    }
    response = client.post("/caption", json=payload)
    assert response.status_code == 200
    body = response.json()
    assert body["attempts"] == 1
    assert body["model"].startswith("mock")
    caption = body["caption"]
    assert [s["action"] for s in caption["segments"]] == ["Sitting", "Walking"]
    assert "Sitting" in caption["caption"] and "Walking" in caption["caption"]
    assert response.headers["X-Request-ID"]


def test_caption_all_uncertain(client):
    payload = {"source_id": "dark", "records": _records([(0, 0.34)] * 4), "taxonomy": ["a", "b", "c"]}
    body = client.post("/caption", json=payload).json()
    assert body["caption"] is None
    assert body["attempts"] == 0


def test_caption_replay(client, tmp_path, monkeypatch):
    monkeypatch.setenv("CAPTION_FIXTURES_ROOT", str(tmp_path))
    (tmp_path / "hall").mkdir()
    taxonomy = ["Sitting", "Walking", "Standing"]
    segments = [ActionSegment(start_index=0, end_index=6, action="Walking", mean_probability=0.9,
                              candidates=[("Walking", 0.9), ("Sitting", 0.05), ("Standing", 0.05)])]
    system, runtime = build_prompt(segments, taxonomy, fps=10.0)
    (tmp_path / "hall" / f"{prompt_sha256(system, runtime)}.json").write_text(
        json.dumps({"response": "The person walks across the room.", "model": "recorded"}))

    payload = {"source_id": "hall", "records": _records([(1, 0.9)] * 6), "taxonomy": taxonomy,
               "llm_mode": "replay", "fixtures_dir": "hall"}
    body = client.post("/caption", json=payload).json()
    assert body["caption"]["caption"] == "The person walks across the room."
    assert body["model"] == "recorded"


def test_caption_replay_requires_fixtures(client):
    payload = {"source_id": "s", "records": _records([(0, 0.9)]), "taxonomy": ["a", "b", "c"],
               "llm_mode": "replay"}
    response = client.post("/caption", json=payload, headers={"X-Request-ID": "req-42"})
    assert response.status_code == 422
    error = response.json()["error"]
    assert error["type"] == "validation_error"
    assert error["request_id"] == "req-42"
    assert error["details"]["field"] == "fixtures_dir"


def test_caption_missing_fixture_is_not_found(client, tmp_path, monkeypatch):
    monkeypatch.setenv("CAPTION_FIXTURES_ROOT", str(tmp_path))
    payload = {"source_id": "s", "records": _records([(0, 0.9)] * 3), "taxonomy": ["a", "b", "c"],
               "llm_mode": "replay", "fixtures_dir": "."}
    response = client.post("/caption", json=payload)
    assert response.status_code == 404
    assert response.json()["error"]["type"] == "not_found_error"


@pytest.mark.parametrize("fixtures_dir", ["../elsewhere", "/etc"])
def test_caption_replay_stays_under_fixtures_root(client, tmp_path, monkeypatch, fixtures_dir):
    monkeypatch.setenv("CAPTION_FIXTURES_ROOT", str(tmp_path / "root"))
    payload = {"source_id": "s", "records": _records([(0, 0.9)] * 3), "taxonomy": ["a", "b", "c"],
               "llm_mode": "replay", "fixtures_dir": fixtures_dir}
    response = client.post("/caption", json=payload)
    assert response.status_code == 422
    assert response.json()["error"]["details"]["field"] == "fixtures_dir"


def test_caption_rejects_bad_requests(client):
    assert client.post("/caption", json={"source_id": "s", "records": []}).status_code == 422
    payload = {"source_id": "s", "records": _records([(0, 0.9)]), "taxonomy": ["a", "a", "b"]}
    assert client.post("/caption", json=payload).status_code == 422
    payload = {"source_id": "s", "records": _records([(0, 0.9)]), "llm_mode": "http"}
    assert client.post("/caption", json=payload).status_code == 422


def test_lora_budget(client):
    body = client.post("/lora/budget", json={"d": 4096}).json()
    assert body == {"adapter_params": 65536, "full_params": 16777216, "ratio": 65536 / 16777216}


def test_eval_lexical(client):
    body = client.post("/eval/lexical", json={"candidate": "a b c", "reference": "a b d"}).json()
    assert body["f1"] == pytest.approx(2 / 3)
