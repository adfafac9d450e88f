"""Control-plane endpoints, training lifecycle, coalescing, and the stream."""

import io
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from groovelab import vae
from groovelab.encoding import Pattern, decode_tensor
from groovelab.midi import extract_drum_notes, parse_smf, write_smf
from groovelab.service import Session, create_app
from conftest import synthetic_corpus


@pytest.fixture
def session() -> Session:
    return Session()


@pytest.fixture
def client(session) -> TestClient:
    return TestClient(create_app(session))


def corpus_files(n_patterns: int = 6) -> list[tuple[str, bytes]]:
    patterns = synthetic_corpus(n_patterns, seed=13)
    return [
        (f"beat_{i}.mid", write_smf(p, ppq=480, tempo_bpm=120)) for i, p in enumerate(patterns)
    ]


def upload(client: TestClient, files: list[tuple[str, bytes]]):
    return client.post(
        "/corpus",
        files=[("files", (name, io.BytesIO(data), "audio/midi")) for name, data in files],
    )


def train_and_wait(client: TestClient, session: Session, epochs: int = 3, **overrides) -> None:
    body = {"epochs": epochs, "seed": 1, **overrides}
    response = client.post("/train", json=body)
    assert response.status_code == 202
    session.join_training(timeout=120)
    assert session.status == "done"


class TestCorpus:
    def test_upload_reports_pattern_counts(self, client):
        response = upload(client, corpus_files(3))
        assert response.status_code == 200
        files = response.json()["files"]
        assert len(files) == 3
        assert all(f["patterns"] == 1 and f["error"] is None for f in files)

    def test_bad_file_reported_not_fatal(self, client, session):
        response = upload(client, [("junk.mid", b"RIFF not midi"), *corpus_files(1)])
        files = response.json()["files"]
        assert files[0]["error"] is not None
        assert files[1]["patterns"] == 1
        assert len(session.dataset) == 1

    def test_no_drum_channel_is_zero_patterns(self, client):
        # a valid file whose only note sits on channel 1
        track = bytes([0x00, 0x90, 60, 90, 0x00, 0xFF, 0x2F, 0x00])
        from conftest import smf_bytes

        response = upload(client, [("melodic.mid", smf_bytes([track]))])
        [report] = response.json()["files"]
        assert report["patterns"] == 0 and report["error"] is None

    def test_accumulates_across_calls(self, client, session):
        upload(client, corpus_files(2))
        upload(client, corpus_files(2))
        assert len(session.dataset) == 4


class TestTrainingLifecycle:
    def test_rejects_empty_corpus(self, client):
        assert client.post("/train", json={"epochs": 1}).status_code == 409

    def test_full_run_reaches_done(self, client, session):
        upload(client, corpus_files(6))
        train_and_wait(client, session, epochs=3)
        status = client.get("/status").json()
        assert status["status"] == "done"
        assert status["has_model"] is True
        assert len(status["history"]) == 3
        assert status["epoch"] == 3

    def test_second_start_rejected_while_training(self, client, session):
        upload(client, corpus_files(6))
        assert client.post("/train", json={"epochs": 200, "seed": 1}).status_code == 202
        assert client.post("/train", json={"epochs": 1}).status_code == 409
        client.delete("/train")
        session.join_training(timeout=120)

    def test_stop_keeps_completed_epochs(self, client, session):
        upload(client, corpus_files(6))
        stop_after = {"fired": False}

        original = session.broadcaster.publish

        def spy(message):
            if message.get("type") == "loss" and message["epoch"] >= 2 and not stop_after["fired"]:
                stop_after["fired"] = True
                session.stop_training()
            original(message)

        session.broadcaster.publish = spy
        client.post("/train", json={"epochs": 500, "seed": 1})
        session.join_training(timeout=120)
        assert session.status == "done"
        assert 3 <= len(session.history) < 500

    def test_bad_config_rejected(self, client, session):
        upload(client, corpus_files(4))
        response = client.post("/train", json={"epochs": 5, "batch_size": 1})
        assert response.status_code == 409
        assert "batch" in response.json()["detail"]


class TestLatentAndPattern:
    def test_latent_without_model_rejected(self, client):
        assert client.post("/latent", json={"x": 0, "y": 0}).status_code == 409
        assert client.get("/pattern").status_code == 409

    def test_pattern_follows_latent(self, client, session):
        upload(client, corpus_files(6))
        train_and_wait(client, session)
        assert client.post("/latent", json={"x": 0.5, "y": -0.5}).status_code == 202
        assert session.wait_latent_idle()
        payload = client.get("/pattern").json()
        assert payload["type"] == "pattern"
        assert len(payload["onsets"]) == 9 and len(payload["onsets"][0]) == 32

        expected = decode_tensor(
            vae.decode_latent(session.model, (0.5, -0.5)), session.sequencer.onset_threshold
        )
        assert session.sequencer.current_pattern() == expected

    def test_burst_coalesces_latest_wins(self, client, session):
        upload(client, corpus_files(6))
        train_and_wait(client, session)
        zs = [(float(i) / 50 - 1, 1 - float(i) / 50) for i in range(100)]
        for x, y in zs:
            client.post("/latent", json={"x": x, "y": y})
        assert session.wait_latent_idle()
        expected = decode_tensor(
            vae.decode_latent(session.model, zs[-1]), session.sequencer.onset_threshold
        )
        assert session.sequencer.current_pattern() == expected
        assert session.sequencer.latent == zs[-1]


class TestExportAndModel:
    def test_export_roundtrips(self, client, session):
        upload(client, corpus_files(6))
        train_and_wait(client, session)
        client.post("/latent", json={"x": 0.0, "y": 0.0})
        session.wait_latent_idle()
        response = client.get("/export.mid", params={"tempo": 140})
        assert response.status_code == 200
        notes = extract_drum_notes(parse_smf(response.content))
        pattern = session.sequencer.current_pattern()
        assert len(notes) == len(pattern.onsets)

    def test_export_without_model_rejected(self, client):
        assert client.get("/export.mid").status_code == 409

    def test_model_roundtrip_via_endpoints(self, client, session, rng):
        upload(client, corpus_files(6))
        train_and_wait(client, session)
        blob = client.get("/model.rvae").content
        loaded = vae.load_weights(blob)
        z = rng.standard_normal((4, 2))
        for a, b in zip(session.model.decode(z), loaded.decode(z)):
            assert np.array_equal(a, b)

    def test_model_upload_enables_generation(self, client, session):
        model = vae.VaeModel(np.random.default_rng(3))
        response = client.put("/model.rvae", content=vae.save_weights(model))
        assert response.status_code == 200
        assert client.post("/latent", json={"x": 0, "y": 0}).status_code == 202
        session.wait_latent_idle()
        assert client.get("/pattern").status_code == 200

    def test_corrupt_model_upload_rejected(self, client):
        assert client.put("/model.rvae", content=b"garbage").status_code == 422


class TestTransportAutomationThreshold:
    def test_transport_roundtrip(self, client):
        response = client.post("/transport", json={"playing": True, "tempo_bpm": 133.0})
        assert response.json()["playing"] is True
        assert response.json()["tempo_bpm"] == 133.0
        out_of_range = client.post("/transport", json={"tempo_bpm": 5000})
        assert out_of_range.status_code == 422

    def test_record_requires_playing(self, client):
        assert client.post("/automation/record").status_code == 409

    def test_record_play_cycle(self, client, session):
        model = vae.VaeModel(np.random.default_rng(3))
        client.put("/model.rvae", content=vae.save_weights(model))
        session.wait_latent_idle()
        client.post("/transport", json={"playing": True})
        assert client.post("/automation/record").status_code == 200
        session.sequencer.tick(100)
        client.post("/latent", json={"x": 0.1, "y": 0.1})
        session.wait_latent_idle()
        session.sequencer.tick(900)
        client.post("/latent", json={"x": 0.9, "y": 0.9})
        session.wait_latent_idle()
        stopped = client.post("/automation/stop").json()
        assert len(stopped["samples"]) == 2
        assert client.post("/automation/play").json()["playing_clip"] is True

    def test_play_without_clip_rejected(self, client):
        assert client.post("/automation/play").status_code == 409

    def test_threshold_endpoints(self, client):
        assert client.get("/threshold").json()["value"] == 0.5
        assert client.put("/threshold", json={"value": 0.3}).status_code == 200
        assert client.get("/threshold").json()["value"] == 0.3
        assert client.put("/threshold", json={"value": 1.5}).status_code == 422


class TestStream:
    def test_status_then_loss_then_pattern_events(self, client, session):
        upload(client, corpus_files(6))
        with client.websocket_connect("/stream") as ws:
            first = ws.receive_json()
            assert first["type"] == "status"

            client.post("/train", json={"epochs": 2, "seed": 1})
            events = [ws.receive_json() for _ in range(5)]
            kinds = [e["type"] for e in events]
            assert "loss" in kinds
            loss_events = [e for e in events if e["type"] == "loss"]
            for event in loss_events:
                assert np.isfinite(event["train"]["total"])
                assert np.isfinite(event["val"]["total"])
                assert event["val"]["kl"] >= 0
            session.join_training(timeout=120)

    def test_inbound_latent_message(self, client, session):
        upload(client, corpus_files(6))
        train_and_wait(client, session)
        with client.websocket_connect("/stream") as ws:
            ws.receive_json()  # status
            ws.send_json({"type": "latent", "x": 0.25, "y": -0.75})
            deadline = time.time() + 5
            while time.time() < deadline:
                event = ws.receive_json()
                if event["type"] == "pattern":
                    break
            else:
                pytest.fail("no pattern event received")
        session.wait_latent_idle()
        assert session.sequencer.latent == (0.25, -0.75)


class TestStateMachineSafety:
    def test_random_api_sequences_never_double_train(self, client, session):
        upload(client, corpus_files(4))
        rng = np.random.default_rng(0)
        active_runs_seen = []
        for _ in range(60):
            op = rng.integers(4)
            if op == 0:
                client.post("/train", json={"epochs": 30, "seed": int(rng.integers(100))})
            elif op == 1:
                client.delete("/train")
            elif op == 2:
                client.get("/status")
            else:
                time.sleep(0.01)
            threads = [
                t for t in __import__("threading").enumerate() if t.name == "trainer" and t.is_alive()
            ]
            active_runs_seen.append(len(threads))
        client.delete("/train")
        session.join_training(timeout=120)
        assert max(active_runs_seen) <= 1
