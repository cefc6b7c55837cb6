import base64
import json
import threading
import time

import pytest

from meshforge.backends import (
    BackendDescriptor,
    BackendProtocolError,
    BackendRemoteError,
    BackendTimeout,
    MockDetector,
    MockHub,
    MockImageTo3D,
    MockLlmExtract,
    MockSttTranslate,
    MockTextTo3D,
    MockTts,
    MockVlmDescribe,
    StallingBackend,
    call_backend,
    label_to_mesh,
    mesh_from_b64,
    mesh_to_b64,
)
from meshforge.mesh import validate
from meshforge.primitives import tetrahedron


class TestDescriptor:
    def test_text_to_3d_default_generation_params(self):
        d = BackendDescriptor(kind="text-to-3d", endpoint="mock://gen")
        assert d.params["sampling_steps"] == 64
        assert d.params["sigma_min"] == 1e-3
        assert d.params["sigma_max"] == 160
        assert d.params["s_churn"] == 0

    def test_param_override_merges(self):
        d = BackendDescriptor(
            kind="text-to-3d", endpoint="mock://gen", params={"sampling_steps": 32}
        )
        assert d.params["sampling_steps"] == 32
        assert d.params["sigma_max"] == 160

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            BackendDescriptor(kind="magic", endpoint="mock://x")

    def test_bad_timeout_rejected(self):
        with pytest.raises(ValueError):
            BackendDescriptor(kind="tts", endpoint="mock://x", timeout_s=0)


class TestMeshPayload:
    def test_round_trip(self):
        m = tetrahedron()
        assert mesh_from_b64(mesh_to_b64(m)) == m


class TestMockTextTo3D:
    def test_deterministic_per_label(self):
        gen = MockTextTo3D()
        a = gen.generate("apple")
        b = gen.generate("apple")
        assert a == b
        assert gen.call_count == 2

    def test_different_labels_can_differ(self):
        gen = MockTextTo3D()
        assert gen.generate("apple") != gen.generate("sofa")

    def test_meshes_are_valid_icospheres(self):
        for label in ("apple", "orange", "banana", "lamp", "rug"):
            m = label_to_mesh(label)
            assert validate(m).ok
            assert m.vertex_count in (642, 2562, 10242, 40962)

    def test_levels_span_budget_regimes(self):
        counts = {label_to_mesh(f"object {i}").vertex_count for i in range(60)}
        assert counts == {642, 2562, 10242, 40962}

    def test_http_style_handle(self):
        gen = MockTextTo3D()
        resp = gen.handle({"label": "apple"})
        assert mesh_from_b64(resp["mesh_b64"]) == gen.generate("apple")


class TestMockDetector:
    MANIFEST = {
        "kitchen": [
            {"label": "apple", "confidence": 0.93, "box": [10, 10, 40, 40]},
            {"label": "mug", "confidence": 0.41, "box": [60, 20, 90, 50]},
        ],
        "default": [{"label": "cube", "confidence": 0.8, "box": [0, 0, 5, 5]}],
    }

    def test_fixture_lookup_by_key(self):
        det = MockDetector(self.MANIFEST)
        boxes = det.detect("whatever", image_key="kitchen")
        assert [b.label for b in boxes] == ["apple", "mug"]

    def test_unknown_image_falls_back_to_default(self):
        det = MockDetector(self.MANIFEST)
        boxes = det.detect(base64.b64encode(b"some image").decode())
        assert [b.label for b in boxes] == ["cube"]

    def test_loads_manifest_from_file(self, tmp_path):
        p = tmp_path / "detections.json"
        p.write_text(json.dumps(self.MANIFEST))
        det = MockDetector(p)
        assert det.detect("x", image_key="kitchen")[0].label == "apple"

    def test_byte_identical_responses(self):
        det = MockDetector(self.MANIFEST)
        img = base64.b64encode(b"img bytes").decode()
        assert det.handle({"image_b64": img}) == det.handle({"image_b64": img})


class TestMockSttTranslate:
    def test_english_identity(self):
        stt = MockSttTranslate()
        assert stt.transcribe("en", "create an apple") == "create an apple"

    def test_non_english_uses_fixture(self):
        stt = MockSttTranslate({"fa:token-1": "create an apple"})
        assert stt.transcribe("fa", "token-1") == "create an apple"

    def test_missing_fixture_is_protocol_error(self):
        with pytest.raises(BackendProtocolError):
            MockSttTranslate().transcribe("fa", "unknown")


class TestMockLlmExtract:
    def test_strips_filler(self):
        ex = MockLlmExtract()
        assert ex.extract("please create an apple") == ["apple"]

    def test_multiword_object(self):
        ex = MockLlmExtract()
        assert ex.extract("I want a red apple") == ["red apple"]

    def test_empty_after_stopwords(self):
        assert MockLlmExtract().extract("please make me a") == []


class TestMockVlm:
    def test_default_scene_has_five_suggestions(self):
        vlm = MockVlmDescribe()
        scene, suggestions = vlm.describe("img", "prompt")
        assert scene.location_name == "office"
        assert len(suggestions.splitlines()) == 5

    def test_handle_shape(self):
        resp = MockVlmDescribe().handle({"image_b64": "x", "prompt": "p"})
        assert set(resp) == {"location_name", "summary", "detected_labels", "suggestions"}


def test_mock_tts_is_pure():
    tts = MockTts()
    assert tts.synthesize("hello") == tts.synthesize("hello")
    assert b"hello" in tts.synthesize("hello")


class TestCallBackend:
    def test_mock_routing(self):
        hub = MockHub().register("gen", MockTextTo3D())
        d = BackendDescriptor(kind="text-to-3d", endpoint="mock://gen", timeout_s=5)
        resp = call_backend(d, {"label": "apple"}, hub=hub)
        assert validate(mesh_from_b64(resp["mesh_b64"])).ok

    def test_unregistered_mock_is_protocol_error(self):
        hub = MockHub()
        d = BackendDescriptor(kind="tts", endpoint="mock://nope")
        with pytest.raises(BackendProtocolError):
            call_backend(d, {}, hub=hub)

    def test_stalling_mock_hits_deadline(self):
        hub = MockHub().register("slow", StallingBackend(stall_s=30))
        d = BackendDescriptor(kind="tts", endpoint="mock://slow", timeout_s=0.2)
        t0 = time.perf_counter()
        with pytest.raises(BackendTimeout):
            call_backend(d, {"text": "hi"}, hub=hub)
        assert time.perf_counter() - t0 < 2.0  # bounded by deadline, not the stall

    def test_http_round_trip_and_errors(self):
        # stdlib HTTP server standing in for a remote model service
        from http.server import BaseHTTPRequestHandler, HTTPServer

        calls = {"n": 0}

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                calls["n"] += 1
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                if self.path == "/ok":
                    payload = json.dumps({"echo": body["text"]}).encode()
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                elif self.path == "/flaky":
                    status = 503 if calls["n"] == 1 else 200
                    payload = json.dumps({"ok": True}).encode()
                    self.send_response(status)
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                elif self.path == "/bad-json":
                    self.send_response(200)
                    self.send_header("Content-Length", "9")
                    self.end_headers()
                    self.wfile.write(b"not json!")
                else:
                    self.send_response(404)
                    self.send_header("Content-Length", "0")
                    self.end_headers()

            def log_message(self, *args):
                pass

        server = HTTPServer(("127.0.0.1", 0), Handler)
        port = server.server_address[1]
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            base = f"http://127.0.0.1:{port}"
            ok = call_backend(
                BackendDescriptor(kind="tts", endpoint=f"{base}/ok"), {"text": "hi"}
            )
            assert ok == {"echo": "hi"}

            calls["n"] = 0
            flaky = call_backend(
                BackendDescriptor(kind="tts", endpoint=f"{base}/flaky"), {"text": "x"}
            )
            assert flaky == {"ok": True}
            assert calls["n"] == 2  # one retry on the 5xx

            with pytest.raises(BackendProtocolError):
                call_backend(
                    BackendDescriptor(kind="tts", endpoint=f"{base}/bad-json"),
                    {"text": "x"},
                )

            with pytest.raises(BackendRemoteError) as err:
                call_backend(
                    BackendDescriptor(kind="tts", endpoint=f"{base}/missing"),
                    {"text": "x"},
                )
            assert err.value.status_code == 404
        finally:
            server.shutdown()
            thread.join(timeout=2)

    def test_connection_refused_distinguishable(self):
        d = BackendDescriptor(kind="tts", endpoint="http://127.0.0.1:1/x", timeout_s=1)
        with pytest.raises(BackendRemoteError):
            call_backend(d, {})
