"""Model-service interfaces, a JSON-over-HTTP client, and deterministic mocks.

Every external model (text-to-3D, image-to-3D, detector, speech transcription
and translation, object extraction, scene description, speech synthesis) is
reached through a small typed interface. The bundled mocks are pure
functions of their inputs plus fixture data, so integration tests are
byte-reproducible and no model weights are ever needed.

Wire contract for remote services: request and response bodies are JSON;
images travel base64-encoded; meshes travel as base64 compact-binary. One
retry on transient failure (connection trouble or a 5xx), then a typed
error. Every call is bounded by the descriptor timeout, including calls
into in-process mock services.
"""

from __future__ import annotations

import base64
import concurrent.futures
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import numpy as np

from .geometry import DetectionBox
from .mesh import Mesh
from .meshio import read_mesh, write_mesh
from .primitives import icosphere
from .recommend import SceneDescription

__all__ = [
    "BACKEND_KINDS",
    "BackendDescriptor",
    "BackendError",
    "BackendTimeout",
    "BackendRemoteError",
    "BackendProtocolError",
    "call_backend",
    "MockHub",
    "MockTextTo3D",
    "MockImageTo3D",
    "MockDetector",
    "MockSttTranslate",
    "MockLlmExtract",
    "MockVlmDescribe",
    "MockTts",
    "StallingBackend",
    "mesh_to_b64",
    "mesh_from_b64",
]

BACKEND_KINDS = (
    "text-to-3d",
    "image-to-3d",
    "detector",
    "stt-translate",
    "llm-extract",
    "vlm-describe",
    "tts",
)

# generation parameters forwarded opaquely to the text-to-3d service
DEFAULT_TEXT_TO_3D_PARAMS = {
    "sampling_steps": 64,
    "sigma_min": 1e-3,
    "sigma_max": 160,
    "s_churn": 0,
}


class BackendError(RuntimeError):
    pass


class BackendTimeout(BackendError):
    pass


class BackendRemoteError(BackendError):
    def __init__(self, status_code: int, message: str = ""):
        self.status_code = status_code
        super().__init__(f"remote error {status_code}: {message}")


class BackendProtocolError(BackendError):
    pass


@dataclass(frozen=True)
class BackendDescriptor:
    kind: str
    endpoint: str  # http(s)://... or mock://<name>
    timeout_s: float = 10.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.timeout_s <= 0:
            raise ValueError("timeout must be positive")
        if self.kind == "text-to-3d":
            merged = dict(DEFAULT_TEXT_TO_3D_PARAMS)
            merged.update(self.params)
            object.__setattr__(self, "params", merged)


def mesh_to_b64(mesh: Mesh) -> str:
    return base64.b64encode(write_mesh(mesh, "compact-binary")).decode("ascii")


def mesh_from_b64(data: str) -> Mesh:
    return read_mesh(base64.b64decode(data), "compact-binary")


def call_backend(
    descriptor: BackendDescriptor, request: dict, hub: "MockHub | None" = None
) -> dict:
    """POST a JSON request to the backend, with deadline and one retry."""
    if descriptor.endpoint.startswith("mock://"):
        if hub is None:
            raise BackendProtocolError("mock endpoint given but no MockHub supplied")
        return hub.call(descriptor, request)
    last_exc: Exception | None = None
    for attempt in range(2):
        try:
            resp = httpx.post(
                descriptor.endpoint,
                json={"params": descriptor.params, **request},
                timeout=descriptor.timeout_s,
            )
        except httpx.TimeoutException as exc:
            raise BackendTimeout(f"{descriptor.kind}: {exc}") from exc
        except httpx.TransportError as exc:
            last_exc = exc  # transient; retry once
            continue
        if resp.status_code >= 500 and attempt == 0:
            last_exc = BackendRemoteError(resp.status_code, resp.text[:200])
            continue
        if resp.status_code != 200:
            raise BackendRemoteError(resp.status_code, resp.text[:200])
        try:
            return resp.json()
        except json.JSONDecodeError as exc:
            raise BackendProtocolError(f"{descriptor.kind}: non-JSON response") from exc
    raise BackendRemoteError(503, f"transient failure persisted: {last_exc}")


class MockHub:
    """Routes mock:// endpoints to in-process services with a real deadline.

    Services run on a worker thread so a stalled mock cannot block the
    caller past the descriptor timeout.
    """

    def __init__(self):
        self._services: dict[str, object] = {}
        self._pool = concurrent.futures.ThreadPoolExecutor(max_workers=8)

    def register(self, name: str, service) -> "MockHub":
        self._services[name] = service
        return self

    def call(self, descriptor: BackendDescriptor, request: dict) -> dict:
        name = descriptor.endpoint[len("mock://"):]
        service = self._services.get(name)
        if service is None:
            raise BackendProtocolError(f"no mock service registered as {name!r}")
        future = self._pool.submit(service.handle, request)
        try:
            return future.result(timeout=descriptor.timeout_s)
        except concurrent.futures.TimeoutError as exc:
            future.cancel()
            raise BackendTimeout(
                f"{descriptor.kind}: mock exceeded {descriptor.timeout_s}s"
            ) from exc


def _stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.md5(text.encode("utf-8")).digest()[:8], "little")


def label_to_mesh(label: str) -> Mesh:
    """Deterministic procedural stand-in for a generated asset.

    The subdivision level is keyed off the label hash, spanning 642 to
    40,962 vertices, so downstream simplification sees every budget regime.
    Coordinates are quantized to f32 up front: that is what the wire format
    carries, so in-process and over-the-wire callers see identical meshes.
    """
    level = 3 + _stable_hash(label) % 4  # icosphere levels 3..6
    radius = 0.5 + (_stable_hash("size:" + label) % 1000) / 2000.0
    sphere = icosphere(level, radius=radius)
    return Mesh(sphere.vertices.astype(np.float32), sphere.faces)


class MockTextTo3D:
    """Emits a label-keyed icosphere; same label, same mesh, every call."""

    def __init__(self, latency_s: float = 0.0):
        self.latency_s = latency_s
        self.call_count = 0

    def generate(self, label: str) -> Mesh:
        self.call_count += 1
        if self.latency_s:
            time.sleep(self.latency_s)
        return label_to_mesh(label)

    def handle(self, request: dict) -> dict:
        mesh = self.generate(request["label"])
        return {"label": request["label"], "mesh_b64": mesh_to_b64(mesh)}


class MockImageTo3D:
    """Keys the mesh off the crop's content so distinct crops differ."""

    def __init__(self, latency_s: float = 0.0):
        self.latency_s = latency_s
        self.call_count = 0

    def generate(self, image_b64: str, label: str = "object") -> Mesh:
        self.call_count += 1
        if self.latency_s:
            time.sleep(self.latency_s)
        key = hashlib.sha256(image_b64.encode("ascii")).hexdigest()[:12]
        return label_to_mesh(f"{label}:{key}")

    def handle(self, request: dict) -> dict:
        mesh = self.generate(request["image_b64"], request.get("label", "object"))
        return {"label": request.get("label", "object"), "mesh_b64": mesh_to_b64(mesh)}


class MockDetector:
    """Returns detections from a fixture manifest, keyed by image id.

    Manifest shape: {"<image key>": [{"label", "confidence", "box"}, ...],
    "default": [...]}. The image key is either supplied in the request or
    derived from the image bytes, so responses are byte-reproducible.
    """

    def __init__(self, manifest: dict | str | Path):
        if isinstance(manifest, (str, Path)):
            manifest = json.loads(Path(manifest).read_text())
        self.manifest = manifest
        self.call_count = 0

    def detect(self, image_b64: str, image_key: str | None = None) -> list[DetectionBox]:
        self.call_count += 1
        key = image_key or hashlib.sha256(image_b64.encode("ascii")).hexdigest()[:16]
        entries = self.manifest.get(key, self.manifest.get("default", []))
        return [
            DetectionBox(
                label=e["label"],
                confidence=float(e["confidence"]),
                box=tuple(e["box"]),
            )
            for e in entries
        ]

    def handle(self, request: dict) -> dict:
        boxes = self.detect(request["image_b64"], request.get("image_key"))
        return {"detections": [b.as_dict() for b in boxes]}


class MockSttTranslate:
    """English passes through; other languages hit the fixture table."""

    def __init__(self, transcripts: dict | None = None):
        # {(lang, audio_token): english transcript}
        self.transcripts = transcripts or {}
        self.call_count = 0

    def transcribe(self, lang: str, audio_token: str) -> str:
        self.call_count += 1
        if lang == "en" or lang.startswith("en-"):
            return audio_token
        key = f"{lang}:{audio_token}"
        if key in self.transcripts:
            return self.transcripts[key]
        raise BackendProtocolError(f"no fixture transcript for {key!r}")

    def handle(self, request: dict) -> dict:
        text = self.transcribe(request["lang"], request["audio_token"])
        return {"text": text, "lang": "en"}


STOPWORDS = frozenset(
    "a an the please create make add build generate i want need would like"
    " give me put show us some my for to of and".split()
)


class MockLlmExtract:
    """Keyword object extraction: drop filler words, keep the noun phrase."""

    def __init__(self):
        self.call_count = 0

    def extract(self, text: str) -> list[str]:
        self.call_count += 1
        words = [w.strip(".,!?;:'\"") for w in text.lower().split()]
        kept = [w for w in words if w and w not in STOPWORDS]
        return [" ".join(kept)] if kept else []

    def handle(self, request: dict) -> dict:
        return {"labels": self.extract(request["text"])}


DEFAULT_SCENE = {
    "location_name": "office",
    "summary": "You are in an office space with a desk, a window, and a chair.",
    "detected_labels": ["desk", "chair", "window"],
    "suggestions": "\n".join(
        [
            "Potted Plant - Green, Square - Floor",
            "Desk Lamp - Black, Round - Desk",
            "Wall Clock - White, Round - Wall",
            "Rug - Blue, Rectangular - Floor",
            "Bookshelf - Brown, Tall - Corner",
        ]
    ),
}


class MockVlmDescribe:
    """Scene description plus five designer suggestions, fixture-driven."""

    def __init__(self, scenes: dict | None = None):
        self.scenes = scenes or {}
        self.call_count = 0

    def describe(self, image_b64: str, prompt: str, image_key: str | None = None):
        self.call_count += 1
        key = image_key or hashlib.sha256(image_b64.encode("ascii")).hexdigest()[:16]
        entry = self.scenes.get(key, DEFAULT_SCENE)
        scene = SceneDescription(
            location_name=entry["location_name"],
            summary=entry["summary"],
            detected_labels=tuple(entry["detected_labels"]),
        )
        return scene, entry["suggestions"]

    def handle(self, request: dict) -> dict:
        scene, suggestions = self.describe(
            request["image_b64"], request.get("prompt", ""), request.get("image_key")
        )
        return {
            "location_name": scene.location_name,
            "summary": scene.summary,
            "detected_labels": list(scene.detected_labels),
            "suggestions": suggestions,
        }


class MockTts:
    def __init__(self):
        self.call_count = 0

    def synthesize(self, text: str, lang: str = "en") -> bytes:
        self.call_count += 1
        return f"[{lang}] {text}".encode("utf-8")

    def handle(self, request: dict) -> dict:
        audio = self.synthesize(request["text"], request.get("lang", "en"))
        return {"audio_b64": base64.b64encode(audio).decode("ascii")}


class StallingBackend:
    """Never answers within any sane deadline; for timeout tests."""

    def __init__(self, stall_s: float = 60.0):
        self.stall_s = stall_s

    def handle(self, request: dict) -> dict:
        time.sleep(self.stall_s)
        return {}
