import random

import pytest

from meshforge.backends import (
    BackendProtocolError,
    MockDetector,
    MockTextTo3D,
    MockVlmDescribe,
)
from meshforge.embedding import HashingEmbeddingProvider
from meshforge.mesh import Mesh, validate
from meshforge.pipeline import (
    Backends,
    Pipeline,
    PipelineConfig,
    REPORT_ROWS,
    report_metrics,
)
from meshforge.repository import AssetRepository
from meshforge.session import EVENT_TYPES, SessionState, TransitionError

KITCHEN_MANIFEST = {
    "default": [
        {"label": "apple", "confidence": 0.93, "box": [10, 10, 40, 40]},
        {"label": "mug", "confidence": 0.35, "box": [60, 20, 90, 50]},
    ]
}


@pytest.fixture
def provider():
    return HashingEmbeddingProvider(384)


@pytest.fixture
def repo(tmp_path):
    r = AssetRepository(tmp_path / "repo", dimension=384)
    yield r
    r.close()


@pytest.fixture
def pipeline(repo, provider):
    backends = Backends(detector=MockDetector(KITCHEN_MANIFEST))
    return Pipeline(repo, provider, backends, PipelineConfig(simplify_target=300))


def seed_repo(pipe, labels=("apple", "orange", "banana", "plate", "knife")):
    for label in labels:
        mesh = MockTextTo3D().generate(label)
        from meshforge.decimate import SimplifyConfig, simplify

        reduced, _ = simplify(mesh, SimplifyConfig(target_vertices=300))
        pipe.repo.add_mesh(label, reduced, pipe.provider, source="imported")


def run_speech_session(pipe, text="please create an apple"):
    s = pipe.new_session("en")
    pipe.handle_event(s, {"type": "wake"})
    pipe.handle_event(s, {"type": "transcript", "text": text})
    pipe.handle_event(s, {"type": "stop"})
    return s


class TestSpeechFlow:
    def test_happy_path_reaches_offers(self, pipeline):
        s = run_speech_session(pipeline)
        assert s.state is SessionState.OFFERS
        assert s.menus is not None
        assert s.menus.detected == ("apple",)

    def test_repository_menu_leads_with_matching_label(self, pipeline):
        seed_repo(pipeline)
        s = run_speech_session(pipeline)
        repo_menu = s.menus.repository
        assert repo_menu, "expected repository hits for a seeded label"
        assert repo_menu[0][0] == "apple"
        scores = [score for _, _, score in repo_menu]
        assert scores == sorted(scores, reverse=True)

    def test_recommended_list_has_five_suggestions(self, pipeline):
        s = run_speech_session(pipeline)
        assert len(s.menus.recommended) == 5

    def test_selection_generates_validates_and_simplifies(self, pipeline):
        s = run_speech_session(pipeline)
        pipeline.handle_event(
            s, {"type": "selection", "menu": "detected", "label": "apple"}
        )
        assert s.state is SessionState.PRESENTING
        assert s.cache_hit is False
        record = pipeline.repo.get(s.asset_id)
        mesh = pipeline.repo.load_mesh(record)
        assert validate(mesh).ok
        assert mesh.vertex_count <= 300
        assert s.timings.time_to_object == pytest.approx(
            s.timings.generate + s.timings.simplify
        )

    def test_repository_selection_never_invokes_generator(self, pipeline):
        seed_repo(pipeline)
        s = run_speech_session(pipeline)
        label, asset_id, _ = s.menus.repository[0]
        gen = pipeline.backends.generator
        before = gen.call_count
        pipeline.handle_event(
            s, {"type": "selection", "menu": "repository", "asset_id": asset_id}
        )
        assert gen.call_count == before  # zero generator invocations
        assert s.state is SessionState.PRESENTING
        assert s.cache_hit is True
        assert pipeline.repo.get(asset_id).hit_count == 1

    def test_same_text_twice_second_is_cache_hit(self, pipeline):
        s1 = run_speech_session(pipeline)
        pipeline.handle_event(
            s1, {"type": "selection", "menu": "detected", "label": "apple"}
        )
        assert s1.cache_hit is False
        s2 = run_speech_session(pipeline)
        gen_calls_before = pipeline.backends.generator.call_count
        pipeline.handle_event(
            s2, {"type": "selection", "menu": "detected", "label": "apple"}
        )
        assert s2.cache_hit is True
        assert pipeline.backends.generator.call_count == gen_calls_before
        assert s2.asset_id == s1.asset_id

    def test_audio_token_transcribed_on_stop(self, pipeline):
        s = pipeline.new_session("en")
        pipeline.handle_event(s, {"type": "wake"})
        pipeline.handle_event(
            s, {"type": "transcript", "text": "", "audio_token": "make a banana"}
        )
        pipeline.handle_event(s, {"type": "stop"})
        assert s.transcript == "make a banana"
        assert s.menus.detected == ("banana",)

    def test_non_english_uses_translation_fixture(self, repo, provider):
        from meshforge.backends import MockSttTranslate

        backends = Backends(stt=MockSttTranslate({"fa:token-9": "create an apple"}))
        pipe = Pipeline(repo, provider, backends, PipelineConfig(simplify_target=300))
        s = pipe.new_session("fa")
        pipe.handle_event(s, {"type": "wake"})
        pipe.handle_event(s, {"type": "transcript", "text": "", "audio_token": "token-9"})
        pipe.handle_event(s, {"type": "stop"})
        assert s.menus.detected == ("apple",)
        assert s.timings.transcribe > 0


class TestImageFlow:
    def test_capture_objects_path(self, pipeline):
        s = pipeline.new_session("en")
        pipeline.handle_event(
            s,
            {"type": "capture", "image_b64": "aW1n", "mode": "objects",
             "image_size": [100, 80]},
        )
        assert s.state is SessionState.SUGGESTIONS
        # confidence 0.35 mug dropped at the 0.5 threshold
        assert [d.label for d in s.detections] == ["apple"]
        assert s.menus.detected == ("apple",)

    def test_lasso_path_filters_by_zone(self, pipeline):
        s = pipeline.new_session("en")
        pipeline.handle_event(
            s, {"type": "capture", "image_b64": "aW1n", "image_size": [100, 80]}
        )
        assert s.state is SessionState.OBSERVING
        # lasso that excludes the apple's center (25, 25)
        pipeline.handle_event(
            s,
            {"type": "lasso", "points": [[50, 0], [100, 0], [100, 80], [50, 80]]},
        )
        assert s.state is SessionState.SUGGESTIONS
        assert s.detections == ()

    def test_image_selection_serves_simplified_asset(self, pipeline):
        s = pipeline.new_session("en")
        pipeline.handle_event(
            s,
            {"type": "capture", "image_b64": "aW1n", "mode": "objects",
             "image_size": [100, 80]},
        )
        pipeline.handle_event(
            s, {"type": "selection", "menu": "image", "label": "apple"}
        )
        assert s.state is SessionState.PRESENTING
        record = pipeline.repo.get(s.asset_id)
        assert record.source == "image-derived"
        assert pipeline.repo.load_mesh(record).vertex_count <= 300


class TestDegradedOffers:
    def test_recommender_failure_degrades_not_aborts(self, repo, provider):
        class ExplodingVlm(MockVlmDescribe):
            def describe(self, *a, **k):
                raise BackendProtocolError("vlm offline")

        backends = Backends(vlm=ExplodingVlm())
        pipe = Pipeline(repo, provider, backends, PipelineConfig(simplify_target=300))
        s = run_speech_session(pipe)
        assert s.state is SessionState.OFFERS
        assert s.menus.recommended == ()
        assert any("recommendations unavailable" in w for w in s.menus.warnings)

    def test_empty_repo_menu_is_empty_not_error(self, pipeline):
        s = run_speech_session(pipeline)
        assert s.menus.repository == ()

    def test_offer_deadline_bounds_stalling_recommender(self, repo, provider):
        import time as _time

        class StallingVlm(MockVlmDescribe):
            def describe(self, *a, **k):
                _time.sleep(30)

        backends = Backends(vlm=StallingVlm())
        cfg = PipelineConfig(simplify_target=300, offer_deadline_s=0.3)
        pipe = Pipeline(repo, provider, backends, cfg)
        t0 = _time.perf_counter()
        s = run_speech_session(pipe)
        assert _time.perf_counter() - t0 < 5.0
        assert s.state is SessionState.OFFERS
        assert s.menus.recommended == ()


class TestFailurePaths:
    def test_generator_error_fails_session_retriably(self, repo, provider):
        class ExplodingGen(MockTextTo3D):
            def generate(self, label):
                raise BackendProtocolError("gpu on fire")

        pipe = Pipeline(repo, provider, Backends(generator=ExplodingGen()),
                        PipelineConfig(simplify_target=300))
        s = run_speech_session(pipe)
        pipe.handle_event(s, {"type": "selection", "menu": "detected", "label": "apple"})
        assert s.state is SessionState.FAILED
        assert s.failure["retriable"] is True

    def test_invalid_generator_mesh_fails_with_report(self, repo, provider):
        class BrokenGen(MockTextTo3D):
            def generate(self, label):
                return Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 9]])

        pipe = Pipeline(repo, provider, Backends(generator=BrokenGen()),
                        PipelineConfig(simplify_target=300))
        s = run_speech_session(pipe)
        pipe.handle_event(s, {"type": "selection", "menu": "detected", "label": "apple"})
        assert s.state is SessionState.FAILED
        assert s.failure["retriable"] is False
        assert "invalid mesh" in s.failure["reason"]

    def test_failed_session_keeps_timing_prefix(self, repo, provider):
        class ExplodingGen(MockTextTo3D):
            def generate(self, label):
                raise BackendProtocolError("boom")

        pipe = Pipeline(repo, provider, Backends(generator=ExplodingGen()),
                        PipelineConfig(simplify_target=300))
        s = run_speech_session(pipe)
        pipe.handle_event(s, {"type": "selection", "menu": "detected", "label": "apple"})
        assert s.timings.extract > 0  # pre-failure stages retained


class TestGeneratorOnlyInBaking:
    def test_random_event_walks_never_generate_outside_baking(self, repo, provider):
        gen = MockTextTo3D()
        pipe = Pipeline(repo, provider, Backends(generator=gen),
                        PipelineConfig(simplify_target=300))
        rng = random.Random(7)
        payloads = {
            "transcript": {"text": "make an apple"},
            "capture": {"image_b64": "aW1n", "mode": "objects", "image_size": [10, 10]},
            "lasso": {"points": [[0, 0], [10, 0], [10, 10]]},
            "selection": {"menu": "detected", "label": "apple"},
        }
        for _ in range(60):
            s = pipe.new_session("en")
            for _ in range(12):
                ev = rng.choice(list(EVENT_TYPES))
                calls_before = gen.call_count
                state_before = s.state
                try:
                    pipe.handle_event(s, {"type": ev, **payloads.get(ev, {})})
                except TransitionError:
                    assert gen.call_count == calls_before
                    assert s.state is state_before
                    continue
                if gen.call_count != calls_before:
                    # generation may only have happened while Baking
                    assert state_before in (SessionState.OFFERS, SessionState.SUGGESTIONS)
                    assert SessionState.BAKING in s.state_history


class TestMetricsReport:
    def test_rows_named_like_published_table(self, pipeline):
        seed_repo(pipeline)
        sessions = []
        for i in range(4):
            s = run_speech_session(pipeline, text=f"please create an apple")
            if i % 2 == 0 and s.menus.repository:
                _, asset_id, _ = s.menus.repository[0]
                pipeline.handle_event(
                    s, {"type": "selection", "menu": "repository", "asset_id": asset_id}
                )
            else:
                pipeline.handle_event(
                    s, {"type": "selection", "menu": "text", "label": f"gadget {i}"}
                )
            sessions.append(s)
        report = report_metrics(sessions, pipeline.repo)
        for row in REPORT_ROWS:
            assert row in report["rows"]
        assert report["rows"]["Task Success Rate (%)"] == 100.0
        assert report["rows"]["Mesh File Size (MB)"] > 0

    def test_hit_rate_counting(self, pipeline):
        seed_repo(pipeline, labels=("apple",))
        sessions = []
        for i in range(10):
            s = run_speech_session(pipeline)
            if i < 4:
                _, asset_id, _ = s.menus.repository[0]
                pipeline.handle_event(
                    s, {"type": "selection", "menu": "repository", "asset_id": asset_id}
                )
            else:
                pipeline.handle_event(
                    s, {"type": "selection", "menu": "text", "label": f"widget {i}"}
                )
            sessions.append(s)
        report = report_metrics(sessions, pipeline.repo)
        assert report["cache"]["hit_rate"] == pytest.approx(0.4)
        assert report["cache"]["generator_invocations"] == 6

    def test_zero_sessions_no_division(self):
        report = report_metrics([])
        assert report["rows"] == {}
        assert report["session_count"] == 0

    def test_failed_sessions_in_error_rate(self, repo, provider):
        class ExplodingGen(MockTextTo3D):
            def generate(self, label):
                raise BackendProtocolError("boom")

        pipe = Pipeline(repo, provider, Backends(generator=ExplodingGen()),
                        PipelineConfig(simplify_target=300))
        s = run_speech_session(pipe)
        pipe.handle_event(s, {"type": "selection", "menu": "detected", "label": "apple"})
        report = report_metrics([s], repo)
        assert report["rows"]["System Error Rate (errors/task)"] == 1.0
        assert report["rows"]["Task Success Rate (%)"] == 0.0


class TestNoveltyHistory:
    def test_history_accumulates_offer_batches(self, pipeline):
        s = run_speech_session(pipeline)
        assert len(s.history) == 1
        assert len(s.history[0]) == 5
