"""Session orchestration: offers, the cache-or-generate decision, metrics.

The pipeline owns the GPU-avoidance contract: a repository selection is
served straight from the blob store with zero generator invocations, and a
text selection first consults the duplicate detector so that repeating a
request becomes a cache hit. Generation only ever happens while a session
is Baking, i.e. after an explicit human selection.

Offer assembly runs the recommender and the repository search on separate
workers with a per-branch deadline; a failed or slow branch degrades its
menu to empty with a warning instead of aborting the offer step.
"""

from __future__ import annotations

import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

from .backends import (
    BackendError,
    MockDetector,
    MockImageTo3D,
    MockLlmExtract,
    MockSttTranslate,
    MockTextTo3D,
    MockTts,
    MockVlmDescribe,
)
from .decimate import SimplifyConfig, simplify
from .embedding import EmbeddingProvider, HashingEmbeddingProvider
from .geometry import LassoPolygon, filter_detections
from .mesh import validate
from .meshio import binary_size_counts
from .recommend import (
    SceneDescription,
    build_designer_prompt,
    filter_duplicates,
    parse_suggestions,
)
from .repository import AssetRepository
from .session import (
    OfferMenus,
    Session,
    SessionState,
    TransitionError,
    advance,
)

__all__ = ["Backends", "PipelineConfig", "Pipeline", "report_metrics", "REPORT_ROWS"]


@dataclass
class Backends:
    """The pluggable model services; defaults are the deterministic mocks."""

    generator: object = field(default_factory=MockTextTo3D)
    image_generator: object = field(default_factory=MockImageTo3D)
    detector: object = field(default_factory=lambda: MockDetector({"default": []}))
    stt: object = field(default_factory=MockSttTranslate)
    extractor: object = field(default_factory=MockLlmExtract)
    vlm: object = field(default_factory=MockVlmDescribe)
    tts: object = field(default_factory=MockTts)


@dataclass
class PipelineConfig:
    simplify_target: int = 1000
    repo_menu_size: int = 5
    repo_min_score: float = 0.3
    duplicate_threshold: float = 0.92
    offer_deadline_s: float = 10.0
    detection_min_confidence: float = 0.5
    # benchmark shim: models blob-store latency when comparing cache hits
    # against generation without real hardware in the loop
    retrieval_delay_s: float = 0.0


@contextmanager
def _timed(timings, stage: str):
    t0 = time.perf_counter()
    try:
        yield
    finally:
        timings.add(stage, time.perf_counter() - t0)


class Pipeline:
    def __init__(
        self,
        repo: AssetRepository,
        provider: EmbeddingProvider | None = None,
        backends: Backends | None = None,
        config: PipelineConfig | None = None,
    ):
        self.repo = repo
        self.provider = provider or HashingEmbeddingProvider(repo.dimension)
        self.backends = backends or Backends()
        self.config = config or PipelineConfig()
        self._pool = ThreadPoolExecutor(max_workers=4)

    # --- session event handling ------------------------------------------------

    def new_session(self, language: str = "en") -> Session:
        return Session(language=language)

    def handle_event(self, session: Session, event: dict) -> Session:
        """Apply a client event plus whatever pipeline work it triggers.

        Raises TransitionError on events illegal in the current state.
        """
        etype = event.get("type")
        if etype == "wake":
            advance(session, "wake")
        elif etype == "transcript":
            advance(session, "transcript")
            session.transcript = event.get("text", "")
            session.audio_token = event.get("audio_token")
        elif etype == "stop":
            advance(session, "stop")
            self._think(session)
        elif etype == "capture":
            advance(session, "capture")
            session.capture_image = event.get("image_b64", "")
            session.capture_mode = event.get("mode", "zone")
            session.image_size = tuple(event.get("image_size", (0, 0)))
            if session.capture_mode == "objects":
                self._observe(session, lasso=None)
        elif etype == "lasso":
            advance(session, "lasso")
            points = tuple(tuple(p) for p in event.get("points", ()))
            session.lasso_points = points
            if event.get("image_size"):
                session.image_size = tuple(event["image_size"])
            self._observe(session, lasso=LassoPolygon(points))
        elif etype == "selection":
            advance(session, "selection")
            session.selection = {k: v for k, v in event.items() if k != "type"}
            self._bake(session)
        elif etype == "new_request":
            advance(session, "new_request")
        else:
            raise TransitionError(session.state, str(etype))
        return session

    # --- speech path -------------------------------------------------------------

    def _think(self, session: Session):
        """Transcribe if needed, extract labels, assemble the three menus."""
        try:
            text = session.transcript or ""
            if session.audio_token and not text:
                with _timed(session.timings, "transcribe"):
                    text = self.backends.stt.transcribe(
                        session.language, session.audio_token
                    )
                session.transcript = text
            with _timed(session.timings, "extract"):
                labels = self.backends.extractor.extract(text) if text else []
        except BackendError as exc:
            session.failure = {"reason": str(exc), "retriable": True}
            advance(session, "backend_error")
            return
        menus = self.assemble_offers(labels, scene=None, session=session)
        session.menus = menus
        session.history.append({s.name.lower() for s in menus.recommended})
        advance(session, "menus_ready")

    # --- image path ---------------------------------------------------------------

    def _observe(self, session: Session, lasso: LassoPolygon | None):
        cfg = self.config
        try:
            with _timed(session.timings, "extract"):
                detections = self.backends.detector.detect(session.capture_image or "")
                kept = filter_detections(
                    detections, lasso, cfg.detection_min_confidence
                )
            session.detections = tuple(kept)
            with _timed(session.timings, "recommend"):
                scene, _suggestion_text = self.backends.vlm.describe(
                    session.capture_image or "", build_designer_prompt()
                )
        except BackendError as exc:
            session.failure = {"reason": str(exc), "retriable": True}
            advance(session, "backend_error")
            return
        labels = [d.label for d in kept]
        menus = self.assemble_offers(labels, scene=scene, session=session)
        session.menus = menus
        session.history.append({s.name.lower() for s in menus.recommended})
        advance(session, "vlm_reply")

    # --- offers --------------------------------------------------------------------

    def assemble_offers(
        self,
        request_labels: list[str],
        scene: SceneDescription | None,
        session: Session | None = None,
    ) -> OfferMenus:
        """Build the three selection menus; degraded branches never abort.

        The recommender and the repository search run concurrently, each
        bounded by the offer deadline.
        """
        cfg = self.config
        timings = session.timings if session is not None else None
        warnings: list[str] = []

        rec_future = self._pool.submit(self._recommend_branch, request_labels, scene)
        repo_future = self._pool.submit(self._repo_branch, request_labels)

        # a branch failing or overshooting its deadline degrades to an empty
        # menu with a warning; the offer step itself must always complete
        t0 = time.perf_counter()
        try:
            recommended = rec_future.result(timeout=cfg.offer_deadline_s)
        except Exception as exc:  # noqa: BLE001
            recommended = ()
            warnings.append(f"recommendations unavailable: {exc}")
        rec_elapsed = time.perf_counter() - t0
        if timings is not None:
            timings.add("recommend", rec_elapsed)

        t1 = time.perf_counter()
        remaining = max(0.05, cfg.offer_deadline_s - rec_elapsed)
        try:
            repository = repo_future.result(timeout=remaining)
        except Exception as exc:  # noqa: BLE001
            repository = ()
            warnings.append(f"repository search unavailable: {exc}")
        if timings is not None:
            timings.add("repo_search", time.perf_counter() - t1)

        repo_labels = [label for label, _, _ in repository]
        if recommended:
            result = filter_duplicates(list(recommended), scene, repo_labels)
            recommended = result.kept
        return OfferMenus(
            detected=tuple(request_labels),
            repository=tuple(repository),
            recommended=tuple(recommended),
            warnings=tuple(warnings),
        )

    def _recommend_branch(self, request_labels, scene):
        if scene is not None:
            _, text = self.backends.vlm.describe("", build_designer_prompt(scene))
        else:
            prompt_subject = ", ".join(request_labels) if request_labels else "the space"
            text = self._extract_recommendation_text(prompt_subject)
        suggestions, _issues = parse_suggestions(text)
        return tuple(suggestions)

    def _extract_recommendation_text(self, subject: str) -> str:
        vlm = self.backends.vlm
        _, text = vlm.describe("", build_designer_prompt() + f"\nContext: {subject}")
        return text

    def _repo_branch(self, request_labels):
        cfg = self.config
        best: dict[str, tuple[str, str, float]] = {}
        for label in request_labels:
            query = self.provider.embed(label)
            for hit in self.repo.query_similar(
                query, k=cfg.repo_menu_size, min_score=cfg.repo_min_score
            ):
                rec = self.repo.get(hit.record_id)
                prev = best.get(hit.record_id)
                if prev is None or hit.score > prev[2]:
                    best[hit.record_id] = (rec.label, hit.record_id, hit.score)
        ranked = sorted(best.values(), key=lambda t: (-t[2], t[1]))
        return tuple(ranked[: cfg.repo_menu_size])

    # --- fulfillment ------------------------------------------------------------------

    def _bake(self, session: Session):
        try:
            record = self.fulfill(session, session.selection or {})
        except BackendError as exc:
            session.failure = {"reason": str(exc), "retriable": True}
            advance(session, "backend_error")
            return
        except ValueError as exc:
            session.failure = {"reason": str(exc), "retriable": False}
            advance(session, "backend_error")
            return
        session.asset_id = record.id
        session.timings.task_completion = time.time() - session.created_at
        advance(session, "asset_ready")

    def fulfill(self, session: Session, selection: dict):
        """Serve the selected asset, from cache when possible.

        Repository selections never touch a generator. Text selections are
        deduplicated against the repository first; real generation is
        validated, simplified to the vertex budget, and stored for reuse.
        """
        if session.state is not SessionState.BAKING:
            raise TransitionError(session.state, "fulfill")
        menu = selection.get("menu")
        timings = session.timings
        cfg = self.config

        if menu == "repository":
            asset_id = selection["asset_id"]
            t0 = time.perf_counter()
            if cfg.retrieval_delay_s:
                time.sleep(cfg.retrieval_delay_s)
            record = self.repo.get(asset_id)
            mesh = self.repo.load_mesh(record)
            fetch = time.perf_counter() - t0
            timings.add("repo_search", fetch)
            timings.time_to_object = fetch
            self.repo.record_hit(asset_id)
            session.cache_hit = True
            _ = mesh  # loaded to prove the blob resolves; delivery is by ref
            return record

        if menu in ("detected", "recommended", "text"):
            label = selection["label"]
            dup = self.repo.find_duplicate(
                label, self.provider, cfg.duplicate_threshold
            )
            if dup is not None:
                return self.fulfill(
                    session, {"menu": "repository", "asset_id": dup}
                )
            with _timed(timings, "generate"):
                mesh = self.backends.generator.generate(label)
            return self._postprocess(session, label, mesh, source="generated")

        if menu == "image":
            label = selection.get("label", "object")
            image_b64 = selection.get("image_b64") or session.capture_image or ""
            with _timed(timings, "generate"):
                mesh = self.backends.image_generator.generate(image_b64, label)
            return self._postprocess(session, label, mesh, source="image-derived")

        raise ValueError(f"unknown selection menu {menu!r}")

    def _postprocess(self, session: Session, label: str, mesh, source: str):
        timings = session.timings
        report = validate(mesh)
        if not report.ok:
            raise ValueError(f"generator returned invalid mesh: {report.summary()}")
        session.generation_count += 1
        session.cache_hit = False
        with _timed(timings, "simplify"):
            reduced, sim_report = simplify(
                mesh, SimplifyConfig(target_vertices=self.config.simplify_target)
            )
        timings.time_to_object = timings.generate + timings.simplify
        with _timed(timings, "deliver"):
            record = self.repo.add_mesh(label, reduced, self.provider, source=source)
        session.raw_mesh_size = binary_size_counts(mesh.vertex_count, mesh.face_count)
        return record


REPORT_ROWS = (
    "Task Completion Time (seconds)",
    "Task Success Rate (%)",
    "System Error Rate (errors/task)",
    "System Responsiveness (seconds)",
    "Mesh File Size (MB)",
)


def report_metrics(sessions: list[Session], repo: AssetRepository | None = None) -> dict:
    """Aggregate session timings into the published table's row names.

    Failed sessions contribute their timing prefix and count against the
    success rate; an empty session list yields an empty report rather than
    dividing by zero.
    """
    report: dict = {"schema_version": 1, "session_count": len(sessions)}
    if not sessions:
        report["rows"] = {}
        report["stages"] = {}
        report["cache"] = {}
        return report

    done = [s for s in sessions if s.state is SessionState.PRESENTING]
    failed = [s for s in sessions if s.state is SessionState.FAILED]
    hits = [s for s in sessions if s.cache_hit is True]
    gen_count = sum(s.generation_count for s in sessions)
    decided = [s for s in sessions if s.cache_hit is not None]

    def mean(values):
        values = list(values)
        return statistics.fmean(values) if values else 0.0

    def median(values):
        values = list(values)
        return statistics.median(values) if values else 0.0

    stages = {}
    for stage in ("transcribe", "extract", "recommend", "repo_search",
                  "generate", "simplify", "deliver"):
        vals = [getattr(s.timings, stage) for s in sessions]
        stages[stage] = {"mean": mean(vals), "median": median(vals)}
    stages["time_to_object"] = {
        "mean": mean(s.timings.time_to_object for s in done),
        "median": median(s.timings.time_to_object for s in done),
        "mean_cache_hit": mean(
            s.timings.time_to_object for s in done if s.cache_hit
        ),
        "mean_generated": mean(
            s.timings.time_to_object for s in done if s.cache_hit is False
        ),
    }

    served_sizes = []
    if repo is not None:
        for s in done:
            if s.asset_id:
                rec = repo.get(s.asset_id)
                mesh = repo.load_mesh(rec)
                served_sizes.append(binary_size_counts(mesh.vertex_count, mesh.face_count))

    rows = {
        REPORT_ROWS[0]: mean(s.timings.task_completion for s in done),
        REPORT_ROWS[1]: 100.0 * len(done) / len(sessions),
        REPORT_ROWS[2]: len(failed) / len(sessions),
        REPORT_ROWS[3]: mean(s.timings.system_time for s in sessions),
        REPORT_ROWS[4]: (mean(served_sizes) / 1e6) if served_sizes else 0.0,
    }
    report["rows"] = rows
    report["stages"] = stages
    report["cache"] = {
        "hit_rate": (len(hits) / len(decided)) if decided else 0.0,
        "hits": len(hits),
        "generator_invocations": gen_count,
    }
    return report
