"""Per-session state machine mirroring the AR status board.

Speech path: Welcome -> Listening -> Thinking -> Offers -> Baking ->
Presenting, looping back to Listening on a new request. Image path:
Welcome -> Observing -> Suggestions -> Baking -> Presenting. Any state may
drop to Failed on a backend error. ``advance`` enforces exactly these
edges; an illegal event is rejected without touching the session.
"""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass, field
from enum import Enum

from .recommend import ObjectSuggestion

__all__ = [
    "SessionState",
    "EVENT_TYPES",
    "TRANSITIONS",
    "TransitionError",
    "OfferMenus",
    "StageTimings",
    "Session",
    "advance",
]


class SessionState(str, Enum):
    WELCOME = "Welcome"
    LISTENING = "Listening"
    THINKING = "Thinking"
    OFFERS = "Offers"
    BAKING = "Baking"
    PRESENTING = "Presenting"
    OBSERVING = "Observing"
    SUGGESTIONS = "Suggestions"
    FAILED = "Failed"


# (state, event) -> next state; data-only events loop on the same state
TRANSITIONS: dict[tuple[SessionState, str], SessionState] = {
    (SessionState.WELCOME, "wake"): SessionState.LISTENING,
    (SessionState.WELCOME, "capture"): SessionState.OBSERVING,
    (SessionState.LISTENING, "transcript"): SessionState.LISTENING,
    (SessionState.LISTENING, "stop"): SessionState.THINKING,
    (SessionState.THINKING, "menus_ready"): SessionState.OFFERS,
    (SessionState.OFFERS, "selection"): SessionState.BAKING,
    (SessionState.OBSERVING, "lasso"): SessionState.OBSERVING,
    (SessionState.OBSERVING, "vlm_reply"): SessionState.SUGGESTIONS,
    (SessionState.SUGGESTIONS, "selection"): SessionState.BAKING,
    (SessionState.BAKING, "asset_ready"): SessionState.PRESENTING,
    (SessionState.PRESENTING, "new_request"): SessionState.LISTENING,
}

EVENT_TYPES = tuple(sorted({ev for _, ev in TRANSITIONS} | {"backend_error"}))


class TransitionError(RuntimeError):
    def __init__(self, state: SessionState, event: str):
        self.state = state
        self.event = event
        super().__init__(f"event {event!r} is illegal in state {state.value}")


@dataclass
class OfferMenus:
    detected: tuple[str, ...] = ()
    repository: tuple[tuple[str, str, float], ...] = ()  # (label, asset id, score)
    recommended: tuple[ObjectSuggestion, ...] = ()
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        scores = [s for _, _, s in self.repository]
        if scores != sorted(scores, reverse=True):
            raise ValueError("repository menu must be sorted by score descending")

    def as_dict(self) -> dict:
        return {
            "detected": list(self.detected),
            "repository": [
                {"label": l, "asset_id": a, "score": s} for l, a, s in self.repository
            ],
            "recommended": [s.as_dict() for s in self.recommended],
            "warnings": list(self.warnings),
        }


STAGES = ("transcribe", "extract", "recommend", "repo_search", "generate",
          "simplify", "deliver")


@dataclass
class StageTimings:
    transcribe: float = 0.0
    extract: float = 0.0
    recommend: float = 0.0
    repo_search: float = 0.0
    generate: float = 0.0
    simplify: float = 0.0
    deliver: float = 0.0
    time_to_object: float = 0.0
    task_completion: float = 0.0

    def add(self, stage: str, seconds: float):
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        setattr(self, stage, getattr(self, stage) + seconds)

    @property
    def system_time(self) -> float:
        """Measured pipeline work only; excludes waiting on the user."""
        return sum(getattr(self, s) for s in STAGES)

    def as_dict(self) -> dict:
        d = {s: getattr(self, s) for s in STAGES}
        d["time_to_object"] = self.time_to_object
        d["task_completion"] = self.task_completion
        return d


@dataclass
class Session:
    id: str = field(default_factory=lambda: uuid.uuid4().hex)
    language: str = "en"  # BCP-47
    state: SessionState = SessionState.WELCOME
    menus: OfferMenus | None = None
    selection: dict | None = None
    asset_id: str | None = None
    timings: StageTimings = field(default_factory=StageTimings)
    history: list[set[str]] = field(default_factory=list)  # past offers, for novelty
    state_history: list[SessionState] = field(default_factory=list)
    transcript: str | None = None
    audio_token: str | None = None
    capture_image: str | None = None  # base64
    capture_mode: str = "zone"
    lasso_points: tuple | None = None
    image_size: tuple | None = None
    detections: tuple = ()
    failure: dict | None = None
    created_at: float = field(default_factory=time.time)
    generation_count: int = 0
    cache_hit: bool | None = None
    raw_mesh_size: int | None = None  # serialized bytes before simplification

    def __post_init__(self):
        if not self.state_history:
            self.state_history.append(self.state)

    def snapshot(self) -> dict:
        return {
            "id": self.id,
            "language": self.language,
            "state": self.state.value,
            "menus": self.menus.as_dict() if self.menus else None,
            "selection": self.selection,
            "asset_id": self.asset_id,
            "timings": self.timings.as_dict(),
            "failure": self.failure,
            "state_history": [s.value for s in self.state_history],
        }


def advance(session: Session, event_type: str) -> Session:
    """Apply one event to the state machine.

    Raises TransitionError and leaves the session untouched when the event
    is illegal in the current state. Field hygiene rides on the edges:
    menus exist only from Offers onward, the asset only in Presenting.
    """
    if event_type == "backend_error":
        if session.state is not SessionState.FAILED:
            session.state = SessionState.FAILED
            session.state_history.append(session.state)
        return session
    nxt = TRANSITIONS.get((session.state, event_type))
    if nxt is None:
        raise TransitionError(session.state, event_type)
    if nxt is SessionState.LISTENING and session.state is SessionState.PRESENTING:
        # new request: clear the previous round's artifacts
        session.menus = None
        session.selection = None
        session.asset_id = None
        session.transcript = None
        session.audio_token = None
        session.cache_hit = None
    if session.state is not nxt:
        session.state = nxt
        session.state_history.append(nxt)
    return session
