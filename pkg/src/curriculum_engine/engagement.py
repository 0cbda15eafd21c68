"""Per-turn engagement observation.

Classifies the learner's latest message with keyword heuristics, folds it
into the persisted learner profile and keeps the streak flags current. The
``observe`` entry point runs as a host hook after every assistant reply, so it
never raises and never prints on success; keep imports here cheap.
"""

from __future__ import annotations

import enum
import json
import time
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, NamedTuple

from curriculum_engine.fsio import LockHeld, atomic_write_text, exclusive_lock

SCHEMA_VERSION = 1
RECENT_MAX = 10
WINDOW_MAX = 5
STREAK_LEN = 3
TREND_HALF = 5
TREND_BAND = 0.5


class Category(str, enum.Enum):
    CONCEPT_QUESTION = "concept_question"
    INDEPENDENT_EXPLORATION = "independent_exploration"
    DEBUG_ATTEMPT = "debug_attempt"
    NEUTRAL = "neutral"
    ANSWER_SEEKING = "answer_seeking"
    PASSIVE_ACCEPTANCE = "passive_acceptance"

    @property
    def score(self) -> int:
        return SCORES[self]

    def __str__(self) -> str:
        return self.value


SCORES: dict[Category, int] = {
    Category.CONCEPT_QUESTION: 5,
    Category.INDEPENDENT_EXPLORATION: 4,
    Category.DEBUG_ATTEMPT: 3,
    Category.NEUTRAL: 3,
    Category.ANSWER_SEEKING: 1,
    Category.PASSIVE_ACCEPTANCE: 1,
}

PRODUCTIVE = frozenset({Category.CONCEPT_QUESTION, Category.INDEPENDENT_EXPLORATION, Category.DEBUG_ATTEMPT})
UNPRODUCTIVE = frozenset({Category.ANSWER_SEEKING, Category.PASSIVE_ACCEPTANCE})
STRUGGLE_SET = UNPRODUCTIVE
ENGAGEMENT_SET = frozenset({Category.CONCEPT_QUESTION, Category.INDEPENDENT_EXPLORATION})


class Trend(str, enum.Enum):
    IMPROVING = "improving"
    STABLE = "stable"
    DECLINING = "declining"


# -- lexicon -----------------------------------------------------------------

DEFAULT_PHRASES: dict[Category, tuple[str, ...]] = {
    Category.ANSWER_SEEKING: (
        "just do it", "do it for me", "write it for me", "give me the code", "just give me",
        "write the code for me", "just write it", "just fix it",
    ),
    Category.CONCEPT_QUESTION: (
        "why does", "why do", "why is", "how does", "how do", "explain",
        "what's the difference", "what is the difference",
    ),
    Category.INDEPENDENT_EXPLORATION: (
        "i tried", "i've tried", "i noticed", "i figured out", "i found", "i experimented",
    ),
    Category.DEBUG_ATTEMPT: (
        "error", "not working", "doesn't work", "isn't working", "didn't work", "failed",
        "failing", "traceback", "exception", "crash",
    ),
    Category.NEUTRAL: (
        "next module", "next step", "continue", "let's move on", "go on",
    ),
    Category.PASSIVE_ACCEPTANCE: (),
}

# Order in which phrase lists are consulted. Neutral navigation phrases are
# checked before the short-reply rule so "next module" is never passive.
PRECEDENCE: tuple[Category, ...] = (
    Category.ANSWER_SEEKING,
    Category.CONCEPT_QUESTION,
    Category.INDEPENDENT_EXPLORATION,
    Category.DEBUG_ATTEMPT,
    Category.NEUTRAL,
)


# Records on the hook path are NamedTuples; importing dataclasses (and with it
# inspect) would add about 10 ms to every hook start-up.


class _LexiconFields(NamedTuple):
    phrases: Mapping[Category, tuple[str, ...]]
    passive_short_max: int
    assistant_long_min: int


class Lexicon(_LexiconFields):
    __slots__ = ()

    def __new__(cls, phrases: Mapping[Category, tuple[str, ...]] | None = None,
                passive_short_max: int = 15, assistant_long_min: int = 500) -> Lexicon:
        phrases = MappingProxyType(dict(DEFAULT_PHRASES if phrases is None else phrases))
        for cat in Category:
            if cat in (Category.NEUTRAL, Category.PASSIVE_ACCEPTANCE):
                continue
            if not phrases.get(cat):
                raise ValueError(f"lexicon has no phrases for {cat.value}")
        return super().__new__(cls, phrases, passive_short_max, assistant_long_min)


def load_lexicon(path: str | Path | None) -> Lexicon:
    """Load a JSON lexicon; categories missing from the file keep the defaults."""
    if path is None:
        return Lexicon()
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    phrases = dict(DEFAULT_PHRASES)
    for key, values in data.get("phrases", {}).items():
        phrases[Category(key)] = tuple(str(v).lower() for v in values)
    return Lexicon(
        phrases=phrases,
        passive_short_max=int(data.get("passive_short_max", 15)),
        assistant_long_min=int(data.get("assistant_long_min", 500)),
    )


def classify(message: str, prior_assistant_length: int = 0, lexicon: Lexicon | None = None) -> Category:
    lexicon = lexicon or DEFAULT_LEXICON
    text = message.strip()
    low = text.lower()
    for cat in PRECEDENCE:
        if any(p in low for p in lexicon.phrases.get(cat, ())):
            return cat
    if len(text) < lexicon.passive_short_max and prior_assistant_length >= lexicon.assistant_long_min:
        return Category.PASSIVE_ACCEPTANCE
    return Category.NEUTRAL


DEFAULT_LEXICON = Lexicon()


# -- profile -------------------------------------------------------------------


def zero_counts() -> dict[Category, int]:
    return {c: 0 for c in Category}


_NO_COUNTS = MappingProxyType(zero_counts())


class LearnerProfile(NamedTuple):
    schema_version: int = SCHEMA_VERSION
    lifetime_counts: Mapping[Category, int] = _NO_COUNTS
    module_id: int = 1
    module_counts: Mapping[Category, int] = _NO_COUNTS
    module_quality_sum: float = 0
    recent_scores: tuple[int, ...] = ()
    window: tuple[Category, ...] = ()
    struggle_streak: bool = False
    engagement_streak: bool = False
    trend: Trend = Trend.STABLE
    last_updated: float | None = None

    @property
    def lifetime_total(self) -> int:
        return sum(self.lifetime_counts.values())

    @property
    def lifetime_non_neutral(self) -> int:
        return self.lifetime_total - self.lifetime_counts.get(Category.NEUTRAL, 0)

    @property
    def module_total(self) -> int:
        return sum(self.module_counts.values())

    @property
    def rolling_average(self) -> float | None:
        if not self.recent_scores:
            return None
        return sum(self.recent_scores) / len(self.recent_scores)

    def to_json(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "lifetime_counts": {c.value: self.lifetime_counts.get(c, 0) for c in Category},
            "module_id": self.module_id,
            "module_counts": {c.value: self.module_counts.get(c, 0) for c in Category},
            "module_quality_sum": self.module_quality_sum,
            "recent_scores": list(self.recent_scores),
            "window": [c.value for c in self.window],
            "struggle_streak": self.struggle_streak,
            "engagement_streak": self.engagement_streak,
            "trend": self.trend.value,
            "last_updated": self.last_updated,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> LearnerProfile:
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported profile schema_version {version}")

        def counts(raw: Mapping) -> dict[Category, int]:
            out = zero_counts()
            for k, v in raw.items():
                out[Category(k)] = int(v)
            return out

        return cls(
            schema_version=version,
            lifetime_counts=counts(data.get("lifetime_counts", {})),
            module_id=int(data.get("module_id", 1)),
            module_counts=counts(data.get("module_counts", {})),
            module_quality_sum=data.get("module_quality_sum", 0),
            recent_scores=tuple(int(s) for s in data.get("recent_scores", ())),
            window=tuple(Category(c) for c in data.get("window", ())),
            struggle_streak=bool(data.get("struggle_streak", False)),
            engagement_streak=bool(data.get("engagement_streak", False)),
            trend=Trend(data.get("trend", Trend.STABLE.value)),
            last_updated=data.get("last_updated"),
        )


def streak_flags(window: Iterable[Category]) -> tuple[bool, bool]:
    """(struggle, engagement) for a window of non-neutral categories."""
    tail = tuple(window)[-STREAK_LEN:]
    if len(tail) < STREAK_LEN:
        return False, False
    return all(c in STRUGGLE_SET for c in tail), all(c in ENGAGEMENT_SET for c in tail)


def compute_trend(recent_scores: Iterable[int]) -> Trend:
    scores = list(recent_scores)
    if len(scores) < 2 * TREND_HALF:
        return Trend.STABLE
    latest = scores[-TREND_HALF:]
    before = scores[-2 * TREND_HALF:-TREND_HALF]
    delta = sum(latest) / TREND_HALF - sum(before) / TREND_HALF
    if delta > TREND_BAND:
        return Trend.IMPROVING
    if delta < -TREND_BAND:
        return Trend.DECLINING
    return Trend.STABLE


def update_profile(profile: LearnerProfile, category: Category, now: float | None = None) -> LearnerProfile:
    """Fold one classified interaction into *profile* and return the new profile."""
    category = Category(category)
    lifetime = dict(profile.lifetime_counts)
    lifetime[category] = lifetime.get(category, 0) + 1
    module = dict(profile.module_counts)
    module[category] = module.get(category, 0) + 1
    recent = (profile.recent_scores + (category.score,))[-RECENT_MAX:]
    window = profile.window
    if category is not Category.NEUTRAL:
        window = (window + (category,))[-WINDOW_MAX:]
    struggle, engaged = streak_flags(window)
    assert not (struggle and engaged), "streak category sets overlap"
    return profile._replace(
        lifetime_counts=lifetime,
        module_counts=module,
        module_quality_sum=profile.module_quality_sum + category.score,
        recent_scores=recent,
        window=window,
        struggle_streak=struggle,
        engagement_streak=engaged,
        trend=compute_trend(recent),
        last_updated=time.time() if now is None else now,
    )


def load_profile(path: str | Path) -> LearnerProfile:
    path = Path(path)
    if not path.exists():
        return LearnerProfile()
    return LearnerProfile.from_json(json.loads(path.read_text(encoding="utf-8")))


def save_profile(path: str | Path, profile: LearnerProfile) -> None:
    atomic_write_text(Path(path), json.dumps(profile.to_json(), indent=2, sort_keys=True) + "\n")


# -- transcript ----------------------------------------------------------------


def turn_from_record(record: object) -> tuple[str, str] | None:
    """Extract ``(role, text)`` from one transcript record.

    Accepts the flat ``{"role", "content"}`` layout and the nested host layout
    ``{"type": "user", "message": {"role", "content": [blocks]}}``. Records
    carrying no text (tool results, metadata) yield ``None``.
    """
    if not isinstance(record, dict):
        return None
    msg = record.get("message") if isinstance(record.get("message"), dict) else record
    role = msg.get("role") or record.get("type")
    if role not in ("user", "assistant"):
        return None
    content = msg.get("content")
    if isinstance(content, str):
        return role, content
    if isinstance(content, list):
        texts = [b.get("text", "") for b in content if isinstance(b, dict) and b.get("type") == "text"]
        if texts:
            return role, "\n".join(texts)
    return None


def last_exchange(lines: Iterable[str]) -> tuple[str, int] | None:
    """Latest learner message and the length of the assistant turn before it."""
    message = None
    for raw in reversed(list(lines)):
        raw = raw.strip()
        if not raw:
            continue
        try:
            turn = turn_from_record(json.loads(raw))
        except ValueError:
            continue
        if turn is None:
            continue
        role, text = turn
        if message is None:
            if role == "user":
                message = text
        elif role == "assistant":
            return message, len(text)
    return (message, 0) if message is not None else None


class ObserveStatus(enum.IntEnum):
    APPLIED = 0
    NO_MESSAGE = 3
    UNREADABLE_TRANSCRIPT = 4
    LOCK_HELD = 5
    BAD_PROFILE = 6

    @property
    def reason(self) -> str:
        return {
            ObserveStatus.APPLIED: "applied",
            ObserveStatus.NO_MESSAGE: "skipped: no learner message",
            ObserveStatus.UNREADABLE_TRANSCRIPT: "skipped: unreadable transcript",
            ObserveStatus.LOCK_HELD: "skipped: lock held",
            ObserveStatus.BAD_PROFILE: "skipped: unreadable profile",
        }[self]


def observe(transcript_path: str | Path, profile_path: str | Path,
            lexicon: Lexicon | None = None, now: float | None = None) -> ObserveStatus:
    """Classify the newest learner turn and persist the updated profile."""
    try:
        lines = Path(transcript_path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError):
        return ObserveStatus.UNREADABLE_TRANSCRIPT
    exchange = last_exchange(lines)
    if exchange is None:
        return ObserveStatus.NO_MESSAGE
    category = classify(exchange[0], exchange[1], lexicon)

    profile_path = Path(profile_path)
    profile_path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with exclusive_lock(profile_path):
            try:
                profile = load_profile(profile_path)
            except (OSError, ValueError):
                return ObserveStatus.BAD_PROFILE
            save_profile(profile_path, update_profile(profile, category, now))
    except LockHeld:
        return ObserveStatus.LOCK_HELD
    return ObserveStatus.APPLIED
