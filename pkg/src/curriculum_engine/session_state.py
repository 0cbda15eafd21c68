"""Onboarding state machine and cross-session step markers.

Onboarding state is a small JSON document rewritten atomically after every
transition, so a killed process resumes at the stage it was last shown.
Step markers live in a delimited region of a Markdown file that the host also
edits; only that region is ever rewritten.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from curriculum_engine.corpus import ModuleDoc, PathId, parse_step_label
from curriculum_engine.fsio import atomic_write_bytes, atomic_write_text
from curriculum_engine.persona import EffectiveLevel, ExperienceLevel
from curriculum_engine.sync import SyncError, detect_gap

SCHEMA_VERSION = 1
NO_LANGUAGE_PATHS = frozenset({PathId.CANVAS, PathId.BYOP})


class OnboardingError(ValueError):
    pass


class OnboardingStage(str, enum.Enum):
    VERSION_CHECK = "version_check"
    PROJECT_SELECTION = "project_selection"
    CURRICULUM_UPGRADE = "curriculum_upgrade"
    OS_DETECTION = "os_detection"
    LANGUAGE_SELECTION = "language_selection"
    EXPERIENCE_LEVEL = "experience_level"
    PROGRESS_RESUME = "progress_resume"
    ENV_VERIFICATION = "env_verification"
    SCAFFOLDING = "scaffolding"
    MODULE1_DELIVERY = "module1_delivery"
    COMPLETE = "complete"

    @property
    def position(self) -> int:
        return _STAGE_ORDER.index(self)


_STAGE_ORDER = list(OnboardingStage)


@dataclass(frozen=True)
class VersionCheck:
    """Answer for the version-check stage: local curriculum vs latest release."""

    curriculum_version: str
    latest_version: str


@dataclass(frozen=True)
class Answers:
    project: PathId | None = None
    language: str | None = None
    experience: ExperienceLevel | None = None
    os: str | None = None
    curriculum_version: str | None = None
    latest_version: str | None = None
    version_gap: bool | None = None
    resume: str | None = None


@dataclass(frozen=True)
class OnboardingState:
    stage: OnboardingStage = OnboardingStage.VERSION_CHECK
    answers: Answers = field(default_factory=Answers)
    updated_at: float | None = None

    def to_json(self) -> dict:
        a = self.answers
        return {
            "schema_version": SCHEMA_VERSION,
            "stage": self.stage.value,
            "answers": {
                "project": a.project.value if a.project else None,
                "language": a.language,
                "experience": a.experience.label if a.experience is not None else None,
                "os": a.os,
                "curriculum_version": a.curriculum_version,
                "latest_version": a.latest_version,
                "version_gap": a.version_gap,
                "resume": a.resume,
            },
            "updated_at": self.updated_at,
        }

    @classmethod
    def from_json(cls, data: dict) -> OnboardingState:
        if data.get("schema_version") != SCHEMA_VERSION:
            raise OnboardingError(f"unsupported onboarding schema_version {data.get('schema_version')}")
        raw = data.get("answers", {})
        answers = Answers(
            project=PathId(raw["project"]) if raw.get("project") else None,
            language=raw.get("language"),
            experience=ExperienceLevel.from_name(raw["experience"]) if raw.get("experience") else None,
            os=raw.get("os"),
            curriculum_version=raw.get("curriculum_version"),
            latest_version=raw.get("latest_version"),
            version_gap=raw.get("version_gap"),
            resume=raw.get("resume"),
        )
        state = cls(OnboardingStage(data["stage"]), answers, data.get("updated_at"))
        missing = missing_answers(state)
        if missing:
            raise OnboardingError(f"state at {state.stage.value} lacks answers: {', '.join(missing)}")
        return state


def missing_answers(state: OnboardingState) -> list[str]:
    """Answers that stages already passed should have recorded."""
    pos = state.stage.position
    a = state.answers
    need = []
    if pos > OnboardingStage.VERSION_CHECK.position and (a.curriculum_version is None or a.version_gap is None):
        need.append("curriculum_version")
    if pos > OnboardingStage.PROJECT_SELECTION.position and a.project is None:
        need.append("project")
    if pos > OnboardingStage.OS_DETECTION.position and a.os is None:
        need.append("os")
    if (pos > OnboardingStage.LANGUAGE_SELECTION.position and a.language is None
            and a.project is not None and a.project not in NO_LANGUAGE_PATHS):
        need.append("language")
    if pos > OnboardingStage.EXPERIENCE_LEVEL.position and a.experience is None:
        need.append("experience")
    return need


def _skipped(stage: OnboardingStage, answers: Answers, markers_present: bool) -> bool:
    if stage is OnboardingStage.CURRICULUM_UPGRADE:
        return not answers.version_gap
    if stage is OnboardingStage.LANGUAGE_SELECTION:
        return answers.project in NO_LANGUAGE_PATHS
    if stage is OnboardingStage.PROGRESS_RESUME:
        return not markers_present
    return False


def next_stage(stage: OnboardingStage, answers: Answers, markers_present: bool) -> OnboardingStage:
    pos = stage.position + 1
    while _skipped(_STAGE_ORDER[pos], answers, markers_present):
        pos += 1
    return _STAGE_ORDER[pos]


def _text_answer(stage: OnboardingStage, answer: Any) -> str:
    if not isinstance(answer, str) or not answer.strip():
        raise OnboardingError(f"{stage.value} expects a non-empty string, got {answer!r}")
    return answer.strip()


def _record(stage: OnboardingStage, answers: Answers, answer: Any) -> Answers:
    S = OnboardingStage
    if stage is S.VERSION_CHECK:
        if not isinstance(answer, VersionCheck):
            raise OnboardingError(f"version_check expects a VersionCheck, got {answer!r}")
        try:
            gap = detect_gap(answer.curriculum_version, answer.latest_version)
        except SyncError as exc:
            raise OnboardingError(str(exc)) from None
        return dataclasses.replace(answers, curriculum_version=answer.curriculum_version,
                                   latest_version=answer.latest_version, version_gap=gap is not None)
    if stage is S.PROJECT_SELECTION:
        try:
            return dataclasses.replace(answers, project=PathId(answer))
        except ValueError:
            raise OnboardingError(f"project_selection expects a project id, got {answer!r}") from None
    if stage is S.CURRICULUM_UPGRADE:
        # The host reports the curriculum version it synced to.
        return dataclasses.replace(answers, curriculum_version=_text_answer(stage, answer))
    if stage is S.OS_DETECTION:
        return dataclasses.replace(answers, os=_text_answer(stage, answer))
    if stage is S.LANGUAGE_SELECTION:
        return dataclasses.replace(answers, language=_text_answer(stage, answer))
    if stage is S.EXPERIENCE_LEVEL:
        if isinstance(answer, ExperienceLevel):
            return dataclasses.replace(answers, experience=answer)
        try:
            return dataclasses.replace(answers, experience=ExperienceLevel.from_name(_text_answer(stage, answer)))
        except ValueError as exc:
            raise OnboardingError(str(exc)) from None
    if stage is S.PROGRESS_RESUME:
        choice = _text_answer(stage, answer)
        if choice not in ("resume", "restart"):
            raise OnboardingError(f"progress_resume expects 'resume' or 'restart', got {answer!r}")
        return dataclasses.replace(answers, resume=choice)
    # env_verification, scaffolding, module1_delivery: the host reports completion.
    if answer is not True:
        raise OnboardingError(f"{stage.value} expects True once the host step is done, got {answer!r}")
    return answers


def advance(state: OnboardingState, answer: Any, *, markers_present: bool = False,
            now: float | None = None) -> OnboardingState:
    """Record *answer* for the current stage and move to the next live stage."""
    if state.stage is OnboardingStage.COMPLETE:
        raise OnboardingError("onboarding is already complete")
    answers = _record(state.stage, state.answers, answer)
    return OnboardingState(
        stage=next_stage(state.stage, answers, markers_present),
        answers=answers,
        updated_at=time.time() if now is None else now,
    )


def load_state(path: str | Path) -> OnboardingState:
    path = Path(path)
    if not path.exists():
        return OnboardingState()
    try:
        return OnboardingState.from_json(json.loads(path.read_text(encoding="utf-8")))
    except (KeyError, ValueError) as exc:
        raise OnboardingError(f"{path}: {exc}") from None


def save_state(path: str | Path, state: OnboardingState) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(path, json.dumps(state.to_json(), indent=2, sort_keys=True) + "\n")


def advance_file(state_path: str | Path, answer: Any, markers_path: str | Path | None = None,
                 now: float | None = None) -> OnboardingState:
    """Load, advance and persist before returning."""
    state = load_state(state_path)
    present = markers_path is not None and load_markers(markers_path) is not None
    new = advance(state, answer, markers_present=present, now=now)
    save_state(state_path, new)
    return new


# -- step markers --------------------------------------------------------------------

REGION_BEGIN = "<!-- curriculum-engine:state -->"
REGION_END = "<!-- /curriculum-engine:state -->"


class StepError(ValueError):
    pass


@dataclass(frozen=True)
class SessionMarkers:
    current_module: int = 1
    current_step: tuple[int, int] | None = None
    effective_level: EffectiveLevel | None = None
    completed_steps: frozenset[tuple[int, int]] = frozenset()
    project: PathId | None = None

    def __post_init__(self) -> None:
        if self.current_step is not None and self.current_step[0] != self.current_module:
            raise StepError(f"current step {self.current_step} is not in module {self.current_module}")

    @classmethod
    def start(cls, project: PathId | None, experience: ExperienceLevel | None) -> SessionMarkers:
        level = EffectiveLevel.start(experience) if experience is not None else None
        return cls(project=project, effective_level=level)


def _label(step: tuple[int, int]) -> str:
    return f"{step[0]}.{step[1]}"


def format_markers(markers: SessionMarkers, nl: str = "\n") -> str:
    """Region body including the delimiters."""
    lines = [REGION_BEGIN]
    if markers.project is not None:
        lines.append(f"Project: {markers.project.value}")
    lines.append(f"Current Module: {markers.current_module}")
    if markers.current_step is not None:
        lines.append(f"Current Step: {_label(markers.current_step)}")
    if markers.effective_level is not None:
        lines.append(f"Experience Level: {markers.effective_level.declared.label}")
        lines.append(f"Effective Level: {markers.effective_level.current.label}")
    done = ", ".join(_label(s) for s in sorted(markers.completed_steps))
    lines.append(f"Completed Steps: {done}")
    lines.append(REGION_END)
    return nl.join(lines)


_REGION_RE = re.compile(re.escape(REGION_BEGIN) + r"(.*?)" + re.escape(REGION_END), re.DOTALL)


def parse_markers(text: str) -> SessionMarkers | None:
    """Markers from the delimited region of *text*, or ``None`` without one."""
    m = _REGION_RE.search(text)
    if not m:
        return None
    fields: dict[str, str] = {}
    for line in m.group(1).splitlines():
        key, sep, value = line.partition(":")
        if sep:
            fields[key.strip().lower()] = value.strip()
    try:
        project = PathId(fields["project"]) if fields.get("project") else None
        step = parse_step_label(fields["current step"]) if fields.get("current step") else None
        module = int(fields.get("current module") or (step[0] if step else 1))
        level = None
        if fields.get("effective level"):
            current = ExperienceLevel.from_name(fields["effective level"])
            declared = ExperienceLevel.from_name(fields.get("experience level") or fields["effective level"])
            level = EffectiveLevel(declared, current)
        done = frozenset(parse_step_label(s) for s in fields.get("completed steps", "").split(",") if s.strip())
    except (KeyError, ValueError) as exc:
        raise StepError(f"malformed marker region: {exc}") from None
    return SessionMarkers(module, step, level, done, project)


def load_markers(path: str | Path) -> SessionMarkers | None:
    path = Path(path)
    if not path.exists():
        return None
    return parse_markers(path.read_bytes().decode("utf-8"))


def write_markers(path: str | Path, markers: SessionMarkers) -> None:
    """Rewrite only the marker region; every other byte of the file is kept."""
    path = Path(path)
    text = path.read_bytes().decode("utf-8") if path.exists() else ""
    nl = "\r\n" if "\r\n" in text else "\n"
    region = format_markers(markers, nl)
    m = _REGION_RE.search(text)
    if m:
        text = text[:m.start()] + region + text[m.end():]
    else:
        if text and not text.endswith(nl):
            text += nl
        if text:
            text += nl
        text += region + nl
    path.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(path, text.encode("utf-8"))


def pre_advance_check(markers: SessionMarkers, doc: ModuleDoc) -> list[str]:
    """Labels of *doc*'s steps not yet completed, in document order."""
    return [s.label for s in doc.steps
            if s.module_number == doc.number and (doc.number, s.step_index) not in markers.completed_steps]


def record_step(markers: SessionMarkers, doc: ModuleDoc, step: int,
                current_doc: ModuleDoc | None = None) -> SessionMarkers:
    """Mark ``doc.number.step`` as current and completed.

    Moving into the next module requires *current_doc* (the module being left)
    to have every step completed.
    """
    if markers.project is not None and doc.path != markers.project:
        raise StepError(f"markers track {markers.project.value}, step is from {doc.path.value}")
    if step not in {s.step_index for s in doc.steps if s.module_number == doc.number}:
        raise StepError(f"module {doc.number} has no step {doc.number}.{step}")
    module = doc.number
    if module != markers.current_module:
        if module != markers.current_module + 1:
            raise StepError(f"cannot jump from module {markers.current_module} to {module}")
        if current_doc is None or current_doc.number != markers.current_module:
            raise StepError(f"advancing needs module {markers.current_module} to check for skipped steps")
        missing = pre_advance_check(markers, current_doc)
        if missing:
            raise StepError(f"module {markers.current_module} has uncovered steps: {', '.join(missing)}")
    return dataclasses.replace(
        markers,
        current_module=module,
        current_step=(module, step),
        completed_steps=markers.completed_steps | {(module, step)},
    )


class ResumeStatus(str, enum.Enum):
    FRESH = "fresh"
    RESUME_VALID = "resume_valid"
    RESUME_CONFLICT = "resume_conflict"


def resume_check(state: OnboardingState, markers: SessionMarkers | None) -> ResumeStatus:
    """Compare prior markers with the learner's current project and experience.

    Fields absent from the markers are not held against them.
    """
    if markers is None:
        return ResumeStatus.FRESH
    a = state.answers
    if markers.project is not None and a.project is not None and markers.project != a.project:
        return ResumeStatus.RESUME_CONFLICT
    if (markers.effective_level is not None and a.experience is not None
            and markers.effective_level.declared != a.experience):
        return ResumeStatus.RESUME_CONFLICT
    return ResumeStatus.RESUME_VALID
