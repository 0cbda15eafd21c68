"""Persona stages, experience levels and the level -> module schedule."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

MODULE_COUNT = 10


class Stage(enum.IntEnum):
    GUIDE = 1
    COLLABORATOR = 2
    PEER = 3
    LAUNCHER = 4

    @property
    def label(self) -> str:
        return self.name.capitalize()

    def __str__(self) -> str:
        return self.label

    @classmethod
    def from_name(cls, name: str) -> Stage:
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown persona stage {name!r}") from None


class ExperienceLevel(enum.IntEnum):
    BEGINNER = 0
    INTERMEDIATE = 1
    ADVANCED = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    def __str__(self) -> str:
        return self.label

    @classmethod
    def from_name(cls, name: str) -> ExperienceLevel:
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown experience level {name!r}") from None


class Direction(str, enum.Enum):
    UP = "up"
    DOWN = "down"
    HOLD = "hold"


# level -> stage -> inclusive (first, last) module range
ScheduleTable = Mapping[ExperienceLevel, Mapping[Stage, tuple[int, int]]]


@dataclass(frozen=True)
class PersonaSchedule:
    table: ScheduleTable

    def ranges(self, level: ExperienceLevel) -> Mapping[Stage, tuple[int, int]]:
        return self.table.get(level, {})


DEFAULT_SCHEDULE = PersonaSchedule({
    ExperienceLevel.BEGINNER: {
        Stage.GUIDE: (1, 4), Stage.COLLABORATOR: (5, 7), Stage.PEER: (8, 9), Stage.LAUNCHER: (10, 10),
    },
    ExperienceLevel.INTERMEDIATE: {
        Stage.GUIDE: (1, 3), Stage.COLLABORATOR: (4, 6), Stage.PEER: (7, 9), Stage.LAUNCHER: (10, 10),
    },
    ExperienceLevel.ADVANCED: {
        Stage.GUIDE: (1, 1), Stage.COLLABORATOR: (2, 4), Stage.PEER: (5, 9), Stage.LAUNCHER: (10, 10),
    },
})


class ScheduleError(ValueError):
    pass


def persona_for(schedule: PersonaSchedule, level: ExperienceLevel, module: int) -> Stage:
    """Return the stage whose range contains *module* for *level*."""
    if not 1 <= module <= MODULE_COUNT:
        raise ValueError(f"module {module} outside 1..{MODULE_COUNT}")
    hits = [stage for stage, (lo, hi) in schedule.ranges(level).items() if lo <= module <= hi]
    if len(hits) != 1:
        raise ScheduleError(f"{level} module {module} is covered by {len(hits)} stages")
    return hits[0]


@dataclass(frozen=True)
class EffectiveLevel:
    """Self-reported level plus the runtime level used for persona lookup."""

    declared: ExperienceLevel
    current: ExperienceLevel

    @classmethod
    def start(cls, declared: ExperienceLevel) -> EffectiveLevel:
        return cls(declared, declared)


def shift_level(level: EffectiveLevel, direction: Direction | str) -> EffectiveLevel:
    """Move ``current`` one notch, clamped to the ends of the scale."""
    direction = Direction(direction)
    step = {Direction.UP: 1, Direction.DOWN: -1, Direction.HOLD: 0}[direction]
    value = min(max(level.current + step, ExperienceLevel.BEGINNER), ExperienceLevel.ADVANCED)
    return EffectiveLevel(level.declared, ExperienceLevel(value))


# -- override file -------------------------------------------------------------
#
#   # comment
#   beginner     = Guide:1-4, Collaborator:5-7, Peer:8-9, Launcher:10
#   intermediate = Guide:1-3, Collaborator:4-6, Peer:7-9, Launcher:10

_RANGE_RE = re.compile(r"^\s*([A-Za-z]+)\s*:\s*(\d+)(?:\s*-\s*(\d+))?\s*$")


def parse_schedule(text: str) -> PersonaSchedule:
    """Parse the schedule override format. Structure is not validated here."""
    table: dict[ExperienceLevel, dict[Stage, tuple[int, int]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScheduleError(f"line {lineno}: expected '<level> = <ranges>'")
        key, _, rhs = line.partition("=")
        try:
            level = ExperienceLevel.from_name(key)
        except ValueError as exc:
            raise ScheduleError(f"line {lineno}: {exc}") from None
        if level in table:
            raise ScheduleError(f"line {lineno}: duplicate level {level}")
        ranges: dict[Stage, tuple[int, int]] = {}
        for part in rhs.split(","):
            m = _RANGE_RE.match(part)
            if not m:
                raise ScheduleError(f"line {lineno}: bad range {part.strip()!r}")
            try:
                stage = Stage.from_name(m.group(1))
            except ValueError as exc:
                raise ScheduleError(f"line {lineno}: {exc}") from None
            if stage in ranges:
                raise ScheduleError(f"line {lineno}: duplicate stage {stage}")
            lo = int(m.group(2))
            hi = int(m.group(3) or lo)
            ranges[stage] = (lo, hi)
        table[level] = ranges
    return PersonaSchedule(table)


def format_schedule(schedule: PersonaSchedule) -> str:
    lines = []
    for level in sorted(schedule.table):
        parts = []
        for stage, (lo, hi) in sorted(schedule.table[level].items()):
            parts.append(f"{stage.label}:{lo}" if lo == hi else f"{stage.label}:{lo}-{hi}")
        lines.append(f"{level.label} = {', '.join(parts)}")
    return "\n".join(lines) + "\n"


def load_schedule(path: str | Path | None) -> PersonaSchedule:
    """Read an override file (or return the built-in table) and validate it."""
    if path is None:
        return DEFAULT_SCHEDULE
    from curriculum_engine.validator import validate_schedules

    schedule = parse_schedule(Path(path).read_text(encoding="utf-8"))
    problems = validate_schedules(schedule)
    if problems:
        raise ScheduleError("; ".join(v.message for v in problems))
    return schedule
