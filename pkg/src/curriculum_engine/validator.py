"""Structural invariant checks over a loaded corpus and a persona schedule."""

from __future__ import annotations

import json
import re
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

from curriculum_engine.corpus import (
    MODULE_FILES,
    PATHS,
    Corpus,
    LoadCode,
    ModuleDoc,
    ParseCode,
    PathId,
    normalize_feature,
)
from curriculum_engine.persona import (
    DEFAULT_SCHEDULE,
    MODULE_COUNT,
    ExperienceLevel,
    PersonaSchedule,
    Stage,
)

# rule_id -> group. Groups let --rules select a whole check family.
RULES: dict[str, str] = {
    "missing_directory": "completeness",
    "missing_module": "completeness",
    "extra_file": "completeness",
    "unreadable_file": "completeness",
    "empty_context_file": "completeness",
    "missing_h1": "structure",
    "h1_mismatch": "structure",
    "missing_persona": "structure",
    "unknown_persona": "structure",
    "persona_mismatch": "structure",
    "missing_features": "structure",
    "step_numbering": "structure",
    "missing_checkpoint": "structure",
    "checkpoint_not_terminal": "structure",
    "parity": "parity",
    "coverage_gap": "schedule",
    "coverage_overlap": "schedule",
    "coverage_range": "schedule",
    "persona_regression": "schedule",
    "hook_config": "config",
    "hook_script_missing": "config",
    "skill_frontmatter": "config",
}

_PARSE_RULES = {code: code.value for code in ParseCode}
_LOAD_RULES = {
    LoadCode.MISSING_DIRECTORY: "missing_directory",
    LoadCode.MISSING_MODULE: "missing_module",
    LoadCode.UNEXPECTED_FILE: "extra_file",
    LoadCode.UNREADABLE_FILE: "unreadable_file",
}

_PATH_ORDER = {p: i for i, p in enumerate(PATHS)}


@dataclass(frozen=True)
class Violation:
    rule_id: str
    message: str
    path: PathId | None = None
    module: int | None = None
    location: tuple[str, int] | None = None

    def __post_init__(self) -> None:
        if self.rule_id not in RULES:
            raise ValueError(f"unregistered rule {self.rule_id!r}")

    def sort_key(self) -> tuple:
        return (
            self.rule_id,
            -1 if self.path is None else _PATH_ORDER[self.path],
            self.module or 0,
            self.location or ("", 0),
            self.message,
        )


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    checked_rules: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def format(self, style: str = "text") -> str:
        if style == "machine":
            return format_machine(self)
        return format_text(self)


def _file_of(path: PathId, module: int) -> str:
    return f"projects/{path.value}/{MODULE_FILES[module - 1]}"


def validate_completeness(corpus: Corpus) -> list[Violation]:
    out = []
    for issue in corpus.issues:
        out.append(Violation(_LOAD_RULES[issue.code], issue.message, issue.path, issue.module,
                             (issue.file, 0)))
    for name, size in corpus.context_files:
        if size == 0:
            out.append(Violation("empty_context_file", f"context file {name} is empty",
                                 location=(f"context/{name}", 0)))
    return out


def validate_structure(doc: ModuleDoc, schedule: PersonaSchedule = DEFAULT_SCHEDULE) -> list[Violation]:
    """Per-file checks; the persona must equal the intermediate-schedule stage."""
    fname = _file_of(doc.path, doc.number)
    out = [
        Violation(_PARSE_RULES[err.code], err.message, doc.path, doc.number, (fname, err.line))
        for err in doc.errors
    ]
    if doc.persona is not None:
        expected = _expected_persona(schedule, doc.number)
        if expected is not None and doc.persona != expected:
            out.append(Violation(
                "persona_mismatch",
                f"module {doc.number} persona is {doc.persona.label}, schedule says {expected.label}",
                doc.path, doc.number, (fname, 0)))
    return out


def _expected_persona(schedule: PersonaSchedule, module: int) -> Stage | None:
    hits = [s for s, (lo, hi) in schedule.ranges(ExperienceLevel.INTERMEDIATE).items() if lo <= module <= hi]
    return hits[0] if len(hits) == 1 else None


def validate_parity(corpus: Corpus) -> list[Violation]:
    """Every module number must list the same feature set in every path."""
    out = []
    for number in range(1, len(MODULE_FILES) + 1):
        docs = {p: corpus.modules[(p, number)] for p in PATHS if (p, number) in corpus.modules}
        # Files without a features line are already reported by the structure rules.
        sets: dict[PathId, dict[str, str]] = {
            p: {normalize_feature(f): f for f in d.features}
            for p, d in docs.items() if d.has_features_line
        }
        if len(sets) < 2:
            continue
        union: dict[str, str] = {}
        for p in PATHS:
            for key, shown in sets.get(p, {}).items():
                union.setdefault(key, shown)
        for key, shown in union.items():
            lacking = [p for p in PATHS if p in sets and key not in sets[p]]
            if lacking:
                out.append(Violation(
                    "parity",
                    f"feature '{shown}' in module {number} missing in {','.join(p.value for p in lacking)}",
                    module=number))
    return out


def validate_schedules(schedule: PersonaSchedule) -> list[Violation]:
    """Each level must cover modules 1..10 exactly once with non-decreasing stages."""
    out = []
    for level in ExperienceLevel:
        ranges = schedule.ranges(level)
        owners: dict[int, list[Stage]] = {m: [] for m in range(1, MODULE_COUNT + 1)}
        for stage, (lo, hi) in sorted(ranges.items()):
            if lo > hi or lo < 1 or hi > MODULE_COUNT:
                out.append(Violation("coverage_range",
                                     f"{level.label}: {stage.label} range {lo}-{hi} is outside 1..{MODULE_COUNT}"))
            for m in range(max(lo, 1), min(hi, MODULE_COUNT) + 1):
                owners[m].append(stage)
        for m, stages in owners.items():
            if not stages:
                out.append(Violation("coverage_gap", f"{level.label}: module {m} has no persona", module=m))
            elif len(stages) > 1:
                names = ",".join(s.label for s in stages)
                out.append(Violation("coverage_overlap", f"{level.label}: module {m} covered by {names}", module=m))
        prev: tuple[int, Stage] | None = None
        for m in range(1, MODULE_COUNT + 1):
            if len(owners[m]) != 1:
                continue
            stage = owners[m][0]
            if prev is not None and stage < prev[1]:
                out.append(Violation(
                    "persona_regression",
                    f"{level.label}: module {m} is {stage.label} after module {prev[0]} {prev[1].label}",
                    module=m))
            prev = (m, stage)
    return out


# -- host configuration ------------------------------------------------------------
# Only shallow checks: hook commands point at scripts that exist and every skill
# has a SKILL.md with name/description frontmatter. Behaviour is not inspected.

_SCRIPT_RE = re.compile(r"(\.claude/[^\s\"'`;|&]+)")


def _hook_commands(settings: object) -> Iterable[tuple[str, str]]:
    """(event, command) pairs from the ``hooks`` table of a settings file."""
    hooks = settings.get("hooks", {}) if isinstance(settings, dict) else {}
    for event, groups in (hooks.items() if isinstance(hooks, dict) else ()):
        for group in groups if isinstance(groups, list) else ():
            for hook in (group.get("hooks", ()) if isinstance(group, dict) else ()):
                if isinstance(hook, dict) and isinstance(hook.get("command"), str):
                    yield event, hook["command"]


def _frontmatter(text: str) -> dict[str, str] | None:
    lines = text.replace("\r\n", "\n").split("\n")
    if not lines or lines[0].strip() != "---":
        return None
    fields = {}
    for line in lines[1:]:
        if line.strip() == "---":
            return fields
        key, sep, value = line.partition(":")
        if sep and not line.startswith((" ", "\t")):
            fields[key.strip()] = value.strip()
    return None


def validate_config(root: str | Path) -> list[Violation]:
    """Check ``.claude/`` hook wiring and skill metadata; absent config is not an error."""
    root = Path(root)
    config = root / ".claude"
    if not config.is_dir():
        return []
    out = []
    settings_file = config / "settings.json"
    if settings_file.exists():
        try:
            settings = json.loads(settings_file.read_text(encoding="utf-8"))
        except (OSError, UnicodeDecodeError, ValueError) as exc:
            out.append(Violation("hook_config", f"unreadable settings: {exc}", location=(".claude/settings.json", 0)))
            settings = {}
        for event, command in _hook_commands(settings):
            for script in _SCRIPT_RE.findall(command):
                if not (root / script).is_file():
                    out.append(Violation("hook_script_missing", f"{event} hook runs missing script {script}",
                                         location=(".claude/settings.json", 0)))
    skills = config / "skills"
    for skill in sorted(p for p in skills.iterdir() if p.is_dir()) if skills.is_dir() else ():
        rel = f".claude/skills/{skill.name}/SKILL.md"
        try:
            meta = _frontmatter((skill / "SKILL.md").read_text(encoding="utf-8"))
        except (OSError, UnicodeDecodeError):
            out.append(Violation("skill_frontmatter", f"skill {skill.name} has no readable SKILL.md", location=(rel, 0)))
            continue
        missing = [k for k in ("name", "description") if not (meta or {}).get(k)]
        if meta is None or missing:
            detail = "no frontmatter block" if meta is None else f"frontmatter lacks {', '.join(missing)}"
            out.append(Violation("skill_frontmatter", f"skill {skill.name}: {detail}", location=(rel, 1)))
    return out


def _selected(rules: Iterable[str] | None) -> list[str]:
    if rules is None:
        return sorted(RULES)
    chosen = set()
    for r in rules:
        r = r.strip()
        if not r:
            continue
        if r in RULES:
            chosen.add(r)
        elif r in RULES.values():
            chosen.update(k for k, g in RULES.items() if g == r)
        else:
            raise ValueError(f"unknown rule or group {r!r}")
    return sorted(chosen)


def validate_all(corpus: Corpus, schedule: PersonaSchedule = DEFAULT_SCHEDULE,
                 rules: Iterable[str] | None = None) -> ValidationReport:
    """Run every check and keep violations of the selected rules, stably ordered."""
    checked = _selected(rules)
    found = validate_completeness(corpus)
    for key in sorted(corpus.modules, key=lambda k: (_PATH_ORDER[k[0]], k[1])):
        found.extend(validate_structure(corpus.modules[key], schedule))
    found.extend(validate_parity(corpus))
    found.extend(validate_schedules(schedule))
    found.extend(validate_config(corpus.root))
    keep = set(checked)
    found = sorted((v for v in found if v.rule_id in keep), key=Violation.sort_key)
    return ValidationReport(found, checked)


def format_machine(report: ValidationReport) -> str:
    """One tab-separated record per violation, then a summary record."""
    lines = []
    for v in report.violations:
        file, line = v.location or ("", 0)
        lines.append("\t".join([
            "violation", v.rule_id, v.path.value if v.path else "-",
            str(v.module) if v.module else "-", f"{file}:{line}" if file else "-", v.message,
        ]))
    lines.append(f"summary\t{'pass' if report.passed else 'fail'}\t{len(report.violations)}\t"
                 f"{','.join(report.checked_rules)}")
    return "\n".join(lines) + "\n"


def format_text(report: ValidationReport) -> str:
    lines = []
    for v in report.violations:
        where = ""
        if v.location and v.location[0]:
            where = f"{v.location[0]}:{v.location[1]}: " if v.location[1] else f"{v.location[0]}: "
        lines.append(f"{where}[{v.rule_id}] {v.message}")
    if report.passed:
        lines.append(f"OK: {len(report.checked_rules)} rules checked, no violations")
    else:
        lines.append(f"FAIL: {len(report.violations)} violation(s)")
    return "\n".join(lines) + "\n"
