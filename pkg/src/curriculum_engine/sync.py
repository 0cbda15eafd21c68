"""Curriculum sync: changelog triage, feature mapping and safe-append updates.

Module files only ever grow: new steps are numbered after the last existing
step and spliced in directly before the Checkpoint heading, so everything
above the insertion point keeps its bytes. Every written file is re-read and
verified; a file that fails is restored to its original bytes.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from curriculum_engine.corpus import (
    FENCE_RE,
    MODULE_FILES,
    PATHS,
    STEP_RE,
    Corpus,
    ModuleDoc,
    ParseCode,
    PathId,
    parse_module,
    read_text_exact,
)
from curriculum_engine.fsio import LockHeld, atomic_write_bytes, exclusive_lock
from curriculum_engine.validator import validate_structure


class SyncError(Exception):
    pass


# -- versions ----------------------------------------------------------------

Version = tuple[int, ...]
_VERSION_RE = re.compile(r"^\s*v?(\d+(?:\.\d+)*)\s*$")


def parse_version(text: str) -> Version:
    m = _VERSION_RE.match(text)
    if not m:
        raise SyncError(f"unparseable version {text!r}")
    parts = tuple(int(p) for p in m.group(1).split("."))
    # 2.12 == 2.12.0
    while len(parts) > 1 and parts[-1] == 0:
        parts = parts[:-1]
    return parts


def format_version(v: Version) -> str:
    return ".".join(str(p) for p in (v + (0,) * (3 - len(v)) if len(v) < 3 else v))


@dataclass(frozen=True)
class VersionGap:
    """Half-open range (after, upto]."""

    after: Version
    upto: Version

    def __contains__(self, v: Version) -> bool:
        return self.after < v <= self.upto

    def __str__(self) -> str:
        return f"({format_version(self.after)}, {format_version(self.upto)}]"


def detect_gap(current: str, latest: str) -> VersionGap | None:
    """Versions to sync, or ``None`` when *current* is already at or past *latest*."""
    cur, new = parse_version(current), parse_version(latest)
    if cur >= new:
        return None
    return VersionGap(cur, new)


# -- changelog -----------------------------------------------------------------


class Section(str, enum.Enum):
    ADDED = "added"
    CHANGED = "changed"
    REMOVED = "removed"
    FIXED = "fixed"
    OTHER = "other"


KEPT_SECTIONS = frozenset({Section.ADDED, Section.CHANGED, Section.REMOVED})

_RELEASE_RE = re.compile(r"^##\s+\[?\s*v?(\d+(?:\.\d+)*)\s*\]?(?:\s|$)")
_ANY_RELEASE_RE = re.compile(r"^##\s+(?!#)")
_SECTION_RE = re.compile(r"^###\s+(.*?)\s*$")
_BULLET_RE = re.compile(r"^[-*]\s+(.*)$")


@dataclass(frozen=True)
class ChangelogEntry:
    version: str
    section: Section
    text: str


def parse_changelog(text: str) -> list[ChangelogEntry]:
    """Every bullet under a ``## [X.Y.Z]`` release heading, in file order."""
    entries: list[ChangelogEntry] = []
    version: str | None = None
    section = Section.OTHER
    saw_release = False
    current: list[str] | None = None

    def flush() -> None:
        nonlocal current
        if current is not None and version is not None:
            entries.append(ChangelogEntry(version, section, " ".join(current).strip()))
        current = None

    for raw in text.splitlines():
        line = raw.rstrip()
        rm = _RELEASE_RE.match(line)
        if rm:
            flush()
            version, section, saw_release = rm.group(1), Section.OTHER, True
            continue
        if _ANY_RELEASE_RE.match(line):  # e.g. "## [Unreleased]"
            flush()
            version = None
            continue
        sm = _SECTION_RE.match(line)
        if sm:
            flush()
            name = sm.group(1).strip().lower()
            section = Section(name) if name in Section._value2member_map_ else Section.OTHER
            continue
        bm = _BULLET_RE.match(line)
        if bm:
            flush()
            current = [bm.group(1).strip()]
        elif current is not None and line.strip() and raw[:1].isspace():
            current.append(line.strip())
        elif not line.strip():
            flush()
    flush()
    if not saw_release:
        raise SyncError("malformed changelog: no '## [X.Y.Z]' version headings")
    return entries


def triage(changelog: str, gap: VersionGap | None) -> list[ChangelogEntry]:
    """Added/Changed/Removed entries of releases inside *gap*."""
    entries = parse_changelog(changelog)
    if gap is None:
        return []
    return [e for e in entries if e.section in KEPT_SECTIONS and parse_version(e.version) in gap]


# -- feature map ---------------------------------------------------------------


@dataclass(frozen=True)
class Targets:
    modules: tuple[int, ...]
    context_files: tuple[str, ...]


@dataclass(frozen=True)
class FeatureRule:
    pattern: str
    targets: Targets

    def matches(self, text: str) -> bool:
        return re.search(self.pattern, text, re.IGNORECASE) is not None


@dataclass(frozen=True)
class FeatureMap:
    rules: tuple[FeatureRule, ...]


def parse_feature_map(text: str) -> FeatureMap:
    """Parse ``pattern | modules | context files`` records, one per line.

    ``modules`` and ``context files`` are comma-separated and may be empty;
    ``#`` starts a comment line. Patterns are case-insensitive regexes.
    """
    rules = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split("|")]
        if len(fields) not in (2, 3) or not fields[0]:
            raise SyncError(f"feature map line {lineno}: expected 'pattern | modules | context files'")
        try:
            re.compile(fields[0])
            modules = tuple(int(m) for m in fields[1].split(",") if m.strip())
        except (re.error, ValueError) as exc:
            raise SyncError(f"feature map line {lineno}: {exc}") from None
        bad = [m for m in modules if not 1 <= m <= len(MODULE_FILES)]
        if bad:
            raise SyncError(f"feature map line {lineno}: module {bad[0]} outside 1..{len(MODULE_FILES)}")
        ctx = tuple(c.strip() for c in fields[2].split(",") if c.strip()) if len(fields) == 3 else ()
        rules.append(FeatureRule(fields[0], Targets(modules, ctx)))
    return FeatureMap(tuple(rules))


@dataclass
class MappedEntries:
    mapped: list[tuple[ChangelogEntry, Targets]] = field(default_factory=list)
    unmapped: list[ChangelogEntry] = field(default_factory=list)


def map_entries(entries: Iterable[ChangelogEntry], fmap: FeatureMap) -> MappedEntries:
    """First matching rule wins; entries matching nothing go to ``unmapped``."""
    out = MappedEntries()
    for entry in entries:
        rule = next((r for r in fmap.rules if r.matches(entry.text)), None)
        if rule is None:
            out.unmapped.append(entry)
        else:
            out.mapped.append((entry, rule.targets))
    return out


# -- safe append -----------------------------------------------------------------


@dataclass(frozen=True)
class ModuleTarget:
    path: PathId
    number: int


@dataclass(frozen=True)
class UpdatePayload:
    target: ModuleTarget | str  # str = context file name
    content: str
    source_entry: ChangelogEntry | None = None

    @property
    def is_context(self) -> bool:
        return isinstance(self.target, str)


_PAYLOAD_HEADING_RE = re.compile(r"^(#{1,6})\s+(.*?)\s*$")


def _split_new_steps(content: str) -> list[tuple[str, list[str]]]:
    """Split payload text into (heading, body lines) chunks, one per new step."""
    chunks: list[tuple[str, list[str]]] = []
    in_fence = False
    for line in content.strip("\n").replace("\r\n", "\n").split("\n"):
        hm = None if in_fence else _PAYLOAD_HEADING_RE.match(line)
        if FENCE_RE.match(line):
            in_fence = not in_fence
        if hm or not chunks:
            heading = hm.group(2) if hm else line.strip()
            chunks.append((heading, []))
        else:
            chunks[-1][1].append(line.rstrip())
    return chunks


def _step_prefix(doc: ModuleDoc) -> tuple[str, str]:
    """Heading opener/closer used by the document's existing steps."""
    if doc.steps:
        first = doc.steps[-1].source.split("\n", 1)[0]
        sm = STEP_RE.match(first.rstrip("\r"))
        if sm and sm.group(1) == "**":
            return "**", "**"
        if sm:
            return sm.group(1).strip() + " ", ""
    return "## ", ""


def render_steps(doc: ModuleDoc, content: str) -> str:
    """Number the payload's steps after the document's last step."""
    nl = doc.newline
    opener, closer = _step_prefix(doc)
    next_index = max((s.step_index for s in doc.steps if s.module_number == doc.number), default=0) + 1
    blocks = []
    for offset, (heading, body) in enumerate(_split_new_steps(content)):
        label = f"{doc.number}.{next_index + offset}"
        lines = [f"{opener}{label} {heading}{closer}"] + body
        while lines and not lines[-1].strip():
            lines.pop()
        blocks.append(nl.join(lines) + nl + nl)
    return "".join(blocks)


def apply_update(doc: ModuleDoc, payload: UpdatePayload) -> ModuleDoc:
    """Insert the payload's steps right before the Checkpoint heading."""
    if payload.is_context or payload.target != ModuleTarget(doc.path, doc.number):
        raise SyncError(f"payload for {payload.target} applied to {doc.path}/{doc.number}")
    if doc.checkpoint_offset is None:
        raise SyncError(f"{doc.path}/{doc.number} has no Checkpoint section to insert before")
    if not payload.content.strip():
        return doc
    at = doc.checkpoint_offset
    before = doc.raw_text[:at]
    nl = doc.newline
    # Keep a blank line between the last existing step and the new ones.
    sep = "" if before.endswith(nl + nl) or not before else (nl if before.endswith(nl) else nl + nl)
    text = before + sep + render_steps(doc, payload.content) + doc.raw_text[at:]
    return parse_module(text, doc.path, doc.number)


# -- verification ------------------------------------------------------------------


def verify_module(original: ModuleDoc, updated: ModuleDoc) -> list[str]:
    """Reasons *updated* is not a safe append onto *original* (empty means ok)."""
    problems = []
    if original.checkpoint_offset is not None:
        prefix = original.raw_text[:original.checkpoint_offset]
        if not updated.raw_text.startswith(prefix):
            problems.append("bytes before the insertion point changed")
    old_labels = [(s.step_index, s.heading) for s in original.steps]
    new_labels = [(s.step_index, s.heading) for s in updated.steps]
    if new_labels[:len(old_labels)] != old_labels:
        problems.append("existing steps were renumbered or retitled")
    if updated.stop_count < original.stop_count:
        problems.append(f"STOP blocks dropped ({original.stop_count} -> {updated.stop_count})")
    before = {(v.rule_id, v.message) for v in validate_structure(original)}
    for v in validate_structure(updated):
        if (v.rule_id, v.message) not in before:
            problems.append(f"{v.rule_id}: {v.message}")
    # Contiguity and checkpoint placement must hold outright, not just relative to before.
    structural = {ParseCode.STEP_NUMBERING, ParseCode.MISSING_CHECKPOINT, ParseCode.CHECKPOINT_NOT_TERMINAL}
    for err in updated.errors:
        if err.code in structural and f"{err.code.value}: {err.message}" not in problems:
            problems.append(f"{err.code.value}: {err.message}")
    return problems


# -- pipeline ------------------------------------------------------------------------


class Outcome(str, enum.Enum):
    UPDATED = "updated"
    REVERTED = "reverted"
    UNCHANGED = "unchanged"
    FAILED = "failed"  # I/O error; file left as it was


@dataclass
class FileResult:
    file: str
    outcome: Outcome
    reasons: list[str] = field(default_factory=list)


@dataclass
class SyncPlan:
    from_version: str | None
    to_version: str | None
    entries: list[ChangelogEntry] = field(default_factory=list)
    targets: list[tuple[ChangelogEntry, Targets]] = field(default_factory=list)
    unmapped: list[ChangelogEntry] = field(default_factory=list)
    applied: list[FileResult] = field(default_factory=list)
    dry_run: bool = False

    @property
    def reverted(self) -> list[FileResult]:
        return [r for r in self.applied if r.outcome in (Outcome.REVERTED, Outcome.FAILED)]

    def format_machine(self) -> str:
        lines = [f"sync\t{self.from_version or '-'}\t{self.to_version or '-'}\t"
                 f"{'dry-run' if self.dry_run else 'write'}"]
        for entry, t in self.targets:
            mods = ",".join(str(m) for m in t.modules) or "-"
            ctx = ",".join(t.context_files) or "-"
            lines.append(f"entry\t{entry.version}\t{entry.section.value}\t{mods}\t{ctx}\t{entry.text}")
        for entry in self.unmapped:
            lines.append(f"unmapped\t{entry.version}\t{entry.section.value}\t{entry.text}")
        for r in self.applied:
            lines.append(f"file\t{r.file}\t{r.outcome.value}\t{'; '.join(r.reasons) or '-'}")
        return "\n".join(lines) + "\n"


def _scope_paths(scope: PathId | str | None) -> tuple[PathId, ...]:
    if scope is None or scope == "all":
        return PATHS
    return (PathId(scope),)


def _write_verified(file: Path, original: bytes, new: bytes, check) -> FileResult:
    """Write *new*, re-read and check it, restoring *original* on failure."""
    atomic_write_bytes(file, new)
    reasons = check(file.read_bytes())
    if reasons:
        atomic_write_bytes(file, original)
        return FileResult(str(file), Outcome.REVERTED, reasons)
    return FileResult(str(file), Outcome.UPDATED)


def run_sync(
    corpus: Corpus,
    changelog: str,
    fmap: FeatureMap,
    payloads: Sequence[UpdatePayload],
    scope: PathId | str | None = None,
    *,
    current_version: str | None = None,
    latest_version: str | None = None,
    dry_run: bool = False,
) -> SyncPlan:
    """Triage, map, apply, verify and (when verification fails) revert.

    Without explicit versions the whole changelog is in range. *scope* is one
    path or ``"all"``/``None``; context payloads are applied in every scope.
    """
    entries = parse_changelog(changelog)
    versions = sorted({parse_version(e.version) for e in entries})
    lo = parse_version(current_version) if current_version else (0,)
    hi = parse_version(latest_version) if latest_version else (versions[-1] if versions else (0,))
    gap = VersionGap(lo, hi) if lo < hi else None
    kept = triage(changelog, gap)
    mapped = map_entries(kept, fmap)
    plan = SyncPlan(
        from_version=current_version, to_version=latest_version or (format_version(hi) if versions else None),
        entries=kept, targets=mapped.mapped, unmapped=mapped.unmapped, dry_run=dry_run,
    )
    paths = set(_scope_paths(scope))
    lock_target = corpus.root / ".sync"
    try:
        with exclusive_lock(lock_target):
            _apply_all(corpus, payloads, paths, plan, dry_run)
    except LockHeld:
        raise SyncError(f"another sync holds the lock on {corpus.root}") from None
    return plan


def _apply_all(corpus: Corpus, payloads: Sequence[UpdatePayload], paths: set[PathId],
               plan: SyncPlan, dry_run: bool) -> None:
    by_module: dict[ModuleTarget, list[UpdatePayload]] = {}
    by_context: dict[str, list[UpdatePayload]] = {}
    for p in payloads:
        if p.is_context:
            by_context.setdefault(p.target, []).append(p)
        elif p.target.path in paths:
            by_module.setdefault(p.target, []).append(p)

    order = {p: i for i, p in enumerate(PATHS)}
    for target in sorted(by_module, key=lambda t: (order[t.path], t.number)):
        file = corpus.module_path(target.path, target.number)
        rel = f"projects/{target.path.value}/{file.name}"
        try:
            original_bytes = file.read_bytes()
            original = parse_module(original_bytes.decode("utf-8"), target.path, target.number)
            doc = original
            for payload in by_module[target]:
                doc = apply_update(doc, payload)
        except (OSError, UnicodeDecodeError, SyncError) as exc:
            plan.applied.append(FileResult(rel, Outcome.FAILED, [str(exc)]))
            continue
        if doc.raw_text == original.raw_text:
            plan.applied.append(FileResult(rel, Outcome.UNCHANGED))
            continue

        def check(data: bytes, original=original, target=target) -> list[str]:
            try:
                reread = parse_module(data.decode("utf-8"), target.path, target.number)
            except UnicodeDecodeError as exc:
                return [str(exc)]
            return verify_module(original, reread)

        if dry_run:
            reasons = check(doc.raw_text.encode("utf-8"))
            plan.applied.append(FileResult(rel, Outcome.REVERTED if reasons else Outcome.UPDATED, reasons))
            continue
        try:
            result = _write_verified(file, original_bytes, doc.raw_text.encode("utf-8"), check)
        except OSError as exc:
            result = FileResult(rel, Outcome.FAILED, [str(exc)])
        result.file = rel
        plan.applied.append(result)
        if result.outcome is Outcome.UPDATED:
            corpus.modules[(target.path, target.number)] = parse_module(
                read_text_exact(file), target.path, target.number)

    for name in sorted(by_context):
        file = corpus.root / "context" / name
        rel = f"context/{name}"
        new_text = by_context[name][-1].content
        try:
            original_bytes = file.read_bytes() if file.exists() else b""
        except OSError as exc:
            plan.applied.append(FileResult(rel, Outcome.FAILED, [str(exc)]))
            continue
        new_bytes = new_text.encode("utf-8")
        if new_bytes == original_bytes:
            plan.applied.append(FileResult(rel, Outcome.UNCHANGED))
            continue

        def check_ctx(data: bytes) -> list[str]:
            return [] if data.strip() else ["context file would be empty"]

        if dry_run:
            reasons = check_ctx(new_bytes)
            plan.applied.append(FileResult(rel, Outcome.REVERTED if reasons else Outcome.UPDATED, reasons))
            continue
        existed = file.exists()
        try:
            result = _write_verified(file, original_bytes, new_bytes, check_ctx)
            if result.outcome is Outcome.REVERTED and not existed:
                file.unlink(missing_ok=True)
        except OSError as exc:
            result = FileResult(rel, Outcome.FAILED, [str(exc)])
        result.file = rel
        plan.applied.append(result)


# -- payload directory ---------------------------------------------------------------

_PAYLOAD_NAME_RE = re.compile(r"^([a-z]+)-(\d{1,2})\.md$")


def load_payloads(directory: str | Path) -> list[UpdatePayload]:
    """Read ``<path>-<NN>.md`` module payloads and ``context/<name>`` replacements."""
    directory = Path(directory)
    out = []
    for f in sorted(directory.iterdir()):
        if not f.is_file():
            continue
        m = _PAYLOAD_NAME_RE.match(f.name)
        if not m:
            raise SyncError(f"payload file {f.name} is not named <path>-<NN>.md")
        try:
            target = ModuleTarget(PathId(m.group(1)), int(m.group(2)))
        except ValueError as exc:
            raise SyncError(f"payload file {f.name}: {exc}") from None
        if not 1 <= target.number <= len(MODULE_FILES):
            raise SyncError(f"payload file {f.name}: module outside 1..{len(MODULE_FILES)}")
        out.append(UpdatePayload(target, read_text_exact(f)))
    ctx = directory / "context"
    if ctx.is_dir():
        for f in sorted(ctx.iterdir()):
            if f.is_file():
                out.append(UpdatePayload(f.name, read_text_exact(f)))
    return out
