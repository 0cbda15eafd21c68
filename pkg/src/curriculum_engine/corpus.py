"""Curriculum data model and module-file parsing.

A module file looks like::

    # Module 7: Guard Rails

    **Persona -- Peer:** Terse guidance, point to docs.

    **CC features:** PreToolUse, hook decision control, prompt-based hooks

    ## 7.1 Write the guard
    ...
    **STOP -- What you just did:** ...

    ## Checkpoint

    - [ ] The guard blocks bad writes

Parsing keeps the original text in slices so that ``serialize`` reproduces the
input byte for byte, including CRLF line endings.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path

from curriculum_engine.persona import Stage


class PathId(str, enum.Enum):
    CANVAS = "canvas"
    FORGE = "forge"
    NEXUS = "nexus"
    SENTINEL = "sentinel"
    BYOP = "byop"

    def __str__(self) -> str:
        return self.value


PATHS: tuple[PathId, ...] = tuple(PathId)

MODULE_FILES: tuple[str, ...] = (
    "01-setup.md",
    "02-blueprint.md",
    "03-rules-memory-context.md",
    "04-skills-commands.md",
    "05-hooks.md",
    "06-mcp-servers.md",
    "07-guard-rails.md",
    "08-subagents.md",
    "09-tasks-tdd.md",
    "10-parallel-plugins-eval.md",
)

# Files allowed next to the module files in each project directory.
PROJECT_EXTRAS: frozenset[str] = frozenset({"README.md"})


def module_filename(number: int) -> str:
    return MODULE_FILES[number - 1]


H1_RE = re.compile(r"^#\s+Module\s+(\d+)\s*:\s*(.*?)\s*$")
ANY_H1_RE = re.compile(r"^#\s")
HEADING_RE = re.compile(r"^(#{1,6})\s+(.*?)\s*#*\s*$")
STEP_RE = re.compile(r"^(#{1,6}\s+|\*\*)(\d+)\.(\d+)(?=[\s.:)\-*]|$)[\s.:)\-]*(.*?)\s*$")
PERSONA_LINE_RE = re.compile(r"\*\*\s*Persona\b", re.IGNORECASE)
PERSONA_RE = re.compile(
    r"\*\*\s*Persona\s*(?:--|—|–)\s*(Guide|Collaborator|Peer|Launcher)\b",
    re.IGNORECASE,
)
FEATURES_RE = re.compile(r"^\s*\*\*\s*CC features\s*:?\s*\*\*\s*:?\s*(.*?)\s*$", re.IGNORECASE)
STOP_RE = re.compile(r"^\s*\*\*STOP\b")
FENCE_RE = re.compile(r"^\s*(```|~~~)")
BULLET_RE = re.compile(r"^\s*[-*+]\s+(?:\[[ xX]\]\s+)?(.*?)\s*$")


class ParseCode(str, enum.Enum):
    MISSING_H1 = "missing_h1"
    H1_MISMATCH = "h1_mismatch"
    MISSING_PERSONA = "missing_persona"
    UNKNOWN_PERSONA = "unknown_persona"
    MISSING_FEATURES = "missing_features"
    STEP_NUMBERING = "step_numbering"
    MISSING_CHECKPOINT = "missing_checkpoint"
    CHECKPOINT_NOT_TERMINAL = "checkpoint_not_terminal"


@dataclass(frozen=True)
class ParseError:
    code: ParseCode
    line: int  # 1-based; 0 when the problem has no single location
    message: str


@dataclass(frozen=True)
class Step:
    module_number: int
    step_index: int
    heading: str
    body: str
    stop_blocks: tuple[str, ...] = ()
    line: int = 0
    source: str = ""  # exact original text of the step, heading included

    @property
    def label(self) -> str:
        return f"{self.module_number}.{self.step_index}"

    @property
    def stop_block(self) -> str | None:
        return self.stop_blocks[0] if self.stop_blocks else None


@dataclass(frozen=True)
class ModuleDoc:
    path: PathId
    number: int
    title: str
    persona: Stage | None
    features: tuple[str, ...]
    steps: tuple[Step, ...]
    checkpoint_items: tuple[str, ...]
    raw_text: str
    head: str = ""  # text before the first step
    tail: str = ""  # checkpoint section onwards
    checkpoint_offset: int | None = None  # character offset of the Checkpoint heading
    has_features_line: bool = False
    errors: tuple[ParseError, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors

    @property
    def stop_count(self) -> int:
        return sum(len(s.stop_blocks) for s in self.steps) + _count_stops(self.head + self.tail)

    @property
    def step_labels(self) -> list[str]:
        return [s.label for s in self.steps]

    @property
    def newline(self) -> str:
        return "\r\n" if "\r\n" in self.raw_text else "\n"


def _count_stops(text: str) -> int:
    return sum(1 for line in text.splitlines() if STOP_RE.match(line))


def split_features(line: str) -> tuple[str, ...]:
    """Split a feature line on top-level commas (commas inside brackets stay)."""
    parts: list[str] = []
    depth = 0
    buf: list[str] = []
    for ch in line:
        if ch in "([{":
            depth += 1
        elif ch in ")]}" and depth:
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    parts.append("".join(buf))
    return tuple(p.strip() for p in parts if p.strip())


def normalize_feature(phrase: str) -> str:
    return " ".join(phrase.split()).casefold()


def parse_step_label(label: str) -> tuple[int, int]:
    """``"7.3"`` -> ``(7, 3)``."""
    m = re.fullmatch(r"\s*(\d+)\.(\d+)\s*", label)
    if not m:
        raise ValueError(f"bad step label {label!r}")
    return int(m.group(1)), int(m.group(2))


def _stop_paragraph(lines: list[str], start: int) -> str:
    out = []
    for line in lines[start:]:
        bare = line.rstrip("\r\n")
        if out and (not bare.strip() or HEADING_RE.match(bare)):
            break
        out.append(bare)
    return "\n".join(out)


def parse_module(text: str, path: PathId | str, expected_number: int) -> ModuleDoc:
    """Parse one module file.

    Problems are collected in ``ModuleDoc.errors`` rather than raised; the
    returned document is filled in as far as the text allows.
    """
    path = PathId(path)
    lines = text.splitlines(keepends=True)
    bare = [ln.rstrip("\r\n") for ln in lines]
    offsets = [0]
    for ln in lines:
        offsets.append(offsets[-1] + len(ln))

    errors: list[ParseError] = []
    title = ""
    persona: Stage | None = None
    features: tuple[str, ...] = ()
    has_features = False
    persona_seen = False

    # Lines inside ``` fences are prose, never structure.
    fenced = []
    in_fence = False
    for ln in bare:
        if FENCE_RE.match(ln):
            fenced.append(True)
            in_fence = not in_fence
        else:
            fenced.append(in_fence)

    h1_line = next((i for i, ln in enumerate(bare) if not fenced[i] and ANY_H1_RE.match(ln)), None)
    m = H1_RE.match(bare[h1_line]) if h1_line is not None else None
    if m is None:
        errors.append(ParseError(ParseCode.MISSING_H1, 0 if h1_line is None else h1_line + 1,
                                 "missing '# Module <n>: <title>' heading"))
    else:
        title = m.group(2)
        if int(m.group(1)) != expected_number:
            errors.append(ParseError(
                ParseCode.H1_MISMATCH, h1_line + 1,
                f"H1 says module {m.group(1)}, file is module {expected_number}"))

    # Locate steps and the checkpoint heading.
    step_starts: list[tuple[int, re.Match]] = []
    checkpoint_line: int | None = None
    for i, ln in enumerate(bare):
        if fenced[i]:
            continue
        sm = STEP_RE.match(ln)
        if sm:
            step_starts.append((i, sm))
            continue
        hm = HEADING_RE.match(ln)
        if hm and len(hm.group(1)) > 1 and hm.group(2).lstrip("*_ ").lower().startswith("checkpoint"):
            if checkpoint_line is None:
                checkpoint_line = i

    first_step = step_starts[0][0] if step_starts else None
    head_end = first_step if first_step is not None else (
        checkpoint_line if checkpoint_line is not None else len(lines))

    for i in range(head_end):
        ln = bare[i]
        if fenced[i]:
            continue
        if PERSONA_LINE_RE.search(ln) and not persona_seen:
            persona_seen = True
            pm = PERSONA_RE.search(ln)
            if pm:
                persona = Stage.from_name(pm.group(1))
            else:
                errors.append(ParseError(ParseCode.UNKNOWN_PERSONA, i + 1,
                                         f"unrecognized persona line: {ln.strip()}"))
        fm = FEATURES_RE.match(ln)
        if fm and not has_features:
            has_features = True
            features = split_features(fm.group(1))
    if not persona_seen:
        errors.append(ParseError(ParseCode.MISSING_PERSONA, 0, "missing persona line"))
    if not has_features:
        errors.append(ParseError(ParseCode.MISSING_FEATURES, 0, "missing CC features line"))

    # Build steps; a step runs to the next step heading or the checkpoint.
    steps: list[Step] = []
    for n, (i, sm) in enumerate(step_starts):
        # Slices must tile the text, so a misplaced checkpoint stays inside a step.
        if n + 1 < len(step_starts):
            end = step_starts[n + 1][0]
        elif checkpoint_line is not None and checkpoint_line > i:
            end = checkpoint_line
        else:
            end = len(lines)
        heading = sm.group(4)
        if sm.group(1) == "**":
            heading = heading.rstrip("*").strip()
        body_lines = bare[i + 1:end]
        stops = tuple(_stop_paragraph(lines, j) for j in range(i + 1, end)
                      if not fenced[j] and STOP_RE.match(bare[j]))
        steps.append(Step(
            module_number=int(sm.group(2)),
            step_index=int(sm.group(3)),
            heading=heading,
            body="\n".join(body_lines).strip("\n"),
            stop_blocks=stops,
            line=i + 1,
            source=text[offsets[i]:offsets[end]],
        ))

    expected_index = 1
    for st in steps:
        if st.module_number != expected_number:
            errors.append(ParseError(ParseCode.STEP_NUMBERING, st.line,
                                     f"step {st.label} does not belong to module {expected_number}"))
            continue
        if st.step_index != expected_index:
            errors.append(ParseError(ParseCode.STEP_NUMBERING, st.line,
                                     f"non-contiguous step numbering at {st.label}"))
        expected_index = st.step_index + 1

    checkpoint_items: tuple[str, ...] = ()
    checkpoint_offset = None
    if checkpoint_line is None:
        errors.append(ParseError(ParseCode.MISSING_CHECKPOINT, 0, "missing Checkpoint section"))
    else:
        checkpoint_offset = offsets[checkpoint_line]
        items = []
        for ln in bare[checkpoint_line + 1:]:
            if HEADING_RE.match(ln):
                break
            bm = BULLET_RE.match(ln)
            if bm and bm.group(1):
                items.append(bm.group(1))
        checkpoint_items = tuple(items)
        if not items:
            errors.append(ParseError(ParseCode.MISSING_CHECKPOINT, checkpoint_line + 1,
                                     "Checkpoint section has no items"))
        late = [st for st in steps if st.line - 1 > checkpoint_line]
        if late:
            errors.append(ParseError(ParseCode.CHECKPOINT_NOT_TERMINAL, late[0].line,
                                     f"step {late[0].label} follows the Checkpoint section"))

    if steps:
        head = text[:offsets[steps[0].line - 1]]
        last = steps[-1]
        tail = text[offsets[last.line - 1] + len(last.source):]
    elif checkpoint_offset is not None:
        head, tail = text[:checkpoint_offset], text[checkpoint_offset:]
    else:
        head, tail = text, ""

    return ModuleDoc(
        path=path,
        number=expected_number,
        title=title,
        persona=persona,
        features=features,
        steps=tuple(steps),
        checkpoint_items=checkpoint_items,
        raw_text=text,
        head=head,
        tail=tail,
        checkpoint_offset=checkpoint_offset,
        has_features_line=has_features,
        errors=tuple(sorted(errors, key=lambda e: (e.line, e.code.value))),
    )


def serialize(doc: ModuleDoc) -> str:
    """Rebuild the file text from the parsed pieces."""
    return doc.head + "".join(s.source for s in doc.steps) + doc.tail


# -- repository layout -------------------------------------------------------


class LoadCode(str, enum.Enum):
    MISSING_DIRECTORY = "missing_directory"
    MISSING_MODULE = "missing_module"
    UNEXPECTED_FILE = "unexpected_file"
    UNREADABLE_FILE = "unreadable_file"


@dataclass(frozen=True)
class LoadIssue:
    code: LoadCode
    file: str  # path relative to the corpus root
    message: str
    path: PathId | None = None
    module: int | None = None


@dataclass
class Corpus:
    root: Path
    modules: dict[tuple[PathId, int], ModuleDoc] = field(default_factory=dict)
    context_files: list[tuple[str, int]] = field(default_factory=list)
    issues: list[LoadIssue] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return len(self.modules) == len(PATHS) * len(MODULE_FILES)

    def module_path(self, path: PathId, number: int) -> Path:
        return self.root / "projects" / path.value / module_filename(number)

    def for_path(self, path: PathId) -> dict[int, ModuleDoc]:
        return {n: d for (p, n), d in self.modules.items() if p == path}


def read_text_exact(file: Path) -> str:
    """Read UTF-8 text without newline translation."""
    return file.read_bytes().decode("utf-8")


def load_corpus(root: str | Path) -> Corpus:
    """Load ``projects/<path>/NN-*.md`` and ``context/*`` under *root*.

    Layout problems and unreadable files are recorded in ``Corpus.issues``;
    per-file parse errors stay on each ``ModuleDoc``. Nothing here raises
    except a missing root.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root {root} is not a directory")
    corpus = Corpus(root=root)

    for path in PATHS:
        pdir = root / "projects" / path.value
        rel_dir = f"projects/{path.value}"
        if not pdir.is_dir():
            corpus.issues.append(LoadIssue(LoadCode.MISSING_DIRECTORY, rel_dir,
                                           f"missing project directory {rel_dir}", path=path))
            continue
        present = {p.name for p in pdir.iterdir() if p.is_file()}
        for extra in sorted(present - set(MODULE_FILES) - PROJECT_EXTRAS):
            corpus.issues.append(LoadIssue(LoadCode.UNEXPECTED_FILE, f"{rel_dir}/{extra}",
                                           f"unexpected file {path.value}/{extra}", path=path))
        for number, name in enumerate(MODULE_FILES, start=1):
            rel = f"{path.value}/{name}"
            if name not in present:
                corpus.issues.append(LoadIssue(LoadCode.MISSING_MODULE, f"projects/{rel}",
                                               f"missing module file {rel}", path=path, module=number))
                continue
            try:
                text = read_text_exact(pdir / name)
            except (OSError, UnicodeDecodeError) as exc:
                corpus.issues.append(LoadIssue(LoadCode.UNREADABLE_FILE, f"projects/{rel}",
                                               f"unreadable file {rel}: {exc}", path=path, module=number))
                continue
            corpus.modules[(path, number)] = parse_module(text, path, number)

    cdir = root / "context"
    if not cdir.is_dir():
        corpus.issues.append(LoadIssue(LoadCode.MISSING_DIRECTORY, "context",
                                       "missing context directory"))
    else:
        for f in sorted(cdir.iterdir()):
            if f.is_file() and not f.name.startswith("."):
                corpus.context_files.append((f.name, f.stat().st_size))
    return corpus
