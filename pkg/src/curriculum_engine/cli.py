"""Command-line front door.

Exit codes: 0 success/pass, 1 domain negative (violations, resume conflict,
reverted files, missing steps), 2 usage or internal error. ``observe`` and
``inject-context`` run as host hooks and always exit 0; their diagnostics go
to stderr only.

Path flags fall back to environment variables when omitted:
CURRICULUM_ROOT, CURRICULUM_PROFILE, CURRICULUM_STATE (onboarding JSON),
CURRICULUM_MARKERS (step-marker file), CURRICULUM_TRANSCRIPT,
CURRICULUM_LEXICON, CURRICULUM_SCHEDULE.
"""

from __future__ import annotations

import contextlib
import io
import os
import sys
from pathlib import Path
from types import SimpleNamespace
from typing import TYPE_CHECKING, Callable, NamedTuple, Sequence, TextIO

if TYPE_CHECKING:
    import argparse

# subcommand -> engine operations it exposes (each operation has one owner)
COMMANDS: dict[str, tuple[str, ...]] = {
    "validate": ("load_corpus", "parse_module", "validate_completeness", "validate_structure",
                 "validate_parity", "validate_schedules", "validate_config", "validate_all"),
    "observe": ("classify", "update_profile", "compute_trend", "observe"),
    "inject-context": ("make_note",),
    "adapt-boundary": ("decide_boundary", "apply_boundary", "shift_level", "persona_for"),
    "onboard": ("advance", "resume_check"),
    "track-step": ("record_step",),
    "pre-advance": ("pre_advance_check",),
    "sync": ("detect_gap", "triage", "map_entries", "apply_update", "run_sync"),
}

EXIT_OK, EXIT_NEGATIVE, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


class CommandResult(NamedTuple):
    exit_code: int
    stdout_payload: str
    diagnostics: str


def _env_path(value: str | None, env: str, flag: str, required: bool = True) -> Path | None:
    value = value or os.environ.get(env)
    if not value:
        if required:
            raise UsageError(f"{flag} is required (or set {env})")
        return None
    return Path(value)


# -- handlers ---------------------------------------------------------------------


def cmd_validate(args, out: TextIO, err: TextIO) -> int:
    from curriculum_engine.corpus import load_corpus
    from curriculum_engine.persona import ScheduleError, load_schedule
    from curriculum_engine.validator import validate_all

    root = _env_path(args.root, "CURRICULUM_ROOT", "<root>")
    schedule_path = _env_path(args.schedule, "CURRICULUM_SCHEDULE", "--schedule", required=False)
    try:
        corpus = load_corpus(root)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    try:
        schedule = load_schedule(schedule_path)
    except ScheduleError:
        # A well-formed but inconsistent table is reported as violations.
        from curriculum_engine.persona import parse_schedule
        try:
            schedule = parse_schedule(schedule_path.read_text(encoding="utf-8"))
        except ScheduleError as exc:
            raise UsageError(f"{schedule_path}: {exc}") from None
    rules = args.rules.split(",") if args.rules else None
    try:
        report = validate_all(corpus, schedule, rules)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out.write(report.format(args.format))
    return EXIT_OK if report.passed else EXIT_NEGATIVE


def cmd_observe(args, out: TextIO, err: TextIO) -> int:
    from curriculum_engine.engagement import ObserveStatus, load_lexicon, observe

    try:
        transcript = _env_path(args.transcript, "CURRICULUM_TRANSCRIPT", "--transcript")
        profile = _env_path(args.profile, "CURRICULUM_PROFILE", "--profile")
        lexicon_path = _env_path(args.lexicon, "CURRICULUM_LEXICON", "--lexicon", required=False)
        lexicon = load_lexicon(lexicon_path)
        status = observe(transcript, profile, lexicon)
    except Exception as exc:  # the host must never see a failure
        err.write(f"skipped: {exc}\n")
        return EXIT_OK
    if status is not ObserveStatus.APPLIED:
        err.write(status.reason + "\n")
    return EXIT_OK


HOOK_HANDLERS = {"observe": cmd_observe}


def cmd_inject_context(args, out: TextIO, err: TextIO) -> int:
    from curriculum_engine.adaptation import make_note
    from curriculum_engine.engagement import load_profile

    try:
        profile_path = _env_path(args.profile, "CURRICULUM_PROFILE", "--profile")
        note = make_note(load_profile(profile_path))
    except Exception as exc:
        err.write(f"no note: {exc}\n")
        return EXIT_OK
    if note is not None:
        out.write(note.rendered + "\n")
    return EXIT_OK


def cmd_adapt_boundary(args, out: TextIO, err: TextIO) -> int:
    import dataclasses

    from curriculum_engine.adaptation import apply_boundary, decide_boundary
    from curriculum_engine.engagement import load_profile, save_profile
    from curriculum_engine.fsio import LockHeld, exclusive_lock
    from curriculum_engine.persona import load_schedule, persona_for
    from curriculum_engine.session_state import load_markers, write_markers

    profile_path = _env_path(args.profile, "CURRICULUM_PROFILE", "--profile")
    markers_path = _env_path(args.state, "CURRICULUM_MARKERS", "--state")
    schedule = load_schedule(_env_path(args.schedule, "CURRICULUM_SCHEDULE", "--schedule", required=False))
    markers = load_markers(markers_path)
    if markers is None or markers.effective_level is None:
        raise UsageError(f"{markers_path} has no marker region with an Effective Level")
    try:
        with exclusive_lock(profile_path):
            profile = load_profile(profile_path)
            decision = decide_boundary(profile)
            profile, level = apply_boundary(profile, markers.effective_level, decision)
            save_profile(profile_path, profile)
    except LockHeld:
        err.write("lock held; boundary not applied\n")
        return EXIT_ERROR
    write_markers(markers_path, dataclasses.replace(markers, effective_level=level))
    stage = persona_for(schedule, level.current, profile.module_id)
    out.write(f"boundary\t{decision.direction.value}\t{decision.module_average:.3f}\t"
              f"{decision.productive_share:.3f}\t{decision.unproductive_share:.3f}\t"
              f"{level.current.label}\t{stage.label}\n")
    return EXIT_OK


def cmd_onboard(args, out: TextIO, err: TextIO) -> int:
    from curriculum_engine.session_state import (
        OnboardingError,
        OnboardingStage,
        ResumeStatus,
        SessionMarkers,
        VersionCheck,
        advance_file,
        load_markers,
        load_state,
        resume_check,
        write_markers,
    )

    state_path = _env_path(args.state, "CURRICULUM_STATE", "--state")
    markers_path = _env_path(args.markers, "CURRICULUM_MARKERS", "--markers", required=False)
    try:
        if args.action == "status":
            state = load_state(state_path)
        elif args.action == "resume-check":
            state = load_state(state_path)
            status = resume_check(state, load_markers(markers_path) if markers_path else None)
            out.write(status.value + "\n")
            return EXIT_NEGATIVE if status is ResumeStatus.RESUME_CONFLICT else EXIT_OK
        else:
            stage = load_state(state_path).stage
            if stage is OnboardingStage.VERSION_CHECK:
                if not (args.curriculum_version and args.latest_version):
                    raise UsageError("version_check needs --curriculum-version and --latest-version")
                answer = VersionCheck(args.curriculum_version, args.latest_version)
            elif args.done:
                answer = True
            elif args.answer is not None:
                answer = args.answer
            else:
                raise UsageError(f"stage {stage.value} needs --answer or --done")
            state = advance_file(state_path, answer, markers_path)
            if (state.stage is OnboardingStage.COMPLETE and markers_path is not None
                    and load_markers(markers_path) is None):
                write_markers(markers_path, SessionMarkers.start(state.answers.project, state.answers.experience))
    except OnboardingError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_ERROR
    out.write(f"stage\t{state.stage.value}\n")
    for key, value in state.to_json()["answers"].items():
        if value is not None:
            out.write(f"answer\t{key}\t{value}\n")
    return EXIT_OK


def _module_doc(root: Path, project, number: int):
    from curriculum_engine.corpus import module_filename, parse_module, read_text_exact

    file = root / "projects" / project.value / module_filename(number)
    return parse_module(read_text_exact(file), project, number)


def cmd_track_step(args, out: TextIO, err: TextIO) -> int:
    from curriculum_engine.corpus import PathId, parse_step_label
    from curriculum_engine.session_state import SessionMarkers, StepError, load_markers, record_step, write_markers

    root = _env_path(args.root, "CURRICULUM_ROOT", "--root")
    markers_path = _env_path(args.markers, "CURRICULUM_MARKERS", "--markers")
    module, step = parse_step_label(args.step)
    markers = load_markers(markers_path)
    if markers is None:
        if not args.project:
            raise UsageError("no markers yet; pass --project to start tracking")
        markers = SessionMarkers.start(PathId(args.project), None)
    project = markers.project or (PathId(args.project) if args.project else None)
    if project is None:
        raise UsageError("markers carry no project; pass --project")
    try:
        doc = _module_doc(root, project, module)
        current = _module_doc(root, project, markers.current_module) if module != markers.current_module else None
        markers = record_step(markers, doc, step, current)
    except (StepError, OSError, IndexError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_NEGATIVE
    write_markers(markers_path, markers)
    out.write(f"Current Module: {markers.current_module}\nCurrent Step: {module}.{step}\n")
    return EXIT_OK


def cmd_pre_advance(args, out: TextIO, err: TextIO) -> int:
    from curriculum_engine.session_state import load_markers, pre_advance_check

    root = _env_path(args.root, "CURRICULUM_ROOT", "--root")
    markers_path = _env_path(args.markers, "CURRICULUM_MARKERS", "--markers")
    markers = load_markers(markers_path)
    if markers is None or markers.project is None:
        raise UsageError(f"{markers_path} has no marker region with a Project")
    doc = _module_doc(root, markers.project, markers.current_module)
    missing = pre_advance_check(markers, doc)
    for label in missing:
        out.write(f"missing\t{label}\n")
    return EXIT_NEGATIVE if missing else EXIT_OK


def cmd_sync(args, out: TextIO, err: TextIO) -> int:
    from curriculum_engine.corpus import load_corpus
    from curriculum_engine.sync import SyncError, load_payloads, parse_feature_map, run_sync

    root = _env_path(args.root, "CURRICULUM_ROOT", "--root")
    try:
        corpus = load_corpus(root)
        changelog = Path(args.changelog).read_text(encoding="utf-8")
        fmap = parse_feature_map(Path(args.feature_map).read_text(encoding="utf-8"))
        payloads = load_payloads(args.payloads)
        plan = run_sync(corpus, changelog, fmap, payloads, "all" if args.all else args.scope,
                        current_version=args.from_version, latest_version=args.to_version,
                        dry_run=args.dry_run)
    except (SyncError, OSError, ValueError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_ERROR
    out.write(plan.format_machine())
    return EXIT_NEGATIVE if plan.reverted else EXIT_OK


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    import argparse

    parser = argparse.ArgumentParser(prog="curriculum-engine", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="<command>")

    p = sub.add_parser("validate", help="check corpus and schedule invariants")
    p.add_argument("root", nargs="?")
    p.add_argument("--rules", help="comma-separated rule ids or groups")
    p.add_argument("--format", choices=("text", "machine"), default="text")
    p.add_argument("--schedule")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("observe", help="classify the latest learner turn (hook)")
    p.add_argument("--transcript")
    p.add_argument("--profile")
    p.add_argument("--lexicon")
    p.set_defaults(handler=cmd_observe)

    p = sub.add_parser("inject-context", help="print the session-start teaching note (hook)")
    p.add_argument("--profile")
    p.set_defaults(handler=cmd_inject_context)

    p = sub.add_parser("adapt-boundary", help="apply the module-boundary level decision")
    p.add_argument("--profile")
    p.add_argument("--state", help="step-marker file holding the Effective Level")
    p.add_argument("--schedule")
    p.set_defaults(handler=cmd_adapt_boundary)

    p = sub.add_parser("onboard", help="onboarding state machine")
    p.add_argument("action", choices=("status", "advance", "resume-check"))
    p.add_argument("--state")
    p.add_argument("--markers")
    p.add_argument("--answer")
    p.add_argument("--done", action="store_true", help="report a host step as finished")
    p.add_argument("--curriculum-version")
    p.add_argument("--latest-version")
    p.set_defaults(handler=cmd_onboard)

    p = sub.add_parser("track-step", help="record a completed step")
    p.add_argument("--root")
    p.add_argument("--markers")
    p.add_argument("--step", required=True, help="label such as 7.3")
    p.add_argument("--project")
    p.set_defaults(handler=cmd_track_step)

    p = sub.add_parser("pre-advance", help="list steps of the current module not yet completed")
    p.add_argument("--root")
    p.add_argument("--markers")
    p.set_defaults(handler=cmd_pre_advance)

    p = sub.add_parser("sync", help="apply curriculum update payloads with verify and revert")
    p.add_argument("--root")
    p.add_argument("--changelog", required=True)
    p.add_argument("--feature-map", required=True)
    p.add_argument("--payloads", required=True)
    scope = p.add_mutually_exclusive_group()
    scope.add_argument("--scope", help="single project id")
    scope.add_argument("--all", action="store_true")
    p.add_argument("--from-version")
    p.add_argument("--to-version")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(handler=cmd_sync)
    return parser


# Hooks run after every turn, so a plain observe call skips building the parser.
_HOOK_FLAGS = {"observe": ("transcript", "profile", "lexicon")}


def _hook_args(argv: Sequence[str]) -> SimpleNamespace | None:
    """Parse ``<hook> --flag value ...``; None sends the call through argparse."""
    if not argv or argv[0] not in _HOOK_FLAGS:
        return None
    names = _HOOK_FLAGS[argv[0]]
    values: dict[str, str | None] = dict.fromkeys(names)
    rest = list(argv[1:])
    while rest:
        flag = rest.pop(0)
        if "=" in flag:
            flag, value = flag.split("=", 1)
        elif rest:
            value = rest.pop(0)
        else:
            return None
        name = flag[2:] if flag.startswith("--") else ""
        if name not in values or value.startswith("-"):
            return None
        values[name] = value
    return SimpleNamespace(command=argv[0], handler=HOOK_HANDLERS[argv[0]], **values)


def run(argv: Sequence[str], out: TextIO, err: TextIO) -> int:
    args = _hook_args(argv)
    if args is not None:
        return args.handler(args, out, err)
    parser = build_parser()
    try:
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    handler: Callable | None = getattr(args, "handler", None)
    if handler is None:
        err.write(parser.format_usage())
        return EXIT_ERROR
    try:
        return handler(args, out, err)
    except UsageError as exc:
        err.write(f"usage error: {exc}\n")
        return EXIT_ERROR
    except Exception as exc:
        err.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_ERROR


def dispatch(argv: Sequence[str]) -> CommandResult:
    out, err = io.StringIO(), io.StringIO()
    code = run(argv, out, err)
    return CommandResult(code, out.getvalue(), err.getvalue())


def main(argv: Sequence[str] | None = None) -> int:
    return run(sys.argv[1:] if argv is None else argv, sys.stdout, sys.stderr)


if __name__ == "__main__":
    raise SystemExit(main())
