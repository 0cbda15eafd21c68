from __future__ import annotations

import importlib
import json
import subprocess
import sys

import pytest
from mutations import seed
from sync_data import CHANGELOG, FEATURE_MAP

from curriculum_engine.cli import COMMANDS, _hook_args, build_parser, dispatch
from curriculum_engine.engagement import Category, LearnerProfile, load_profile, save_profile, zero_counts
from curriculum_engine.fsio import exclusive_lock
from curriculum_engine.persona import ExperienceLevel, format_schedule
from curriculum_engine.session_state import SessionMarkers, load_markers, write_markers


def test_every_subcommand_is_registered_and_ops_exist():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    assert set(sub.choices) == set(COMMANDS)
    ops = [op for names in COMMANDS.values() for op in names]
    assert len(ops) == len(set(ops)), "an operation is exposed by two subcommands"
    modules = [importlib.import_module(f"curriculum_engine.{m}")
               for m in ("corpus", "validator", "persona", "engagement", "adaptation", "session_state", "sync")]
    for op in ops:
        assert any(callable(getattr(m, op, None)) for m in modules), op


def test_usage_errors_exit_2():
    assert dispatch([]).exit_code == 2
    assert dispatch(["nonsense"]).exit_code == 2
    assert dispatch(["--help"]).exit_code == 0
    assert dispatch(["pre-advance"]).exit_code == 2


# -- validate -------------------------------------------------------------------------------


def test_validate_clean_and_dirty(corpus_root):
    ok = dispatch(["validate", str(corpus_root)])
    assert ok.exit_code == 0 and ok.stdout_payload.startswith("OK")
    seed(corpus_root, ["h1_mismatch", "parity_break"])
    bad = dispatch(["validate", str(corpus_root), "--format", "machine"])
    assert bad.exit_code == 1
    rules = [ln.split("\t")[1] for ln in bad.stdout_payload.splitlines() if ln.startswith("violation")]
    assert sorted(rules) == ["h1_mismatch", "parity"]
    assert dispatch(["validate", str(corpus_root), "--format", "machine"]).stdout_payload == bad.stdout_payload
    only = dispatch(["validate", str(corpus_root), "--rules", "parity", "--format", "machine"])
    assert [ln.split("\t")[1] for ln in only.stdout_payload.splitlines() if ln.startswith("violation")] == ["parity"]


def test_validate_errors(tmp_path, corpus_root, monkeypatch):
    assert dispatch(["validate", str(tmp_path / "none")]).exit_code == 2
    assert dispatch(["validate", str(corpus_root), "--rules", "bogus"]).exit_code == 2
    monkeypatch.delenv("CURRICULUM_ROOT", raising=False)
    assert dispatch(["validate"]).exit_code == 2
    monkeypatch.setenv("CURRICULUM_ROOT", str(corpus_root))
    assert dispatch(["validate"]).exit_code == 0


def test_validate_with_schedule_file(corpus_root, tmp_path):
    from curriculum_engine.persona import DEFAULT_SCHEDULE

    f = tmp_path / "schedule.txt"
    f.write_text(format_schedule(DEFAULT_SCHEDULE).replace("Collaborator:5-7", "Collaborator:6-7"))
    r = dispatch(["validate", str(corpus_root), "--schedule", str(f), "--format", "machine"])
    assert r.exit_code == 1
    assert "\tcoverage_gap\t" in r.stdout_payload
    f.write_text("beginner = Guide:1-4, Mentor:5-7\n")
    r = dispatch(["validate", str(corpus_root), "--schedule", str(f)])
    assert r.exit_code == 2 and r.diagnostics.startswith("usage error:") and "Mentor" in r.diagnostics


# -- hooks ----------------------------------------------------------------------------------------


def transcript(tmp_path, text):
    t = tmp_path / "t.jsonl"
    t.write_text(json.dumps({"role": "assistant", "content": "x" * 600}) + "\n"
                 + json.dumps({"role": "user", "content": text}) + "\n")
    return t


def test_observe_is_silent_and_always_zero(tmp_path):
    t = transcript(tmp_path, "why does it break?")
    prof = tmp_path / "p.json"
    r = dispatch(["observe", "--transcript", str(t), "--profile", str(prof)])
    assert (r.exit_code, r.stdout_payload, r.diagnostics) == (0, "", "")
    assert load_profile(prof).lifetime_counts[Category.CONCEPT_QUESTION] == 1

    with exclusive_lock(prof):
        r = dispatch(["observe", "--transcript", str(t), "--profile", str(prof)])
    assert (r.exit_code, r.stdout_payload, r.diagnostics) == (0, "", "skipped: lock held\n")
    assert load_profile(prof).lifetime_total == 1

    for argv in (["observe"], ["observe", "--transcript", str(tmp_path / "nope"), "--profile", str(prof)],
                 ["observe", "--transcript", str(t), "--profile", str(prof), "--lexicon", str(tmp_path / "x")]):
        r = dispatch(argv)
        assert r.exit_code == 0 and r.stdout_payload == "" and r.diagnostics.startswith("skipped")
    assert load_profile(prof).lifetime_total == 1


@pytest.mark.parametrize("argv, expected", [
    (["observe", "--transcript", "t", "--profile", "p"], {"transcript": "t", "profile": "p", "lexicon": None}),
    (["observe", "--profile=p", "--lexicon", "l"], {"transcript": None, "profile": "p", "lexicon": "l"}),
    (["observe", "--profile"], None),
    (["observe", "--bogus", "x"], None),
    (["observe", "--profile", "--transcript"], None),
    (["observe", "-h"], None),
    (["validate", "x"], None),
])
def test_hook_fast_path_agrees_with_parser(argv, expected):
    fast = _hook_args(argv)
    if expected is None:
        assert fast is None
        return
    slow = build_parser().parse_args(argv)
    assert {k: getattr(fast, k) for k in expected} == expected
    assert {k: getattr(slow, k) for k in expected} == expected
    assert fast.handler is slow.handler


def test_inject_context(tmp_path):
    prof = tmp_path / "p.json"
    assert dispatch(["inject-context", "--profile", str(prof)]).stdout_payload == ""
    counts = zero_counts() | {Category.ANSWER_SEEKING: 6}
    save_profile(prof, LearnerProfile(lifetime_counts=counts, struggle_streak=True))
    r = dispatch(["inject-context", "--profile", str(prof)])
    assert r.exit_code == 0
    assert "Offer more scaffolding NOW" in r.stdout_payload
    prof.write_text("garbage")
    r = dispatch(["inject-context", "--profile", str(prof)])
    assert r.exit_code == 0 and r.stdout_payload == "" and r.diagnostics


def test_adapt_boundary(tmp_path):
    prof, markers = tmp_path / "p.json", tmp_path / "CLAUDE.local.md"
    markers.write_text("# notes\n")
    write_markers(markers, SessionMarkers.start(None, ExperienceLevel.BEGINNER))
    counts = zero_counts() | {Category.CONCEPT_QUESTION: 10}
    save_profile(prof, LearnerProfile(module_id=3, module_counts=counts, module_quality_sum=50, lifetime_counts=counts))
    r = dispatch(["adapt-boundary", "--profile", str(prof), "--state", str(markers)])
    assert r.exit_code == 0
    assert r.stdout_payload == "boundary\tup\t5.000\t1.000\t0.000\tintermediate\tCollaborator\n"
    assert load_markers(markers).effective_level.current is ExperienceLevel.INTERMEDIATE
    assert load_profile(prof).module_total == 0 and load_profile(prof).module_id == 4
    again = dispatch(["adapt-boundary", "--profile", str(prof), "--state", str(markers)])
    assert again.stdout_payload.split("\t")[1] == "hold"
    assert markers.read_text().startswith("# notes\n")


def test_adapt_boundary_needs_level(tmp_path):
    markers = tmp_path / "m.md"
    markers.write_text("nothing\n")
    assert dispatch(["adapt-boundary", "--profile", str(tmp_path / "p.json"), "--state", str(markers)]).exit_code == 2


# -- onboarding and steps ---------------------------------------------------------------------------


def test_onboard_walk(tmp_path):
    state, markers = str(tmp_path / "s.json"), str(tmp_path / "CLAUDE.local.md")
    base = ["onboard", "advance", "--state", state, "--markers", markers]
    steps = [["--curriculum-version", "2.25.0", "--latest-version", "2.25.0"],
             ["--answer", "canvas"], ["--answer", "macos"], ["--answer", "advanced"],
             ["--done"], ["--done"], ["--done"]]
    stages = []
    for extra in steps:
        r = dispatch(base + extra)
        assert r.exit_code == 0, r.diagnostics
        stages.append(r.stdout_payload.splitlines()[0].split("\t")[1])
    assert stages == ["project_selection", "os_detection", "experience_level", "env_verification",
                      "scaffolding", "module1_delivery", "complete"]
    m = load_markers(markers)
    assert m.project.value == "canvas" and m.effective_level.current is ExperienceLevel.ADVANCED
    status = dispatch(["onboard", "status", "--state", state])
    assert "answer\tproject\tcanvas" in status.stdout_payload
    assert dispatch(["onboard", "resume-check", "--state", state, "--markers", markers]).stdout_payload == "resume_valid\n"
    assert dispatch(base + ["--done"]).exit_code == 2  # already complete


def test_onboard_bad_input(tmp_path):
    state = str(tmp_path / "s.json")
    assert dispatch(["onboard", "advance", "--state", state]).exit_code == 2
    dispatch(["onboard", "advance", "--state", state, "--curriculum-version", "1.0", "--latest-version", "1.0"])
    r = dispatch(["onboard", "advance", "--state", state, "--answer", "gardening"])
    assert r.exit_code == 2 and "error" in r.diagnostics
    assert "project_selection" in dispatch(["onboard", "status", "--state", state]).stdout_payload


def test_resume_conflict_exit(tmp_path):
    state, markers = tmp_path / "s.json", tmp_path / "m.md"
    write_markers(markers, SessionMarkers.start(None, ExperienceLevel.BEGINNER))
    for extra in (["--curriculum-version", "1", "--latest-version", "1"], ["--answer", "forge"],
                  ["--answer", "linux"], ["--answer", "go"], ["--answer", "advanced"]):
        dispatch(["onboard", "advance", "--state", str(state), "--markers", str(markers)] + extra)
    r = dispatch(["onboard", "resume-check", "--state", str(state), "--markers", str(markers)])
    assert (r.exit_code, r.stdout_payload) == (1, "resume_conflict\n")


def test_track_step_and_pre_advance(golden_root, tmp_path):
    markers = tmp_path / "m.md"
    root = str(golden_root)
    r = dispatch(["track-step", "--root", root, "--markers", str(markers), "--step", "1.1", "--project", "forge"])
    assert r.exit_code == 0
    pre = dispatch(["pre-advance", "--root", root, "--markers", str(markers)])
    assert pre.exit_code == 1
    missing = [ln.split("\t")[1] for ln in pre.stdout_payload.splitlines()]
    assert missing[0] == "1.2"
    blocked = dispatch(["track-step", "--root", root, "--markers", str(markers), "--step", "2.1"])
    assert blocked.exit_code == 1 and "1.2" in blocked.diagnostics
    for label in missing:
        assert dispatch(["track-step", "--root", root, "--markers", str(markers), "--step", label]).exit_code == 0
    assert dispatch(["pre-advance", "--root", root, "--markers", str(markers)]).exit_code == 0
    assert dispatch(["track-step", "--root", root, "--markers", str(markers), "--step", "2.1"]).exit_code == 0
    assert load_markers(markers).current_step == (2, 1)
    assert dispatch(["track-step", "--root", root, "--markers", str(markers), "--step", "4.1"]).exit_code == 1


# -- sync ---------------------------------------------------------------------------------------------


@pytest.fixture
def sync_inputs(tmp_path):
    (tmp_path / "CHANGELOG.md").write_text(CHANGELOG)
    (tmp_path / "features.txt").write_text(FEATURE_MAP)
    pay = tmp_path / "payloads"
    pay.mkdir()
    (pay / "canvas-05.md").write_text("## Rewrite tool input\n\nUse updatedInput.\n")
    (pay / "forge-05.md").write_text("## Rewrite tool input\n\nUse updatedInput.\n")
    return ["--changelog", str(tmp_path / "CHANGELOG.md"), "--feature-map", str(tmp_path / "features.txt"),
            "--payloads", str(pay)]


def test_sync_cli(corpus_root, sync_inputs):
    before = (corpus_root / "projects/forge/05-hooks.md").read_bytes()
    dry = dispatch(["sync", "--root", str(corpus_root), "--all", "--dry-run"] + sync_inputs)
    assert dry.exit_code == 0 and "dry-run" in dry.stdout_payload.splitlines()[0]
    assert (corpus_root / "projects/forge/05-hooks.md").read_bytes() == before
    r = dispatch(["sync", "--root", str(corpus_root), "--scope", "canvas",
                  "--from-version", "2.12.0", "--to-version", "2.25.0"] + sync_inputs)
    assert r.exit_code == 0
    assert "file\tprojects/canvas/05-hooks.md\tupdated\t-" in r.stdout_payload.splitlines()
    assert (corpus_root / "projects/forge/05-hooks.md").read_bytes() == before
    assert dispatch(["validate", str(corpus_root)]).exit_code == 0


def test_sync_cli_reverted_exit_1(corpus_root, sync_inputs, tmp_path):
    (tmp_path / "payloads" / "canvas-05.md").write_text("## Bad\n\n**5.9 Rogue**\n")
    r = dispatch(["sync", "--root", str(corpus_root), "--scope", "canvas"] + sync_inputs)
    assert r.exit_code == 1
    assert "\treverted\t" in r.stdout_payload
    bad_map = tmp_path / "features.txt"
    bad_map.write_text("hook | 12 |\n")
    assert dispatch(["sync", "--root", str(corpus_root), "--all"] + sync_inputs).exit_code == 2


def test_module_entry_point(golden_root):
    proc = subprocess.run([sys.executable, "-m", "curriculum_engine", "validate", str(golden_root)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("OK")
