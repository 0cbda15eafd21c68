from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st
from schedule_table import reference_stage

from curriculum_engine.persona import (
    DEFAULT_SCHEDULE,
    Direction,
    EffectiveLevel,
    ExperienceLevel,
    ScheduleError,
    Stage,
    format_schedule,
    load_schedule,
    parse_schedule,
    persona_for,
    shift_level,
)


@pytest.mark.parametrize("level", list(ExperienceLevel))
@pytest.mark.parametrize("module", range(1, 11))
def test_schedule_matches_reference_table(level, module):
    assert persona_for(DEFAULT_SCHEDULE, level, module).label == reference_stage(level.label, module)


@pytest.mark.parametrize("level, module, stage", [
    (ExperienceLevel.INTERMEDIATE, 7, Stage.PEER),
    (ExperienceLevel.BEGINNER, 4, Stage.GUIDE),
    (ExperienceLevel.ADVANCED, 1, Stage.GUIDE),
])
def test_persona_examples(level, module, stage):
    assert persona_for(DEFAULT_SCHEDULE, level, module) is stage


@pytest.mark.parametrize("module", [0, 11, -3])
def test_persona_for_rejects_out_of_range(module):
    with pytest.raises(ValueError):
        persona_for(DEFAULT_SCHEDULE, ExperienceLevel.BEGINNER, module)


@pytest.mark.parametrize("level", list(ExperienceLevel))
def test_stage_monotone_in_module(level):
    stages = [persona_for(DEFAULT_SCHEDULE, level, m) for m in range(1, 11)]
    assert stages == sorted(stages)


def test_stage_counts_per_level():
    def counts(level):
        stages = [persona_for(DEFAULT_SCHEDULE, level, m) for m in range(1, 11)]
        return tuple(stages.count(s) for s in Stage)

    assert counts(ExperienceLevel.BEGINNER) == (4, 3, 2, 1)
    assert counts(ExperienceLevel.INTERMEDIATE) == (3, 3, 3, 1)
    assert counts(ExperienceLevel.ADVANCED) == (1, 3, 5, 1)


def test_shift_examples():
    b = EffectiveLevel.start(ExperienceLevel.BEGINNER)
    assert shift_level(b, Direction.UP) == EffectiveLevel(ExperienceLevel.BEGINNER, ExperienceLevel.INTERMEDIATE)
    a = EffectiveLevel.start(ExperienceLevel.ADVANCED)
    assert shift_level(a, "up") == a
    i = EffectiveLevel(ExperienceLevel.BEGINNER, ExperienceLevel.INTERMEDIATE)
    assert shift_level(i, "hold") == i
    assert shift_level(b, "down") == b


levels = st.sampled_from(list(ExperienceLevel))


@given(levels, levels)
def test_up_then_down(declared, current):
    x = EffectiveLevel(declared, current)
    back = shift_level(shift_level(x, "up"), "down")
    assert back.declared == declared
    if current < ExperienceLevel.ADVANCED:
        assert back == x
    else:
        # up was clamped, so down lands one notch lower
        assert back.current == ExperienceLevel.INTERMEDIATE


@given(levels, levels, st.lists(st.sampled_from(list(Direction)), max_size=20))
def test_shift_never_touches_declared_and_moves_one_notch(declared, current, moves):
    x = EffectiveLevel(declared, current)
    for d in moves:
        y = shift_level(x, d)
        assert y.declared == declared
        assert abs(y.current - x.current) <= 1
        x = y


def test_schedule_file_round_trip(tmp_path):
    text = format_schedule(DEFAULT_SCHEDULE)
    assert "beginner = Guide:1-4, Collaborator:5-7, Peer:8-9, Launcher:10" in text
    assert parse_schedule(text) == DEFAULT_SCHEDULE
    f = tmp_path / "schedule.txt"
    f.write_text("# custom\n" + text)
    assert load_schedule(f) == DEFAULT_SCHEDULE


def test_schedule_file_is_validated_on_load(tmp_path):
    f = tmp_path / "bad.txt"
    f.write_text(format_schedule(DEFAULT_SCHEDULE).replace("Collaborator:5-7", "Collaborator:6-7"))
    with pytest.raises(ScheduleError, match="module 5"):
        load_schedule(f)


@pytest.mark.parametrize("text", [
    "novice = Guide:1-10",
    "beginner Guide:1-10",
    "beginner = Mentor:1-10",
    "beginner = Guide:one",
    "beginner = Guide:1-4\nbeginner = Guide:1-4",
])
def test_schedule_syntax_errors(text):
    with pytest.raises(ScheduleError):
        parse_schedule(text)
