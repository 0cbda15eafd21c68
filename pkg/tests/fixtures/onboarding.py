"""Scripted learner answers and the expected stage walk for onboarding."""

from __future__ import annotations

import itertools

from curriculum_engine.corpus import PathId
from curriculum_engine.session_state import OnboardingStage, VersionCheck

S = OnboardingStage

# one representative per project class: needs a language / does not
PROJECT_CLASSES = {"language": PathId.FORGE, "no_language": PathId.CANVAS}
COMBOS = list(itertools.product(PROJECT_CLASSES, (False, True), (False, True)))  # class, gap, markers


def versions(gap: bool) -> VersionCheck:
    return VersionCheck("1.2.0", "1.3.0") if gap else VersionCheck("1.3.0", "1.3")


def answer_for(stage: OnboardingStage, project: PathId, gap: bool):
    return {
        S.VERSION_CHECK: versions(gap),
        S.PROJECT_SELECTION: project.value,
        S.CURRICULUM_UPGRADE: "1.3.0",
        S.OS_DETECTION: "linux",
        S.LANGUAGE_SELECTION: "python",
        S.EXPERIENCE_LEVEL: "beginner",
        S.PROGRESS_RESUME: "resume",
    }.get(stage, True)


def expected_walk(project: PathId, gap: bool, markers: bool) -> list[OnboardingStage]:
    """Stages shown to the learner, written out longhand."""
    walk = [S.VERSION_CHECK, S.PROJECT_SELECTION]
    if gap:
        walk.append(S.CURRICULUM_UPGRADE)
    walk.append(S.OS_DETECTION)
    if project not in (PathId.CANVAS, PathId.BYOP):
        walk.append(S.LANGUAGE_SELECTION)
    walk.append(S.EXPERIENCE_LEVEL)
    if markers:
        walk.append(S.PROGRESS_RESUME)
    walk += [S.ENV_VERIFICATION, S.SCAFFOLDING, S.MODULE1_DELIVERY, S.COMPLETE]
    return walk
