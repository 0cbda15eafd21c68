"""Session-start teaching notes and module-boundary level moves.

Two clocks drive scaffolding. Streak flags surface in the next teaching note
(fast, mid-module). The effective level moves only through ``apply_boundary``,
at most one notch per module boundary (slow).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

from curriculum_engine.engagement import (
    PRODUCTIVE,
    UNPRODUCTIVE,
    Category,
    LearnerProfile,
    Trend,
    zero_counts,
)
from curriculum_engine.persona import MODULE_COUNT, Direction, EffectiveLevel, shift_level

MIN_NON_NEUTRAL = 5
ENCOURAGE_AT = Fraction(7, 10)
REDIRECT_AT = Fraction(2, 5)

UP_AVERAGE = Fraction(19, 5)  # 3.8
UP_SHARE = Fraction(3, 5)  # strictly above 60%
DOWN_AVERAGE = Fraction(2)
DOWN_SHARE = Fraction(1, 2)  # strictly above 50%

STRUGGLE_DIRECTIVE = "Offer more scaffolding NOW"
FLOW_DIRECTIVE = "Student is in flow. Match with deeper content."


class Tier(str, enum.Enum):
    ENCOURAGE = "encourage"
    REDIRECT = "redirect"
    STRUCTURE = "structure"


class StreakAlert(str, enum.Enum):
    STRUGGLE = "struggle"
    FLOW = "flow"


@dataclass(frozen=True)
class NoteTemplates:
    header: str = "[learner context] Engagement trend: {trend}. Dominant pattern: {pattern}."
    tiers: tuple[tuple[Tier, str], ...] = (
        (Tier.ENCOURAGE, "Productive ratio {ratio:.2f}: encourage curiosity and offer deeper exploration."),
        (Tier.REDIRECT, "Productive ratio {ratio:.2f}: redirect answer-seeking with guiding questions."),
        (Tier.STRUCTURE, "Productive ratio {ratio:.2f}: provide additional structure and step-by-step scaffolding."),
    )
    struggle: str = "PRIORITY: " + STRUGGLE_DIRECTIVE + "."
    flow: str = "PRIORITY: " + FLOW_DIRECTIVE

    def tier_text(self, tier: Tier) -> str:
        return dict(self.tiers)[tier]


@dataclass(frozen=True)
class TeachingNote:
    trend: Trend
    dominant_pattern: Category
    tier: Tier
    ratio: Fraction
    streak_alert: StreakAlert | None
    rendered: str


def tier_for(ratio: Fraction | float) -> Tier:
    if ratio >= ENCOURAGE_AT:
        return Tier.ENCOURAGE
    if ratio >= REDIRECT_AT:
        return Tier.REDIRECT
    return Tier.STRUCTURE


def dominant_pattern(counts) -> Category | None:
    """Most frequent non-neutral category; ties go to the higher score."""
    order = list(Category)
    candidates = [c for c in Category if c is not Category.NEUTRAL and counts.get(c, 0) > 0]
    if not candidates:
        return None
    return max(candidates, key=lambda c: (counts[c], c.score, -order.index(c)))


def make_note(profile: LearnerProfile, templates: NoteTemplates | None = None) -> TeachingNote | None:
    """Build the hidden session-start note, or ``None`` with too little data."""
    templates = templates or NoteTemplates()
    counts = profile.lifetime_counts
    productive = sum(counts.get(c, 0) for c in PRODUCTIVE)
    unproductive = sum(counts.get(c, 0) for c in UNPRODUCTIVE)
    if productive + unproductive < MIN_NON_NEUTRAL:
        return None
    ratio = Fraction(productive, productive + unproductive)
    tier = tier_for(ratio)
    pattern = dominant_pattern(counts)
    if profile.struggle_streak:
        alert = StreakAlert.STRUGGLE
    elif profile.engagement_streak:
        alert = StreakAlert.FLOW
    else:
        alert = None
    parts = [
        templates.header.format(trend=profile.trend.value, pattern=pattern.value, tier=tier.value),
        templates.tier_text(tier).format(ratio=float(ratio)),
    ]
    if alert is StreakAlert.STRUGGLE:
        parts.append(templates.struggle)
    elif alert is StreakAlert.FLOW:
        parts.append(templates.flow)
    rendered = "\n".join(parts)
    # The alert directives are fixed wording regardless of template overrides.
    if alert is StreakAlert.STRUGGLE and STRUGGLE_DIRECTIVE not in rendered:
        rendered += "\n" + STRUGGLE_DIRECTIVE
    if alert is StreakAlert.FLOW and FLOW_DIRECTIVE not in rendered:
        rendered += "\n" + FLOW_DIRECTIVE
    return TeachingNote(profile.trend, pattern, tier, ratio, alert, rendered)


@dataclass(frozen=True)
class BoundaryDecision:
    direction: Direction
    module_average: float
    productive_share: float
    unproductive_share: float


def decide_boundary(profile: LearnerProfile) -> BoundaryDecision:
    """Decide the level move from this module's counters.

    The comparisons run on exact fractions so thresholds such as 3.8 and 60%
    are not blurred by float rounding.
    """
    counts = profile.module_counts
    total = sum(counts.values())
    productive = sum(counts.get(c, 0) for c in PRODUCTIVE)
    unproductive = sum(counts.get(c, 0) for c in UNPRODUCTIVE)
    non_neutral = productive + unproductive
    if total == 0 or non_neutral == 0:
        average = Fraction(profile.module_quality_sum) / total if total else Fraction(0)
        return BoundaryDecision(Direction.HOLD, float(average), 0.0, 0.0)
    average = Fraction(profile.module_quality_sum) / total
    p_share = Fraction(productive, non_neutral)
    u_share = Fraction(unproductive, non_neutral)
    if average >= UP_AVERAGE and p_share > UP_SHARE:
        direction = Direction.UP
    elif average <= DOWN_AVERAGE and u_share > DOWN_SHARE:
        direction = Direction.DOWN
    else:
        direction = Direction.HOLD
    return BoundaryDecision(direction, float(average), float(p_share), float(u_share))


def apply_boundary(profile: LearnerProfile, level: EffectiveLevel,
                   decision: BoundaryDecision | None = None) -> tuple[LearnerProfile, EffectiveLevel]:
    """Shift the level by the decision and reset the per-module counters.

    Lifetime counts, the category window and streak flags carry over.
    """
    decision = decision or decide_boundary(profile)
    new_level = shift_level(level, decision.direction)
    new_profile = profile._replace(
        module_counts=zero_counts(),
        module_quality_sum=0,
        module_id=min(profile.module_id + 1, MODULE_COUNT),
    )
    return new_profile, new_level
