"""Rule-based generation of (summary, template) pairs from a daily series."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from datetime import date
from typing import Sequence

import numpy as np

from ..ingest import TimeSeries
from .catalog import (
    ATTRIBUTE_SURFACE,
    COMPARISON_DEAD_BAND,
    DAY_IF_THEN_PARAMS,
    GOAL_BAND,
    IF_THEN_PARAMS,
    SIMILAR_WEEKS_K,
    SUMMARY_TYPES,
    WEEKDAY_NAMES,
    slot_kind,
)
from .fuzzy import (
    SUMMARIZER_LABELS,
    SummarizerProfile,
    argmax_label,
    quantifier_rank,
    quantifier_truth,
)
from .mining import InsufficientHistoryError, find_similar_weeks, mine_if_then_rules, slope_change_ratio


class ConsistencyError(ValueError):
    pass


@dataclass(frozen=True)
class SlotFill:
    kind: str
    surface: tuple[str, ...]


@dataclass
class SummaryInstance:
    """A realized summary. ``window`` and ``segments`` are 1-based inclusive."""

    summary_type: str
    summary_tokens: list[str]
    template_tokens: list[str]
    slot_fills: list[SlotFill]
    window: tuple[int, int]
    truth_degree: float
    segments: list[tuple[int, int]] = field(default_factory=list)
    protoform: str = "default"
    as_of: date | None = None

    def __post_init__(self) -> None:
        if not self.segments:
            self.segments = [self.window]

    @property
    def text(self) -> str:
        return detokenize(self.summary_tokens)

    def to_dict(self) -> dict:
        return {
            "summary_type": self.summary_type,
            "summary_tokens": list(self.summary_tokens),
            "template_tokens": list(self.template_tokens),
            "slot_fills": [{"kind": f.kind, "surface": list(f.surface)} for f in self.slot_fills],
            "window": list(self.window),
            "segments": [list(s) for s in self.segments],
            "truth_degree": self.truth_degree,
            "protoform": self.protoform,
            "as_of": None if self.as_of is None else self.as_of.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SummaryInstance":
        return cls(
            summary_type=d["summary_type"],
            summary_tokens=list(d["summary_tokens"]),
            template_tokens=list(d["template_tokens"]),
            slot_fills=[SlotFill(f["kind"], tuple(f["surface"])) for f in d["slot_fills"]],
            window=tuple(d["window"]),
            truth_degree=float(d["truth_degree"]),
            segments=[tuple(s) for s in d["segments"]],
            protoform=d.get("protoform", "default"),
            as_of=None if d.get("as_of") is None else date.fromisoformat(d["as_of"]),
        )


def detokenize(tokens: Sequence[str]) -> str:
    out = ""
    for tok in tokens:
        if out and tok not in {",", "."}:
            out += " "
        out += tok
    return out


def realize(protoform: Sequence[str], fills: Sequence[SlotFill]) -> tuple[list[str], list[str]]:
    """Fill each ``{K}`` blank in order; returns (summary_tokens, template_tokens)."""
    words: list[str] = []
    template: list[str] = []
    it = iter(fills)
    for tok in protoform:
        kind = slot_kind(tok)
        if kind is None:
            words.append(tok)
            template.append(tok)
            continue
        fill = next(it, None)
        if fill is None or fill.kind != kind:
            raise ConsistencyError(f"blank {tok} has no matching fill")
        words.extend(fill.surface)
        template.extend([kind] * len(fill.surface))
    if next(it, None) is not None:
        raise ConsistencyError("more fills than blanks")
    return words, template


def to_template_tokens(summary_tokens: Sequence[str], slot_fills: Sequence[SlotFill]) -> list[str]:
    """Replace each fill's words, searched left to right, by its placeholder."""
    out = list(summary_tokens)
    pos = 0
    for fill in slot_fills:
        n = len(fill.surface)
        for start in range(pos, len(out) - n + 1):
            if tuple(summary_tokens[start : start + n]) == fill.surface:
                out[start : start + n] = [fill.kind] * n
                pos = start + n
                break
        else:
            raise ConsistencyError(
                f"slot {fill.kind}={' '.join(fill.surface)!r} not found after position {pos}"
            )
    return out


def templatize(instance: SummaryInstance) -> list[str]:
    return to_template_tokens(instance.summary_tokens, instance.slot_fills)


def fill_template(template_tokens: Sequence[str], slot_fills: Sequence[SlotFill]) -> list[str]:
    """Inverse of templatize: each run of placeholders consumes one fill."""
    out: list[str] = []
    fills = list(slot_fills)
    i = 0
    k = 0
    while i < len(template_tokens):
        tok = template_tokens[i]
        if k < len(fills) and tok == fills[k].kind:
            n = len(fills[k].surface)
            if list(template_tokens[i : i + n]) != [tok] * n:
                raise ConsistencyError(f"placeholder run for {tok} shorter than its fill")
            out.extend(fills[k].surface)
            i += n
            k += 1
        else:
            out.append(tok)
            i += 1
    if k != len(fills):
        raise ConsistencyError("unused slot fills")
    return out


# ---------------------------------------------------------------- rules


@dataclass
class _Ctx:
    series: TimeSeries
    values: np.ndarray
    profile: SummarizerProfile
    stop: int
    as_of: date
    variant: str | None = None

    def fill(self, kind: str, text: str) -> SlotFill:
        return SlotFill(kind, tuple(text.split()))

    @property
    def attribute(self) -> SlotFill:
        return self.fill("A", ATTRIBUTE_SURFACE.get(self.series.attribute, self.series.attribute.replace("_", " ")))

    def last(self, n: int) -> tuple[int, int]:
        return (self.stop - n, self.stop)


def _instance(ctx: _Ctx, stype: str, fills: list[SlotFill], span: tuple[int, int], truth: float,
              protoform: str = "default", repeat: int = 0,
              segments: list[tuple[int, int]] | None = None) -> SummaryInstance:
    spec = SUMMARY_TYPES[stype]
    proto = list(spec.protoforms[protoform])
    if repeat:
        # antecedent repeat groups go right after the first summarizer blank
        at = proto.index("{S}") + 1
        proto[at:at] = list(spec.repeat_group) * repeat
    words, template = realize(proto, fills)
    segs = segments or [span]
    one_based = [(s + 1, e) for s, e in segs]
    return SummaryInstance(
        summary_type=stype,
        summary_tokens=words,
        template_tokens=template,
        slot_fills=list(fills),
        window=(min(s for s, _ in one_based), max(e for _, e in one_based)),
        truth_degree=float(truth),
        segments=one_based,
        protoform=protoform,
        as_of=ctx.as_of,
    )


def _week_label(ctx: _Ctx, span: tuple[int, int]) -> tuple[str, float]:
    mean = float(ctx.values[span[0] : span[1]].mean())
    deg = ctx.profile.memberships(mean)
    lab = argmax_label(deg)
    return lab, deg[lab]


def _modal(labels: Sequence[str]) -> tuple[str, float]:
    counts = Counter(labels)
    best = max(SUMMARIZER_LABELS, key=lambda lab: (counts[lab], SUMMARIZER_LABELS.index(lab)))
    return best, counts[best] / len(labels)


def _goal_met(ctx: _Ctx, span: tuple[int, int]) -> np.ndarray:
    v = ctx.values[span[0] : span[1]]
    g = np.asarray(ctx.series.goal_values[span[0] : span[1]], dtype=float)
    return np.abs(v - g) <= GOAL_BAND * g


def _standard_evaluation_tw(ctx: _Ctx) -> list[SummaryInstance]:
    span = ctx.last(7)
    lab, deg = _week_label(ctx, span)
    variant = ctx.variant
    if variant is None:
        # a Monday as_of closes a complete Monday-Sunday week
        variant = "full_week" if ctx.as_of.weekday() == 0 else "default"
    fills = [ctx.fill("TW", "week"), ctx.attribute, ctx.fill("S", lab)]
    return [_instance(ctx, "standard_evaluation_tw", fills, span, deg, protoform=variant)]


def _standard_evaluation_stw(ctx: _Ctx) -> list[SummaryInstance]:
    span = ctx.last(7)
    lab, prop = _modal(ctx.profile.labels(ctx.values[span[0] : span[1]]))
    q, qdeg = quantifier_truth(prop)
    fills = [ctx.fill("Q", q), ctx.fill("sTW", "days"), ctx.fill("TW", "week"), ctx.attribute,
             ctx.fill("S", lab)]
    return [_instance(ctx, "standard_evaluation_stw", fills, span, qdeg)]


def _day_based_pattern(ctx: _Ctx) -> list[SummaryInstance]:
    span = ctx.last(28)
    labels = ctx.profile.labels(ctx.values[span[0] : span[1]])
    best = None
    # walk weekdays from the most recent day backwards so ties favour recency
    for back in range(7):
        offset = 27 - back
        day_labels = labels[offset % 7 :: 7]
        lab, prop = _modal(day_labels)
        q, qdeg = quantifier_truth(prop)
        if quantifier_rank(q) < quantifier_rank("most of the"):
            continue
        score = (quantifier_rank(q), qdeg)
        if best is None or score > best[0]:
            weekday = ctx.series.date_at(span[0] + offset).weekday()
            best = (score, q, qdeg, lab, weekday)
    if best is None:
        return []
    _, q, qdeg, lab, weekday = best
    fills = [ctx.fill("Q", q), ctx.fill("sTW", "days"), ctx.fill("D", WEEKDAY_NAMES[weekday]),
             ctx.attribute, ctx.fill("S", lab)]
    return [_instance(ctx, "day_based_pattern", fills, span, qdeg)]


def _goal_evaluation_core(ctx: _Ctx) -> tuple[tuple[int, int], str, float, np.ndarray]:
    span = ctx.last(7)
    met = _goal_met(ctx, span)
    q, qdeg = quantifier_truth(float(met.mean()))
    return span, q, qdeg, met


def _goal_evaluation(ctx: _Ctx) -> list[SummaryInstance]:
    span, q, qdeg, _ = _goal_evaluation_core(ctx)
    fills = [ctx.fill("Q", q), ctx.fill("sTW", "days"), ctx.fill("TW", "week"),
             ctx.fill("G", "calorie goal")]
    return [_instance(ctx, "goal_evaluation", fills, span, qdeg)]


def _goal_assistance(ctx: _Ctx) -> list[SummaryInstance]:
    span, q, qdeg, _ = _goal_evaluation_core(ctx)
    if quantifier_rank(q) > quantifier_rank("some of the"):
        return []
    v = ctx.values[span[0] : span[1]]
    g = np.asarray(ctx.series.goal_values[span[0] : span[1]], dtype=float)
    direction = "decrease" if float(np.mean(v - g)) > 0 else "increase"
    fills = [ctx.fill("G", "calorie goal"), ctx.fill("S", direction), ctx.attribute]
    return [_instance(ctx, "goal_assistance", fills, span, qdeg)]


def _standard_trend(ctx: _Ctx) -> list[SummaryInstance]:
    span = ctx.last(7)
    ratio = slope_change_ratio(ctx.values[span[0] : span[1]])
    q, qdeg = quantifier_truth(ratio)
    fills = [ctx.fill("TW", "week"), ctx.attribute, ctx.fill("Q", q), ctx.fill("sTW", "days")]
    return [_instance(ctx, "standard_trend", fills, span, qdeg)]


def _if_then_pattern(ctx: _Ctx) -> list[SummaryInstance]:
    span = ctx.last(28)
    labels = ctx.profile.labels(ctx.values[span[0] : span[1]])
    rules = mine_if_then_rules(labels, **IF_THEN_PARAMS)
    if not rules:
        return []
    rule = rules[0]
    fills = [ctx.attribute] + [ctx.fill("S", lab) for lab in rule.antecedent] + [ctx.fill("S", rule.consequent)]
    return [_instance(ctx, "if_then_pattern", fills, span, rule.confidence,
                      repeat=len(rule.antecedent) - 1)]


def _day_if_then_pattern(ctx: _Ctx) -> list[SummaryInstance]:
    span = ctx.last(56)
    labels = ctx.profile.labels(ctx.values[span[0] : span[1]])
    weekdays = [ctx.series.date_at(i).weekday() for i in range(*span)]
    rules = mine_if_then_rules(labels, weekdays=weekdays, **DAY_IF_THEN_PARAMS)
    if not rules:
        return []
    rule = rules[0]
    fills = [ctx.attribute, ctx.fill("S", rule.antecedent[0]), ctx.fill("D", WEEKDAY_NAMES[rule.weekday]),
             ctx.fill("S", rule.consequent)]
    return [_instance(ctx, "day_if_then_pattern", fills, span, rule.confidence)]


def _compare(recent: float, previous: float, band: float) -> str:
    if previous == 0:
        return "about the same" if recent == 0 else "higher"
    rel = (recent - previous) / abs(previous)
    if rel > band:
        return "higher"
    if rel < -band:
        return "lower"
    return "about the same"


def _evaluation_comparison(ctx: _Ctx) -> list[SummaryInstance]:
    span = ctx.last(14)
    prev = float(ctx.values[span[0] : span[0] + 7].mean())
    recent = float(ctx.values[span[0] + 7 : span[1]].mean())
    lab = _compare(recent, prev, COMPARISON_DEAD_BAND)
    fills = [ctx.fill("TW", "week"), ctx.attribute, ctx.fill("TW", "week"), ctx.fill("S", lab)]
    return [_instance(ctx, "evaluation_comparison", fills, span, 1.0)]


def _goal_comparison(ctx: _Ctx) -> list[SummaryInstance]:
    span = ctx.last(14)
    met = _goal_met(ctx, span)
    prev, recent = int(met[:7].sum()), int(met[7:].sum())
    lab = "higher" if recent > prev else "lower" if recent < prev else "about the same"
    fills = [ctx.fill("TW", "week"), ctx.fill("G", "calorie goal"), ctx.fill("TW", "week"),
             ctx.fill("S", lab)]
    return [_instance(ctx, "goal_comparison", fills, span, 1.0)]


def _similar(ctx: _Ctx):
    return find_similar_weeks(ctx.values[: ctx.stop], ctx.stop, k=SIMILAR_WEEKS_K)


def _cluster_based_description(ctx: _Ctx) -> list[SummaryInstance]:
    sim = _similar(ctx)
    lab, deg = _week_label(ctx, sim.most_recent_similar)
    fills = [ctx.fill("TW", "week"), ctx.fill("TW", "week"), ctx.attribute, ctx.fill("S", lab)]
    return [_instance(ctx, "cluster_based_description", fills, sim.anchor_week, deg)]


def _cluster_based_pattern(ctx: _Ctx) -> list[SummaryInstance]:
    sim = _similar(ctx)
    labs = [_week_label(ctx, w)[0] for w in sim.successor_weeks]
    lab, share = _modal(labs)
    fills = [ctx.fill("TW", "week"), ctx.fill("TW", "week"), ctx.fill("TW", "week"), ctx.attribute,
             ctx.fill("S", lab)]
    return [_instance(ctx, "cluster_based_pattern", fills, sim.anchor_week, share)]


def _standard_pattern(ctx: _Ctx) -> list[SummaryInstance]:
    sim = _similar(ctx)
    week = sim.most_recent_similar
    after = (week[0] + 7, week[1] + 7)
    lab, deg = _week_label(ctx, after)
    fills = [ctx.fill("TW", "week"), ctx.fill("TW", "week"), ctx.fill("TW", "week"), ctx.attribute,
             ctx.fill("S", lab)]
    return [_instance(ctx, "standard_pattern", fills, sim.anchor_week, deg,
                      segments=[week, after, sim.anchor_week])]


_RULES = {
    "standard_evaluation_tw": _standard_evaluation_tw,
    "standard_evaluation_stw": _standard_evaluation_stw,
    "day_based_pattern": _day_based_pattern,
    "goal_evaluation": _goal_evaluation,
    "goal_assistance": _goal_assistance,
    "standard_trend": _standard_trend,
    "if_then_pattern": _if_then_pattern,
    "day_if_then_pattern": _day_if_then_pattern,
    "evaluation_comparison": _evaluation_comparison,
    "goal_comparison": _goal_comparison,
    "cluster_based_description": _cluster_based_description,
    "cluster_based_pattern": _cluster_based_pattern,
    "standard_pattern": _standard_pattern,
}


def build_profile(series: TimeSeries) -> SummarizerProfile:
    observed = series.observed()
    return SummarizerProfile.from_history(observed if observed.size else series.array())


def generate_summary(
    summary_type: str,
    series: TimeSeries,
    as_of: date,
    profile: SummarizerProfile | None = None,
    variant: str | None = None,
) -> list[SummaryInstance]:
    """Summaries of ``summary_type`` for the days strictly before ``as_of``.

    ``variant`` picks a protoform wording where the type has several; by
    default the wording follows the calendar. Raises InsufficientHistoryError
    when fewer days precede ``as_of`` than the type requires. Goal types return
    nothing for series without goals.
    """
    if summary_type not in SUMMARY_TYPES:
        raise KeyError(f"unknown summary type {summary_type!r}")
    spec = SUMMARY_TYPES[summary_type]
    stop = series.index_of(as_of)
    if stop > len(series):
        raise ValueError(f"as_of {as_of} is past the day after the series end ({series.end_date})")
    if stop < spec.min_history:
        raise InsufficientHistoryError(
            f"{summary_type} needs {spec.min_history} days before as_of, found {max(stop, 0)}"
        )
    if spec.needs_goal and series.goal_values is None:
        return []
    if variant is not None and variant not in spec.protoforms:
        variant = None if len(spec.protoforms) == 1 else variant
        if variant is not None:
            raise KeyError(f"{summary_type} has no protoform {variant!r}")
    ctx = _Ctx(series, series.array(), profile or build_profile(series), stop, as_of, variant)
    return _RULES[summary_type](ctx)
