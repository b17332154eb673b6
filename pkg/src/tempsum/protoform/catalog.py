"""Closed lexicons and the protoform catalog for the 13 summary types.

Protoforms are token lists where ``{K}`` marks a blank of placeholder kind K.
The catalog is exported as ``protoform_catalog.json`` so every stage shares
one versioned definition.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .fuzzy import QUANTIFIER_LABELS, QUANTIFIER_TRAPEZOIDS, SUMMARIZER_LABELS

CATALOG_VERSION = "1.0.0"

PLACEHOLDERS = ("Q", "sTW", "TW", "A", "S", "D", "G")
WEEKDAY_NAMES = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday")
COMPARISON_LABELS = ("lower", "about the same", "higher")
DIRECTION_LABELS = ("decrease", "increase")
ATTRIBUTE_SURFACE = {"calorie_intake": "calorie intake"}

LEXICONS: dict[str, tuple[str, ...]] = {
    "Q": QUANTIFIER_LABELS,
    "sTW": ("days",),
    "TW": ("week",),
    "A": tuple(ATTRIBUTE_SURFACE.values()),
    "S": SUMMARIZER_LABELS + COMPARISON_LABELS + DIRECTION_LABELS,
    "D": WEEKDAY_NAMES,
    "G": ("calorie goal",),
}

GOAL_BAND = 0.10
COMPARISON_DEAD_BAND = 0.05
IF_THEN_PARAMS = {"min_support": 5, "min_conf": 0.7, "max_k": 3}
DAY_IF_THEN_PARAMS = {"min_support": 5, "min_conf": 0.7, "max_k": 1}
SIMILAR_WEEKS_K = 3


def _t(text: str) -> tuple[str, ...]:
    return tuple(text.split())


@dataclass(frozen=True)
class SummaryTypeSpec:
    name: str
    title: str
    protoforms: dict[str, tuple[str, ...]]
    # days of history needed before as_of
    min_history: int
    # length of x_short (total over segments)
    short_len: int
    needs_goal: bool = False
    # extra antecedent group repeated for every antecedent level beyond the first
    repeat_group: tuple[str, ...] = ()


SUMMARY_TYPES: dict[str, SummaryTypeSpec] = {s.name: s for s in (
    SummaryTypeSpec(
        "standard_evaluation_tw", "Standard Evaluation (TW granularity)",
        {
            "default": _t("In the past {TW} , your {A} was {S} ."),
            "full_week": _t("In the past full {TW} , your {A} has been {S} ."),
        },
        min_history=7, short_len=7,
    ),
    SummaryTypeSpec(
        "standard_evaluation_stw", "Standard Evaluation (sTW granularity)",
        {"default": _t("On {Q} {sTW} in the past {TW} , your {A} was {S} .")},
        min_history=7, short_len=7,
    ),
    SummaryTypeSpec(
        "day_based_pattern", "Day-Based Pattern",
        {"default": _t("On {Q} {sTW} in the past four weeks that fell on a {D} , your {A} was {S} .")},
        min_history=28, short_len=28,
    ),
    SummaryTypeSpec(
        "goal_evaluation", "Goal Evaluation",
        {"default": _t("On {Q} {sTW} in the past {TW} , you met your {G} .")},
        min_history=7, short_len=7, needs_goal=True,
    ),
    SummaryTypeSpec(
        "goal_assistance", "Goal Assistance",
        {"default": _t("To better meet your {G} , you should {S} your {A} .")},
        min_history=7, short_len=7, needs_goal=True,
    ),
    SummaryTypeSpec(
        "standard_trend", "Standard Trend",
        {"default": _t("In the past {TW} , your {A} changed direction on {Q} {sTW} .")},
        min_history=7, short_len=7,
    ),
    SummaryTypeSpec(
        "if_then_pattern", "If-Then Pattern",
        {"default": _t("When your {A} is {S} , it tends to be {S} the next day .")},
        min_history=28, short_len=28, repeat_group=_t(", then {S}"),
    ),
    SummaryTypeSpec(
        "day_if_then_pattern", "Day If-Then Pattern",
        {"default": _t("When your {A} is {S} on a {D} , it tends to be {S} the next day .")},
        min_history=56, short_len=56,
    ),
    SummaryTypeSpec(
        "evaluation_comparison", "Evaluation Comparison",
        {"default": _t("Compared to the previous {TW} , your {A} in the past {TW} was {S} .")},
        min_history=14, short_len=14,
    ),
    SummaryTypeSpec(
        "goal_comparison", "Goal Comparison",
        {"default": _t("Compared to the previous {TW} , your adherence to your {G} in the past {TW} was {S} .")},
        min_history=14, short_len=14, needs_goal=True,
    ),
    SummaryTypeSpec(
        "cluster_based_description", "Cluster-Based Description",
        {"default": _t("In the most recent {TW} similar to the past {TW} , your {A} was {S} .")},
        min_history=21, short_len=7,
    ),
    SummaryTypeSpec(
        "cluster_based_pattern", "Cluster-Based Pattern",
        {"default": _t("In the {TW} after a {TW} similar to the past {TW} , your {A} tended to be {S} .")},
        min_history=21, short_len=7,
    ),
    SummaryTypeSpec(
        "standard_pattern", "Standard Pattern",
        {"default": _t("In the {TW} after the most recent {TW} similar to the past {TW} , your {A} was {S} .")},
        min_history=21, short_len=21,
    ),
)}

SIMPLE_TYPES = (
    "standard_evaluation_tw", "standard_evaluation_stw", "day_based_pattern", "if_then_pattern",
)


def slot_kind(token: str) -> str | None:
    if len(token) > 2 and token[0] == "{" and token[-1] == "}":
        kind = token[1:-1]
        if kind in PLACEHOLDERS:
            return kind
    return None


def literal_words() -> set[str]:
    words: set[str] = set()
    for spec in SUMMARY_TYPES.values():
        for proto in list(spec.protoforms.values()) + [spec.repeat_group]:
            words.update(t for t in proto if slot_kind(t) is None)
    return words


def placeholder_map() -> dict[str, str]:
    """Word -> placeholder for lexicon words that never occur as literals."""
    literals = literal_words()
    out: dict[str, str] = {}
    for kind, entries in LEXICONS.items():
        for entry in entries:
            for w in entry.split():
                if w not in literals:
                    out.setdefault(w, kind)
    return out


def catalog_document() -> dict:
    return {
        "version": CATALOG_VERSION,
        "placeholders": list(PLACEHOLDERS),
        "lexicons": {k: list(v) for k, v in LEXICONS.items()},
        "summarizer_sets": {
            "labels": list(SUMMARIZER_LABELS),
            "construction": "per-user triangles: low peak at min, moderate peak at mean of "
                            "1st/2nd tertiles, high peak at max; adjacent sets cross at 0.5",
        },
        "quantifier_trapezoids": {k: list(v) for k, v in QUANTIFIER_TRAPEZOIDS.items()},
        "parameters": {
            "goal_band": GOAL_BAND,
            "comparison_dead_band": COMPARISON_DEAD_BAND,
            "if_then": IF_THEN_PARAMS,
            "day_if_then": DAY_IF_THEN_PARAMS,
            "similar_weeks_k": SIMILAR_WEEKS_K,
            "as_of_stride_days": 7,
        },
        "summary_types": {
            name: {
                "title": s.title,
                "protoforms": {v: " ".join(t) for v, t in s.protoforms.items()},
                "repeat_group": " ".join(s.repeat_group),
                "min_history": s.min_history,
                "short_len": s.short_len,
                "needs_goal": s.needs_goal,
            }
            for name, s in SUMMARY_TYPES.items()
        },
    }


def catalog_json() -> str:
    return json.dumps(catalog_document(), sort_keys=True, separators=(",", ":"))


def catalog_hash() -> str:
    return hashlib.sha256(catalog_json().encode("utf-8")).hexdigest()


def write_catalog(path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(catalog_document(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_catalog(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != CATALOG_VERSION:
        raise ValueError(f"catalog version {doc.get('version')!r} != {CATALOG_VERSION!r}")
    return doc
