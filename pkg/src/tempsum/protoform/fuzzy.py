"""Personalized summarizer sets and the fixed quantifier lexicon."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

SUMMARIZER_LABELS = ("low", "moderate", "high")
# weakest -> strongest
QUANTIFIER_LABELS = ("none of the", "some of the", "half of the", "most of the", "all of the")
QUANTIFIER_TRAPEZOIDS: dict[str, tuple[float, float, float, float]] = {
    "none of the": (0.0, 0.0, 0.05, 0.15),
    "some of the": (0.05, 0.2, 0.35, 0.5),
    "half of the": (0.35, 0.45, 0.55, 0.65),
    "most of the": (0.5, 0.7, 0.9, 0.97),
    "all of the": (0.9, 0.99, 1.0, 1.0),
}


class ProfileError(ValueError):
    pass


def trapezoid(x: float, a: float, b: float, c: float, d: float) -> float:
    if b <= x <= c:
        return 1.0
    if a < x < b:
        return (x - a) / (b - a)
    if c < x < d:
        return (d - x) / (d - c)
    return 0.0


@dataclass(frozen=True)
class FuzzySet:
    label: str
    a: float
    b: float
    c: float

    def __post_init__(self) -> None:
        if not self.a <= self.b <= self.c:
            raise ValueError(f"breakpoints out of order: {self.a}, {self.b}, {self.c}")

    def membership(self, x: float) -> float:
        a, b, c = self.a, self.b, self.c
        if x == b:
            return 1.0
        if a < x < b:
            return (x - a) / (b - a)
        if b < x < c:
            return (c - x) / (c - b)
        return 0.0


@dataclass(frozen=True)
class SummarizerProfile:
    """low/moderate/high triangles built from one user's logged history.

    The low peak sits at the observed minimum, the high peak at the maximum and
    the moderate peak halfway between the first and second tertiles. Adjacent
    sets cross at 0.5, so memberships of neighbours sum to one.
    """

    sets: tuple[FuzzySet, ...]
    lo: float
    hi: float

    @classmethod
    def from_history(cls, values: Sequence[float]) -> "SummarizerProfile":
        arr = np.asarray(values, dtype=float)
        if arr.size == 0:
            raise ProfileError("cannot build a summarizer profile from an empty history")
        lo, hi = float(arr.min()), float(arr.max())
        t1, t2 = np.quantile(arr, [1 / 3, 2 / 3])
        mid = float((t1 + t2) / 2)
        if not lo < mid < hi:
            # heavily tied histories put the tertiles on an endpoint; keep the sets a partition
            mid = (lo + hi) / 2
        return cls.from_peaks(lo, mid, hi)

    @classmethod
    def from_peaks(cls, lo: float, mid: float, hi: float) -> "SummarizerProfile":
        sets = (
            FuzzySet("low", lo, lo, mid),
            FuzzySet("moderate", lo, mid, hi),
            FuzzySet("high", mid, hi, hi),
        )
        return cls(sets, lo, hi)

    def memberships(self, value: float) -> dict[str, float]:
        if self.lo == self.hi:
            # a constant history has no spread to be low or high against
            return {s.label: float(s.label == "moderate") for s in self.sets}
        # values beyond the observed range saturate the outer sets
        x = min(max(float(value), self.lo), self.hi)
        return {s.label: s.membership(x) for s in self.sets}

    def label(self, value: float) -> str:
        return argmax_label(self.memberships(value))

    def labels(self, values: Sequence[float]) -> list[str]:
        return [self.label(v) for v in values]


def argmax_label(degrees: dict[str, float]) -> str:
    """Highest degree; ties go to the higher summarizer."""
    best = None
    for lab in SUMMARIZER_LABELS:
        if lab in degrees and (best is None or degrees[lab] >= degrees[best]):
            best = lab
    if best is None:
        raise ProfileError("no summarizer labels to choose from")
    return best


def summarizer_membership(value: float, profile: SummarizerProfile | None) -> dict[str, float]:
    if profile is None or not profile.sets:
        raise ProfileError("empty summarizer profile")
    return profile.memberships(value)


def quantifier_truth(proportion: float) -> tuple[str, float]:
    """Map a proportion to the best-fitting quantifier and its degree."""
    if not 0.0 <= proportion <= 1.0:
        raise ValueError(f"proportion must lie in [0, 1], got {proportion}")
    best, best_deg = QUANTIFIER_LABELS[0], -1.0
    for lab in QUANTIFIER_LABELS:
        deg = trapezoid(proportion, *QUANTIFIER_TRAPEZOIDS[lab])
        if deg >= best_deg:
            best, best_deg = lab, deg
    return best, best_deg


def quantifier_rank(label: str) -> int:
    return QUANTIFIER_LABELS.index(label)
