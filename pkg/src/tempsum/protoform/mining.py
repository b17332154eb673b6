"""Pattern-mining primitives used by the summary rule catalog."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fuzzy import SUMMARIZER_LABELS


class InsufficientHistoryError(ValueError):
    pass


def slope_change_ratio(segment: Sequence[float]) -> float:
    """Fraction of interior days where the day-over-day direction flips.

    A zero difference keeps the previous direction; leading zeros take the
    first nonzero direction.
    """
    x = np.asarray(segment, dtype=float)
    if x.size < 3:
        raise ValueError(f"segment needs at least 3 days, got {x.size}")
    signs = np.sign(np.diff(x))
    nz = np.flatnonzero(signs)
    if nz.size == 0:
        return 0.0
    carried = signs.copy()
    carried[: nz[0]] = signs[nz[0]]
    for t in range(nz[0] + 1, carried.size):
        if carried[t] == 0:
            carried[t] = carried[t - 1]
    flips = np.count_nonzero(carried[1:] != carried[:-1])
    return flips / (x.size - 2)


@dataclass(frozen=True)
class IfThenRule:
    antecedent: tuple[str, ...]
    consequent: str
    confidence: float
    support: int
    weekday: int | None = None

    @property
    def key(self) -> tuple:
        return (self.weekday, self.antecedent, self.consequent)


def _level_rank(labels: Sequence[str]) -> tuple[int, ...]:
    return tuple(SUMMARIZER_LABELS.index(x) for x in labels)


def mine_if_then_rules(
    labels: Sequence[str],
    min_support: int = 5,
    min_conf: float = 0.7,
    max_k: int = 3,
    weekdays: Sequence[int] | None = None,
) -> list[IfThenRule]:
    """Count "levels l1..lk are followed by l(k+1)" rules over a label sequence.

    Support is the number of occurrences of the full (antecedent, consequent)
    pattern; confidence divides by the antecedent occurrences that have a next
    day. With ``weekdays`` every antecedent is keyed by the weekday of its first
    day. Output is sorted by confidence, then support, then shorter antecedent,
    then higher summarizer levels.
    """
    n = len(labels)
    if weekdays is not None and len(weekdays) != n:
        raise ValueError("weekdays must align with labels")
    ante_counts: dict[tuple, int] = defaultdict(int)
    pair_counts: dict[tuple, int] = defaultdict(int)
    for k in range(1, max_k + 1):
        for t in range(n - k):
            wd = None if weekdays is None else int(weekdays[t])
            ante = (wd, tuple(labels[t : t + k]))
            ante_counts[ante] += 1
            pair_counts[ante + (labels[t + k],)] += 1
    rules = []
    for (wd, ante, cons), sup in pair_counts.items():
        conf = sup / ante_counts[(wd, ante)]
        if sup >= min_support and conf >= min_conf:
            rules.append(IfThenRule(ante, cons, conf, sup, wd))
    rules.sort(key=lambda r: (
        -r.confidence, -r.support, len(r.antecedent),
        tuple(-i for i in _level_rank(r.antecedent)), -SUMMARIZER_LABELS.index(r.consequent),
        -1 if r.weekday is None else -r.weekday,
    ))
    return rules


@dataclass(frozen=True)
class SimilarWeekContext:
    """Index ranges are 0-based half-open ``(start, stop)``."""

    anchor_week: tuple[int, int]
    similar_weeks: tuple[tuple[int, int], ...]
    distances: tuple[float, ...]
    successor_weeks: tuple[tuple[int, int], ...]
    predicted_week: tuple[int, int]

    @property
    def most_recent_similar(self) -> tuple[int, int]:
        return max(self.similar_weeks)


def _znorm(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    if sd == 0:
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def find_similar_weeks(series: Sequence[float], anchor_stop: int, k: int = 3) -> SimilarWeekContext:
    """Rank the full weeks before ``[anchor_stop - 7, anchor_stop)`` by shape distance.

    Candidates are the 7-day blocks stepping back from the anchor week; each is
    z-normalized and compared to the z-normalized anchor by Euclidean distance.
    Ties go to the more recent week.
    """
    x = np.asarray(series, dtype=float)
    a0 = anchor_stop - 7
    if a0 < 0 or anchor_stop > x.size:
        raise InsufficientHistoryError("anchor week does not fit inside the series")
    starts = list(range(a0 - 7, -1, -7))
    if len(starts) < 2:
        raise InsufficientHistoryError(
            f"need at least 2 full weeks before the anchor week, found {len(starts)}"
        )
    anchor = _znorm(x[a0:anchor_stop])
    scored = []
    for s in starts:
        d = float(np.sqrt(np.sum((_znorm(x[s : s + 7]) - anchor) ** 2)))
        scored.append((d, -s))
    scored.sort()
    top = scored[:k]
    weeks = tuple((-ns, -ns + 7) for _, ns in top)
    return SimilarWeekContext(
        anchor_week=(a0, anchor_stop),
        similar_weeks=weeks,
        distances=tuple(d for d, _ in top),
        successor_weeks=tuple((s + 7, e + 7) for s, e in weeks),
        predicted_week=(anchor_stop, anchor_stop + 7),
    )
