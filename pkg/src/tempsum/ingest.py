"""Food-log parsing, daily series construction and a synthetic log generator."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("user_id", "date", "attribute", "value", "goal_value")
ATTRIBUTES = ("calorie_intake",)
WEEKDAY_KEYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")


class IngestError(ValueError):
    """Base class for food-log input problems."""


class SchemaError(IngestError):
    def __init__(self, column: str) -> None:
        super().__init__(f"missing required column: {column!r}")
        self.column = column


class RowError(IngestError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyInputError(IngestError):
    pass


@dataclass(frozen=True)
class FoodLogRecord:
    user_id: str
    date: date
    attribute: str
    value: float
    goal_value: float | None = None

    def __post_init__(self) -> None:
        if not self.value >= 0:
            raise ValueError(f"value must be >= 0, got {self.value}")
        if self.goal_value is not None and not self.goal_value > 0:
            raise ValueError(f"goal_value must be > 0, got {self.goal_value}")


@dataclass
class TimeSeries:
    """One user's contiguous daily series for a single attribute."""

    user_id: str
    attribute: str
    start_date: date
    values: list[float]
    goal_values: list[float] | None = None
    imputed_mask: list[bool] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.imputed_mask:
            self.imputed_mask = [False] * len(self.values)
        if len(self.values) < 1:
            raise ValueError("a series needs at least one day")
        if len(self.imputed_mask) != len(self.values):
            raise ValueError("imputed_mask length differs from values")
        if self.goal_values is not None and len(self.goal_values) != len(self.values):
            raise ValueError("goal_values length differs from values")
        arr = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("series values must be finite and >= 0")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end_date(self) -> date:
        return self.start_date + timedelta(days=len(self.values) - 1)

    def date_at(self, index: int) -> date:
        return self.start_date + timedelta(days=index)

    def index_of(self, day: date) -> int:
        return (day - self.start_date).days

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def observed(self) -> np.ndarray:
        """Values on logged (non-imputed) days."""
        arr = self.array()
        return arr[~np.asarray(self.imputed_mask, dtype=bool)]

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "attribute": self.attribute,
            "start_date": self.start_date.isoformat(),
            "values": list(self.values),
            "goal_values": None if self.goal_values is None else list(self.goal_values),
            "imputed_mask": list(self.imputed_mask),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TimeSeries":
        return cls(
            user_id=d["user_id"],
            attribute=d["attribute"],
            start_date=date.fromisoformat(d["start_date"]),
            values=[float(v) for v in d["values"]],
            goal_values=None if d.get("goal_values") is None else [float(v) for v in d["goal_values"]],
            imputed_mask=[bool(v) for v in d["imputed_mask"]],
        )


@dataclass
class SynthConfig:
    seed: int = 7
    n_users: int = 20
    days_per_user: int = 120
    base_mean: float = 2000.0
    base_sd: float = 200.0
    weekday_effects: dict[str, float] = field(
        default_factory=lambda: {
            "mon": -150.0, "tue": -100.0, "wed": -50.0, "thu": 0.0,
            "fri": 150.0, "sat": 400.0, "sun": 250.0,
        }
    )
    trend_slope: float = 0.5
    goal_adherence_prob: float = 0.3
    missing_day_prob: float = 0.05
    # spread of per-user mean intake around base_mean
    user_mean_sd: float = 250.0
    start_date: date = date(2015, 1, 1)

    def __post_init__(self) -> None:
        for name in ("goal_adherence_prob", "missing_day_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.days_per_user < 14:
            raise ValueError("days_per_user must be >= 14")
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        if self.base_sd < 0 or self.user_mean_sd < 0:
            raise ValueError("standard deviations must be >= 0")
        unknown = set(self.weekday_effects) - set(WEEKDAY_KEYS)
        if unknown:
            raise ValueError(f"unknown weekday keys: {sorted(unknown)}")

    def weekday_offset(self, weekday: int) -> float:
        return float(self.weekday_effects.get(WEEKDAY_KEYS[weekday], 0.0))


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise RowError(line, f"non-numeric {column}: {text!r}") from None
    if not np.isfinite(val):
        raise RowError(line, f"non-finite {column}: {text!r}")
    return val


def parse_food_log(csv_path: str | Path, *, strict: bool = True) -> list[FoodLogRecord]:
    """Read a food-log CSV and sum same-day entries per (user, date, attribute).

    With ``strict=False`` malformed rows are skipped and counted instead of raising.
    """
    path = Path(csv_path)
    sums: dict[tuple[str, date, str], float] = {}
    goals: dict[tuple[str, date, str], float | None] = {}
    malformed = 0
    n_rows = 0
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in CSV_COLUMNS:
            if col not in header:
                raise SchemaError(col)
        for row in reader:
            line = reader.line_num
            n_rows += 1
            try:
                user = (row["user_id"] or "").strip()
                if not user:
                    raise RowError(line, "empty user_id")
                try:
                    day = date.fromisoformat((row["date"] or "").strip())
                except ValueError:
                    raise RowError(line, f"bad date: {row['date']!r}") from None
                attr = (row["attribute"] or "").strip()
                if not attr:
                    raise RowError(line, "empty attribute")
                value = _parse_float((row["value"] or "").strip(), line, "value")
                if value < 0:
                    raise RowError(line, f"negative value: {value}")
                goal_text = (row["goal_value"] or "").strip()
                goal = _parse_float(goal_text, line, "goal_value") if goal_text else None
                if goal is not None and goal <= 0:
                    raise RowError(line, f"goal_value must be positive: {goal}")
            except RowError:
                if strict:
                    raise
                malformed += 1
                continue
            key = (user, day, attr)
            sums[key] = sums.get(key, 0.0) + value
            if goal is not None or key not in goals:
                # last non-empty goal of the day wins
                goals[key] = goal if goal is not None else goals.get(key)
    if n_rows == 0:
        raise EmptyInputError(f"{path}: no data rows")
    if malformed:
        logger.warning("%s: skipped %d malformed rows of %d", path, malformed, n_rows)
    return [
        FoodLogRecord(user_id=k[0], date=k[1], attribute=k[2], value=v, goal_value=goals.get(k))
        for k, v in sorted(sums.items())
    ]


def _fmt_number(x: float) -> str:
    return repr(float(x))


def write_food_log(records: Iterable[FoodLogRecord], csv_path: str | Path) -> None:
    with Path(csv_path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([
                r.user_id,
                r.date.isoformat(),
                r.attribute,
                _fmt_number(r.value),
                "" if r.goal_value is None else _fmt_number(r.goal_value),
            ])


def build_series(
    records: Sequence[FoodLogRecord], attribute: str = "calorie_intake", min_days: int = 60
) -> list[TimeSeries]:
    """Group records into one contiguous daily series per qualifying user.

    Interior gaps are filled with the user's mean logged value and flagged in
    ``imputed_mask``. Users with fewer than ``min_days`` logged days are dropped.
    """
    if not records:
        raise EmptyInputError("no records")
    by_user: dict[str, dict[date, FoodLogRecord]] = defaultdict(dict)
    for r in records:
        if r.attribute == attribute:
            by_user[r.user_id][r.date] = r

    out: list[TimeSeries] = []
    dropped = 0
    for user in sorted(by_user):
        days = by_user[user]
        if len(days) < min_days:
            dropped += 1
            continue
        first, last = min(days), max(days)
        n = (last - first).days + 1
        logged = np.array([days[d].value for d in sorted(days)], dtype=float)
        fill = float(logged.mean())
        user_goals = [days[d].goal_value for d in sorted(days) if days[d].goal_value is not None]
        goal_fill = float(np.mean(user_goals)) if user_goals else None

        values: list[float] = []
        mask: list[bool] = []
        goals: list[float] | None = [] if goal_fill is not None else None
        for i in range(n):
            d = first + timedelta(days=i)
            rec = days.get(d)
            values.append(rec.value if rec else fill)
            mask.append(rec is None)
            if goals is not None:
                g = rec.goal_value if rec is not None and rec.goal_value is not None else goal_fill
                goals.append(float(g))
        out.append(TimeSeries(user, attribute, first, values, goals, mask))

    if dropped:
        logger.info("build_series: dropped %d of %d users below min_days=%d",
                    dropped, len(by_user), min_days)
    if not out:
        warnings.warn(f"no user has >= {min_days} logged days of {attribute}", stacklevel=2)
    return out


def synth_generate(config: SynthConfig) -> list[FoodLogRecord]:
    """Generate deterministic food-diary calorie logs.

    Per day: base + user offset + weekday offset + trend + gaussian noise,
    clamped at zero; goal-adherent days are resampled within 10% of the goal.
    """
    rng = np.random.default_rng(config.seed)
    records: list[FoodLogRecord] = []
    width = len(str(config.n_users - 1))
    for u in range(config.n_users):
        user_id = f"u{u:0{width}d}"
        start = config.start_date + timedelta(days=int(rng.integers(0, 7)))
        user_mean = config.base_mean + config.user_mean_sd * rng.standard_normal()
        goal = max(1.0, round(user_mean * rng.uniform(0.85, 1.05)))
        noise = rng.standard_normal(config.days_per_user)
        adherent = rng.random(config.days_per_user) < config.goal_adherence_prob
        near_goal = goal * rng.uniform(0.9, 1.1, config.days_per_user)
        missing = rng.random(config.days_per_user) < config.missing_day_prob
        for i in range(config.days_per_user):
            if missing[i]:
                continue
            d = start + timedelta(days=i)
            v = (user_mean + config.weekday_offset(d.weekday())
                 + config.trend_slope * i + config.base_sd * noise[i])
            if adherent[i]:
                v = near_goal[i]
            records.append(FoodLogRecord(user_id, d, "calorie_intake",
                                         round(max(0.0, float(v)), 1), float(goal)))
    return records


def load_synth_config(path: str | Path, **overrides) -> SynthConfig:
    """Read a flat ``key = value`` config file into a SynthConfig.

    ``weekday_effects`` is written as ``mon:-100,sat:300``. Blank lines and
    ``#`` comments are ignored. Keyword overrides win over file values.
    """
    raw: dict[str, str] = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        raw[k] = v
    return synth_config_from_mapping(raw, **overrides)


def synth_config_from_mapping(raw: dict[str, str], **overrides) -> SynthConfig:
    known = SynthConfig.__dataclass_fields__
    kwargs: dict = {}
    for k, v in raw.items():
        if k not in known:
            raise ValueError(f"unknown SynthConfig key: {k}")
        if k == "weekday_effects":
            effects = {}
            for part in filter(None, (p.strip() for p in v.split(","))):
                day, off = part.split(":")
                effects[day.strip().lower()] = float(off)
            kwargs[k] = effects
        elif k in ("seed", "n_users", "days_per_user"):
            kwargs[k] = int(v)
        elif k == "start_date":
            kwargs[k] = date.fromisoformat(v)
        else:
            kwargs[k] = float(v)
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return SynthConfig(**kwargs)


def synth_config_to_dict(config: SynthConfig) -> dict:
    d = asdict(config)
    d["start_date"] = config.start_date.isoformat()
    return d


def save_series(series: Sequence[TimeSeries], path: str | Path) -> None:
    payload = {"version": 1, "series": [s.to_dict() for s in series]}
    Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def load_series(path: str | Path) -> list[TimeSeries]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return [TimeSeries.from_dict(d) for d in payload["series"]]
