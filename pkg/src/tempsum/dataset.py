"""Per-summary-type training corpora: (x_short, x_long) paired with target tokens."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .codec import Vocab, build_template_vocab, build_vocab, decode, encode
from .ingest import TimeSeries
from .protoform.catalog import SUMMARY_TYPES, catalog_hash
from .protoform.engine import SummaryInstance, build_profile, generate_summary
from .protoform.mining import InsufficientHistoryError

logger = logging.getLogger(__name__)

ALIGNMENTS = ("end", "calendar")


class SplitError(ValueError):
    pass


@dataclass
class TrainingInstance:
    """One example. ``window``/``segments`` are 1-based inclusive day ranges of x_long."""

    user_id: str
    summary_type: str
    x_short: list[float]
    x_long: list[float]
    y_summary: list[str]
    y_template: list[str]
    window: tuple[int, int]
    segments: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.segments:
            self.segments = [tuple(self.window)]

    def short_from_long(self) -> list[float]:
        out: list[float] = []
        for i, j in self.segments:
            out.extend(self.x_long[i - 1 : j])
        return out


@dataclass
class DatasetManifest:
    summary_type: str
    count: int
    split_seed: int
    split_ratio: float
    train_users: list[str]
    test_users: list[str]
    train_indices: list[int]
    test_indices: list[int]
    # user -> [mean, sd] of the full x_long
    norm_stats: dict[str, list[float]]
    alignment: str = "end"
    catalog_hash: str = ""
    summary_vocab_hash: str = ""
    template_vocab_hash: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        return cls(**json.loads(text))


def as_of_dates(series: TimeSeries, summary_type: str, alignment: str = "end") -> list[date]:
    """Admissible as_of dates, one week apart.

    ``end`` steps back from the day after the last observation; ``calendar``
    uses every Monday, so each window closes a Monday-Sunday week.
    """
    need = SUMMARY_TYPES[summary_type].min_history
    n = len(series)
    if alignment == "end":
        stops = list(range(n, need - 1, -7))[::-1]
    elif alignment == "calendar":
        first = (7 - series.start_date.weekday()) % 7
        stops = [s for s in range(first, n + 1, 7) if s >= need]
    else:
        raise ValueError(f"alignment must be one of {ALIGNMENTS}")
    return [series.date_at(s) for s in stops]


def summarize_series(series: TimeSeries, summary_type: str, alignment: str = "end") -> list[SummaryInstance]:
    profile = build_profile(series)
    # one wording per corpus: rolling weeks for end-anchored, full weeks for calendar
    variant = "default" if alignment == "end" else "full_week"
    out: list[SummaryInstance] = []
    for day in as_of_dates(series, summary_type, alignment):
        try:
            out.extend(generate_summary(summary_type, series, day, profile=profile, variant=variant))
        except InsufficientHistoryError:
            continue
    return out


def build_instances(
    series_set: Iterable[TimeSeries],
    summary_type: str,
    catalog: dict | None = None,
    alignment: str = "end",
) -> list[TrainingInstance]:
    if catalog is not None and summary_type not in catalog["summary_types"]:
        raise KeyError(f"{summary_type!r} missing from the protoform catalog")
    out: list[TrainingInstance] = []
    empty_users = []
    for series in series_set:
        x_long = [float(v) for v in series.values]
        produced = summarize_series(series, summary_type, alignment)
        if not produced:
            empty_users.append(series.user_id)
        for inst in produced:
            ti = TrainingInstance(
                user_id=series.user_id,
                summary_type=summary_type,
                x_short=[],
                x_long=x_long,
                y_summary=list(inst.summary_tokens),
                y_template=list(inst.template_tokens),
                window=tuple(inst.window),
                segments=[tuple(s) for s in inst.segments],
            )
            ti.x_short = ti.short_from_long()
            out.append(ti)
    if not out:
        warnings.warn(
            f"no {summary_type} instances; users without output: {', '.join(empty_users[:10])}",
            stacklevel=2,
        )
    elif empty_users:
        logger.info("%s: %d users produced no instances", summary_type, len(empty_users))
    return out


def user_stats(instances: Sequence[TrainingInstance]) -> dict[str, list[float]]:
    stats: dict[str, list[float]] = {}
    for inst in instances:
        if inst.user_id not in stats:
            x = np.asarray(inst.x_long, dtype=float)
            stats[inst.user_id] = [float(x.mean()), float(x.std())]
    return stats


def _z(values: Sequence[float], mean: float, sd: float) -> list[float]:
    x = np.asarray(values, dtype=float)
    if sd == 0:
        return [0.0] * len(x)
    return ((x - mean) / sd).tolist()


def normalize_inputs(instance: TrainingInstance, manifest: DatasetManifest | dict) -> TrainingInstance:
    stats = manifest.norm_stats if isinstance(manifest, DatasetManifest) else manifest
    mean, sd = stats[instance.user_id]
    return replace(instance, x_short=_z(instance.x_short, mean, sd), x_long=_z(instance.x_long, mean, sd))


def denormalize_inputs(instance: TrainingInstance, manifest: DatasetManifest | dict) -> TrainingInstance:
    stats = manifest.norm_stats if isinstance(manifest, DatasetManifest) else manifest
    mean, sd = stats[instance.user_id]
    back = lambda v: (np.asarray(v, dtype=float) * sd + mean).tolist()  # noqa: E731
    return replace(instance, x_short=back(instance.x_short), x_long=back(instance.x_long))


def split_dataset(
    instances: Sequence[TrainingInstance], ratio: float = 0.8, seed: int = 7
) -> tuple[list[int], list[int]]:
    """Index lists (train, test) partitioned by user; deterministic for a seed."""
    users = sorted({inst.user_id for inst in instances})
    if len(users) < 2:
        raise SplitError(f"need at least 2 users to split, got {len(users)}")
    if not 0.0 < ratio < 1.0:
        raise SplitError(f"ratio must be in (0, 1), got {ratio}")
    order = np.random.default_rng(seed).permutation(len(users))
    n_train = min(max(int(round(ratio * len(users))), 1), len(users) - 1)
    train_users = {users[i] for i in order[:n_train]}
    train = [k for k, inst in enumerate(instances) if inst.user_id in train_users]
    test = [k for k, inst in enumerate(instances) if inst.user_id not in train_users]
    return train, test


def make_manifest(
    instances: Sequence[TrainingInstance],
    train: Sequence[int],
    test: Sequence[int],
    *,
    seed: int,
    ratio: float,
    alignment: str = "end",
    vocabs: tuple[Vocab, Vocab] | None = None,
) -> DatasetManifest:
    stype = instances[0].summary_type if instances else ""
    return DatasetManifest(
        summary_type=stype,
        count=len(instances),
        split_seed=seed,
        split_ratio=ratio,
        train_users=sorted({instances[k].user_id for k in train}),
        test_users=sorted({instances[k].user_id for k in test}),
        train_indices=list(train),
        test_indices=list(test),
        norm_stats=user_stats(instances),
        alignment=alignment,
        catalog_hash=catalog_hash(),
        summary_vocab_hash=vocabs[0].digest() if vocabs else "",
        template_vocab_hash=vocabs[1].digest() if vocabs else "",
    )


def corpus_vocabs(instances: Sequence[TrainingInstance]) -> tuple[Vocab, Vocab]:
    summary_vocab = build_vocab(inst.y_summary for inst in instances)
    return summary_vocab, build_template_vocab(summary_vocab)


# ---------------------------------------------------------------- files


def instance_to_json(inst: TrainingInstance, summary_vocab: Vocab, template_vocab: Vocab) -> str:
    return json.dumps({
        "user_id": inst.user_id,
        "summary_type": inst.summary_type,
        "x_short": inst.x_short,
        "x_long": inst.x_long,
        "y_summary": encode(inst.y_summary, summary_vocab),
        "y_template": encode(inst.y_template, template_vocab),
        "window": list(inst.window),
        "segments": [list(s) for s in inst.segments],
    })


def instance_from_json(line: str, summary_vocab: Vocab, template_vocab: Vocab) -> TrainingInstance:
    d = json.loads(line)
    return TrainingInstance(
        user_id=d["user_id"],
        summary_type=d["summary_type"],
        x_short=[float(v) for v in d["x_short"]],
        x_long=[float(v) for v in d["x_long"]],
        y_summary=decode(d["y_summary"], summary_vocab),
        y_template=decode(d["y_template"], template_vocab),
        window=tuple(d["window"]),
        segments=[tuple(s) for s in d["segments"]],
    )


@dataclass
class Dataset:
    instances: list[TrainingInstance]
    manifest: DatasetManifest
    summary_vocab: Vocab
    template_vocab: Vocab

    @property
    def train(self) -> list[TrainingInstance]:
        return [self.instances[k] for k in self.manifest.train_indices]

    @property
    def test(self) -> list[TrainingInstance]:
        return [self.instances[k] for k in self.manifest.test_indices]


def assemble_dataset(
    instances: Sequence[TrainingInstance], *, ratio: float = 0.8, seed: int = 7, alignment: str = "end"
) -> Dataset:
    instances = list(instances)
    vocabs = corpus_vocabs(instances)
    train, test = split_dataset(instances, ratio, seed)
    manifest = make_manifest(instances, train, test, seed=seed, ratio=ratio, alignment=alignment, vocabs=vocabs)
    return Dataset(instances, manifest, *vocabs)


def save_dataset(ds: Dataset, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "instances.jsonl").open("w", encoding="utf-8") as fh:
        for inst in ds.instances:
            fh.write(instance_to_json(inst, ds.summary_vocab, ds.template_vocab) + "\n")
    (out / "dataset_manifest.json").write_text(ds.manifest.to_json() + "\n", encoding="utf-8")
    ds.summary_vocab.save(out / "summary_vocab.json")
    ds.template_vocab.save(out / "template_vocab.json")
    return out


def load_dataset(in_dir: str | Path) -> Dataset:
    d = Path(in_dir)
    sv = Vocab.load(d / "summary_vocab.json")
    tv = Vocab.load(d / "template_vocab.json")
    manifest = DatasetManifest.from_json((d / "dataset_manifest.json").read_text(encoding="utf-8"))
    with (d / "instances.jsonl").open(encoding="utf-8") as fh:
        instances = [instance_from_json(line, sv, tv) for line in fh if line.strip()]
    return Dataset(instances, manifest, sv, tv)
