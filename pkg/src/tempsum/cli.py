"""Command-line entry point: ``tempsum <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path

from . import __version__

logger = logging.getLogger("tempsum")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
DEFAULT_SEED = 7
MANIFEST_NAME = "manifest.json"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    inputs: list[str]
    outputs: list[str]
    catalog_hash: str
    version: str = __version__
    created: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    def write(self, path: Path) -> Path:
        path.write_text(json.dumps(asdict(self), indent=1, sort_keys=True, default=str) + "\n", encoding="utf-8")
        return path


def _manifest(args, config: dict, inputs, outputs, target: Path) -> Path:
    from .protoform import catalog_hash

    m = RunManifest(
        command=args.command,
        config=config,
        seed=getattr(args, "seed", None),
        inputs=[str(p) for p in inputs],
        outputs=[str(p) for p in outputs],
        catalog_hash=catalog_hash(),
    )
    path = target / MANIFEST_NAME if target.is_dir() else target.with_name(target.name + ".manifest.json")
    return m.write(path)


def resolve_seed(flag: int | None, file_value=None) -> int:
    """Flag, then the TEMPSUM_SEED environment variable, then a config file, then the default."""
    if flag is not None:
        return flag
    env = os.environ.get("TEMPSUM_SEED")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"TEMPSUM_SEED must be an integer, got {env!r}") from exc
    if file_value is not None:
        return int(file_value)
    return DEFAULT_SEED


def read_config_file(path: str | None) -> dict:
    """JSON object or flat ``key = value`` lines."""
    if not path:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        return json.loads(text)
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def _coerce(value, like):
    if isinstance(like, bool):
        return str(value).lower() in ("1", "true", "yes")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


# ---------------------------------------------------------------- subcommands


def cmd_synth(args) -> int:
    from .ingest import load_synth_config, synth_config_from_mapping, synth_config_to_dict, synth_generate, write_food_log

    overrides = dict(n_users=args.users, days_per_user=args.days)
    if args.config:
        raw = read_config_file(args.config)
        seed = resolve_seed(args.seed, raw.get("seed"))
        cfg = load_synth_config(args.config, seed=seed, **overrides)
    else:
        cfg = synth_config_from_mapping({}, seed=resolve_seed(args.seed), **overrides)
    args.seed = cfg.seed
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    records = synth_generate(cfg)
    write_food_log(records, out)
    _manifest(args, synth_config_to_dict(cfg), [], [out], out)
    print(f"wrote {len(records)} records for {cfg.n_users} users to {out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    from .ingest import build_series, parse_food_log, save_series

    records = parse_food_log(args.input, strict=not args.lenient)
    series = build_series(records, attribute=args.attribute, min_days=args.min_days)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    save_series(series, out / "series.json")
    cfg = dict(attribute=args.attribute, min_days=args.min_days, lenient=args.lenient)
    _manifest(args, cfg, [args.input], [out / "series.json"], out)
    print(f"{len(records)} records -> {len(series)} series in {out / 'series.json'}")
    return EXIT_OK


def _series_path(p: str) -> Path:
    p = Path(p)
    return p / "series.json" if p.is_dir() else p


def _types(names) -> list[str]:
    from .protoform import SUMMARY_TYPE_NAMES

    if not names or names == ["all"]:
        return list(SUMMARY_TYPE_NAMES)
    bad = [n for n in names if n not in SUMMARY_TYPE_NAMES]
    if bad:
        raise UsageError(f"unknown summary type(s): {', '.join(bad)}; choose from {', '.join(SUMMARY_TYPE_NAMES)}")
    return list(names)


def cmd_summarize(args) -> int:
    from .dataset import summarize_series
    from .ingest import load_series
    from .protoform import write_catalog

    series = load_series(_series_path(args.input))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    types = _types(args.types)
    n = 0
    with (out / "summaries.jsonl").open("w", encoding="utf-8") as fh:
        for t in types:
            for s in series:
                for inst in summarize_series(s, t, args.alignment):
                    d = inst.to_dict()
                    d["user_id"] = s.user_id
                    fh.write(json.dumps(d, sort_keys=True) + "\n")
                    n += 1
    write_catalog(out / "protoform_catalog.json")
    _manifest(args, dict(types=types, alignment=args.alignment), [args.input],
              [out / "summaries.jsonl", out / "protoform_catalog.json"], out)
    print(f"{n} summaries over {len(types)} type(s) in {out / 'summaries.jsonl'}")
    return EXIT_OK


def cmd_dataset(args) -> int:
    from .dataset import assemble_dataset, build_instances, save_dataset
    from .ingest import load_series
    from .protoform import write_catalog

    types = _types([args.type])
    seed = resolve_seed(args.seed)
    args.seed = seed
    series = load_series(_series_path(args.input))
    instances = build_instances(series, types[0], alignment=args.alignment)
    if args.max_instances:
        instances = instances[: args.max_instances]
    if not instances:
        raise DataError(f"no {types[0]} instances could be built from {args.input}")
    ds = assemble_dataset(instances, ratio=args.ratio, seed=seed, alignment=args.alignment)
    out = save_dataset(ds, args.output)
    write_catalog(out / "protoform_catalog.json")
    cfg = dict(summary_type=types[0], ratio=args.ratio, alignment=args.alignment, max_instances=args.max_instances)
    _manifest(args, cfg, [args.input], sorted(str(p) for p in out.iterdir() if p.name != MANIFEST_NAME), out)
    print(f"{len(ds.instances)} instances ({len(ds.train)} train / {len(ds.test)} test) in {out}")
    return EXIT_OK


_TRAIN_KEYS = ("lr", "batch_size", "epochs")


def cmd_train(args) -> int:
    import torch

    from .dataset import load_dataset
    from .models.config import ModelConfig
    from .train import TrainConfig, fit

    raw = read_config_file(args.config)
    seed = resolve_seed(args.seed, raw.pop("seed", None))
    args.seed = seed
    defaults = TrainConfig.for_family(args.family)
    train_kw = {k: _coerce(raw.pop(k), getattr(defaults, k)) for k in _TRAIN_KEYS if k in raw}
    train_kw.update({k: getattr(args, k) for k in _TRAIN_KEYS if getattr(args, k) is not None})
    train_cfg = TrainConfig.for_family(args.family, seed=seed, **train_kw)
    model_defaults = ModelConfig.__dataclass_fields__
    model_kw = {}
    for k, v in raw.items():
        if k not in model_defaults or k == "family":
            raise DataError(f"unknown config key {k!r}")
        model_kw[k] = _coerce(v, model_defaults[k].default)
    if args.dropout is not None:
        model_kw["dropout"] = args.dropout
    torch.set_num_threads(args.threads)

    ds = load_dataset(args.dataset)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    result = fit(ds, args.family, train_cfg, checkpoint_dir=out, **model_kw)
    from .models.seq2seq import save_checkpoint

    ckpt = save_checkpoint(result.model, out / "model.pt", extra={
        "loss_curve": result.loss_curve, "best_epoch": result.best_epoch,
        "train_config": train_cfg.to_dict(), "n_train": len(ds.train),
        "summary_type": ds.manifest.summary_type,
    })
    (out / "loss_curve.json").write_text(json.dumps(result.loss_curve) + "\n", encoding="utf-8")
    cfg = dict(family=args.family, train=train_cfg.to_dict(), model=result.model.cfg.to_dict())
    _manifest(args, cfg, [args.dataset], [ckpt, out / "loss_curve.json"], out)
    last = result.loss_curve[-1] if result.loss_curve else float("nan")
    print(f"trained {args.family} for {train_cfg.epochs} epochs (final loss {last:.4f}); checkpoint {ckpt}")
    return EXIT_OK


def _load_model(path: str, expected: dict | None = None):
    import torch

    from .models.seq2seq import load_checkpoint

    p = Path(path)
    if p.is_dir():
        p = p / "model.pt"
    model = load_checkpoint(p, expected)
    extra = torch.load(p, map_location="cpu", weights_only=False).get("extra", {})
    return model, extra


def cmd_eval(args) -> int:
    from .dataset import load_dataset
    from .report import emit_report
    from .train import evaluate_model

    ds = load_dataset(args.dataset)
    expected = {"summary": ds.manifest.summary_vocab_hash, "template": ds.manifest.template_vocab_hash}
    model, extra = _load_model(args.checkpoint, expected)
    test = ds.test if args.split == "test" else ds.train
    if not test:
        raise DataError(f"{args.dataset} has an empty {args.split} split")
    report = evaluate_model(model, test, n_train=len(ds.train), loss_curve=extra.get("loss_curve", []))
    out = Path(args.output)
    written = emit_report([report], out, plots=not args.no_plots)
    _manifest(args, dict(split=args.split), [args.checkpoint, args.dataset], written, out)
    print(f"{report.summary_type} / {report.model}: exact_match={report.exact_match:.4f} "
          f"token_acc={report.token_accuracy:.4f} bleu={report.bleu:.4f} (n={report.n_test})")
    return EXIT_OK


def _parse_values(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise DataError(f"--values must be numbers: {exc}") from exc
    if not vals:
        raise DataError("--values is empty")
    return vals


def cmd_generate(args) -> int:
    from .ingest import TimeSeries, load_series
    from .protoform import detokenize, generate_summary

    if args.values:
        start = date.fromisoformat(args.start_date)
        series = TimeSeries(args.user or "cli", args.attribute, start, _parse_values(args.values))
    else:
        if not args.series:
            raise UsageError("give --values or --series")
        pool = load_series(_series_path(args.series))
        match = [s for s in pool if args.user is None or s.user_id == args.user]
        if not match:
            raise DataError(f"user {args.user!r} not found in {args.series}")
        series = match[0]

    if args.checkpoint:
        from .models.seq2seq import greedy_generate

        model, _ = _load_model(args.checkpoint)
        k = args.short_len or model.cfg.short_len
        values = list(series.values)
        summary, template = greedy_generate(model, values[-k:], values)
        print(detokenize(summary))
        if args.template:
            print(" ".join(template))
        return EXIT_OK

    stype = _types([args.type])[0]
    as_of = series.date_at(len(series))
    found = generate_summary(stype, series, as_of, variant=args.variant)
    if not found:
        raise DataError(f"no {stype} summary applies to this series")
    for inst in found:
        print(inst.text)
        if args.template:
            print(" ".join(inst.template_tokens))
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import emit_report, load_reports

    reports = load_reports(args.inputs)
    if not reports:
        raise DataError("no reports found")
    out = Path(args.output)
    written = emit_report(reports, out, plots=not args.no_plots)
    _manifest(args, {}, args.inputs, written, out)
    print(f"{len(reports)} report(s) -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    from .models.config import FAMILIES
    from .protoform import SUMMARY_TYPE_NAMES

    p = _Parser(prog="tempsum", description="Protoform summaries of daily time series and neural summarizers.")
    p.add_argument("--version", action="version", version=f"tempsum {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic food log CSV")
    s.add_argument("-o", "--output", required=True, help="CSV path")
    s.add_argument("--config", help="key = value SynthConfig file")
    s.add_argument("--seed", type=int)
    s.add_argument("--users", type=int)
    s.add_argument("--days", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", help="food log CSV -> series store")
    s.add_argument("input")
    s.add_argument("-o", "--output", default="series", help="output directory")
    s.add_argument("--attribute", default="calorie_intake")
    s.add_argument("--min-days", type=int, default=60)
    s.add_argument("--lenient", action="store_true", help="skip malformed rows instead of failing")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("summarize", help="series store -> protoform summaries")
    s.add_argument("input", help="series directory or series.json")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--types", nargs="*", default=["all"],
                   help="summary types, or 'all' (default): " + ", ".join(SUMMARY_TYPE_NAMES))
    s.add_argument("--alignment", choices=("end", "calendar"), default="end")
    s.set_defaults(func=cmd_summarize)

    s = sub.add_parser("dataset", help="series store -> training instances for one summary type")
    s.add_argument("input", help="series directory or series.json")
    s.add_argument("--type", required=True, help="one summary type (see summarize --help)")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--ratio", type=float, default=0.8)
    s.add_argument("--seed", type=int)
    s.add_argument("--alignment", choices=("end", "calendar"), default="end")
    s.add_argument("--max-instances", type=int)
    s.set_defaults(func=cmd_dataset)

    s = sub.add_parser("train", help="train one model family on a dataset")
    s.add_argument("dataset")
    s.add_argument("--family", choices=FAMILIES, required=True)
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--config", help="JSON or key = value overrides for training/model settings")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--dropout", type=float)
    s.add_argument("--threads", type=int, default=1, help="torch intra-op threads (1 keeps runs bit-stable)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    s.add_argument("checkpoint", help="model.pt or the training output directory")
    s.add_argument("dataset")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--split", choices=("test", "train"), default="test")
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("generate", help="print a summary for a raw series")
    s.add_argument("--values", help="comma or space separated daily values, oldest first")
    s.add_argument("--series", help="series directory or series.json")
    s.add_argument("--user")
    s.add_argument("--start-date", default="2015-01-01")
    s.add_argument("--attribute", default="calorie_intake")
    s.add_argument("--checkpoint", help="use a trained model instead of the rule engine")
    s.add_argument("--type", default="standard_evaluation_tw", help="summary type for the rule engine")
    s.add_argument("--variant", help="protoform wording for types that have several")
    s.add_argument("--short-len", type=int, help="days in x_short for neural generation")
    s.add_argument("--template", action="store_true", help="also print the template tokens")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("report", help="aggregate eval outputs into a table and plots")
    s.add_argument("inputs", nargs="+", help="metrics.json files or eval directories")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def run_cli(argv: list[str] | None = None) -> int:
    from .dataset import SplitError
    from .ingest import IngestError
    from .models.seq2seq import VocabMismatchError

    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tempsum {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VocabMismatchError as exc:
        print(f"tempsum {args.command}: vocabulary mismatch: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, IngestError, SplitError, FileNotFoundError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"tempsum {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
