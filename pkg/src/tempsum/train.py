"""Per-type training loop and evaluation metrics."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .bleu import BLEU_VARIANT, bleu_score
from .dataset import Dataset, TrainingInstance
from .models.config import ModelConfig
from .models.loss import dual_loss
from .models.seq2seq import NumericToText, build_model, generate_batch, input_tensors, save_checkpoint, target_tensors

logger = logging.getLogger(__name__)

FAMILY_DEFAULTS = {
    "cnn_lstm": (180, 78),
    "tst_lstm": (8, 30),
    "tst_transformer": (8, 30),
}


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 180
    epochs: int = 78
    seed: int = 7
    grad_clip: float | None = None

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.lr > 0:
            raise ValueError("lr must be positive")

    @classmethod
    def for_family(cls, family: str, **overrides) -> "TrainConfig":
        batch, epochs = FAMILY_DEFAULTS[family]
        kw = dict(batch_size=batch, epochs=epochs)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: NumericToText
    loss_curve: list[float]
    best_epoch: int | None


def config_for_dataset(ds: Dataset, family: str, **overrides) -> ModelConfig:
    """Model config sized to the dataset: input lengths and decode length from the corpus."""
    insts = ds.instances
    kw = dict(
        family=family,
        summary_vocab_size=len(ds.summary_vocab),
        template_vocab_size=len(ds.template_vocab),
        short_len=max(len(i.x_short) for i in insts),
        long_len=max(len(i.x_long) for i in insts),
        # longest gold summary plus its terminator
        max_decode_len=max(len(i.y_summary) for i in insts) + 1,
    )
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ModelConfig(**kw)


def batch_tensors(model: NumericToText, instances: Sequence[TrainingInstance]):
    cfg = model.cfg
    longest = max(len(i.y_summary) for i in instances) + 1
    if longest > cfg.max_decode_len:
        raise ValueError(f"max_decode_len {cfg.max_decode_len} is shorter than a target of {longest} tokens")
    xs, xl, vs, vl = input_tensors([(i.x_short, i.x_long) for i in instances], cfg)
    ys = target_tensors([i.y_summary for i in instances], model.summary_vocab, cfg.max_decode_len)
    yt = target_tensors([i.y_template for i in instances], model.template_vocab, cfg.max_decode_len)
    return xs, xl, vs, vl, ys, yt


def train_model(
    model: NumericToText,
    instances: Sequence[TrainingInstance],
    cfg: TrainConfig,
    checkpoint_dir: str | Path | None = None,
) -> TrainResult:
    """Seeded mini-batch Adam on the dual loss; keeps the weights of the lowest-loss epoch."""
    if cfg.epochs == 0 or not instances:
        return TrainResult(model, [], None)
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    tensors = batch_tensors(model, instances)
    n = len(instances)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    curve: list[float] = []
    best_loss, best_state, best_epoch = math.inf, None, None
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = torch.as_tensor(order[start : start + cfg.batch_size])
            xs, xl, vs, vl, ys, yt = (t[idx] for t in tensors)
            s_logits, t_logits = model(xs, xl, vs, vl, steps=model.cfg.max_decode_len)
            loss = dual_loss(s_logits, t_logits, ys, yt, model.placeholder_ids)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {b} (seed {cfg.seed}, lr {cfg.lr})"
                )
            opt.zero_grad()
            loss.backward()
            if cfg.grad_clip:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            opt.step()
            total += loss.item() * len(idx)
        epoch_loss = total / n
        curve.append(epoch_loss)
        logger.info("epoch %d/%d loss %.4f", epoch, cfg.epochs, epoch_loss)
        if epoch_loss < best_loss:
            best_loss, best_epoch = epoch_loss, epoch
            best_state = copy.deepcopy(model.state_dict())
        if checkpoint_dir is not None:
            save_checkpoint(model, Path(checkpoint_dir) / "last.pt",
                            extra={"epoch": epoch, "loss_curve": curve, "train_config": cfg.to_dict()})
    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model, curve, best_epoch)


def fit(ds: Dataset, family: str, train_cfg: TrainConfig | None = None,
        checkpoint_dir: str | Path | None = None, **model_overrides) -> TrainResult:
    """Build a fresh model for ``ds`` and train it on the training split."""
    train_cfg = train_cfg or TrainConfig.for_family(family)
    model_overrides.setdefault("seed", train_cfg.seed)
    model = build_model(config_for_dataset(ds, family, **model_overrides), ds.summary_vocab, ds.template_vocab)
    return train_model(model, ds.train, train_cfg, checkpoint_dir)


# ---------------------------------------------------------------- evaluation


@dataclass
class EvalReport:
    summary_type: str
    model: str
    exact_match: float
    token_accuracy: float
    bleu: float
    n_test: int
    n_train: int = 0
    template_exact_match: float = 0.0
    loss_curve: list[float] = field(default_factory=list)
    bleu_variant: str = BLEU_VARIANT

    def __post_init__(self) -> None:
        for name in ("exact_match", "token_accuracy", "bleu", "template_exact_match"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)


def token_accuracy(pred: Sequence[str], gold: Sequence[str]) -> float:
    """Per-position match rate over the longer of the two sequences."""
    n = max(len(pred), len(gold))
    if n == 0:
        return 1.0
    return sum(p == g for p, g in zip(pred, gold)) / n


def score_predictions(preds: Sequence[Sequence[str]], golds: Sequence[Sequence[str]]) -> tuple[float, float, float]:
    """(exact match, mean token accuracy, corpus BLEU)."""
    if not golds:
        raise ValueError("cannot score an empty test set")
    exact = sum(list(p) == list(g) for p, g in zip(preds, golds)) / len(golds)
    tok = sum(token_accuracy(p, g) for p, g in zip(preds, golds)) / len(golds)
    return exact, tok, bleu_score(preds, golds)


def evaluate_model(model: NumericToText, instances: Sequence[TrainingInstance], *,
                   n_train: int = 0, loss_curve: Sequence[float] = ()) -> EvalReport:
    if not instances:
        raise ValueError("test set is empty")
    outputs = generate_batch(model, [(i.x_short, i.x_long) for i in instances])
    preds = [s for s, _ in outputs]
    golds = [i.y_summary for i in instances]
    exact, tok, bleu = score_predictions(preds, golds)
    t_exact = sum(t == i.y_template for (_, t), i in zip(outputs, instances)) / len(instances)
    return EvalReport(
        summary_type=instances[0].summary_type,
        model=model.cfg.family,
        exact_match=exact,
        token_accuracy=tok,
        bleu=bleu,
        n_test=len(instances),
        n_train=n_train,
        template_exact_match=t_exact,
        loss_curve=list(loss_curve),
    )
