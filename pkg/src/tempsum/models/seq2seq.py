"""The three numeric-to-text families behind one module, plus batching and checkpoints."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from ..codec import EOS_ID, PAD_ID, Vocab, placeholder_id_map
from ..protoform.catalog import PLACEHOLDERS, placeholder_map
from .config import ModelConfig
from .decoders import LSTMDualDecoder, TransformerDualDecoder
from .encoders import CNNEncoder, EncoderOutput, TSTEncoder

CHECKPOINT_FORMAT = "tempsum-checkpoint/1"


class VocabMismatchError(ValueError):
    pass


class DecodeError(RuntimeError):
    pass


class NumericToText(nn.Module):
    def __init__(self, cfg: ModelConfig, summary_vocab: Vocab, template_vocab: Vocab) -> None:
        super().__init__()
        if len(summary_vocab) != cfg.summary_vocab_size or len(template_vocab) != cfg.template_vocab_size:
            raise ValueError("config vocabulary sizes do not match the vocabularies")
        self.cfg = cfg
        self.summary_vocab = summary_vocab
        self.template_vocab = template_vocab
        to_template = placeholder_id_map(summary_vocab, template_vocab, placeholder_map())
        self.register_buffer("to_template", torch.tensor(to_template, dtype=torch.long), persistent=False)
        blanks = [template_vocab.id(p) for p in PLACEHOLDERS if p in template_vocab]
        self.register_buffer("placeholder_ids", torch.tensor(blanks, dtype=torch.long), persistent=False)

        if cfg.family == "cnn_lstm":
            self.encoder = CNNEncoder(cfg)
            self.bridge = None
            self.decoder = LSTMDualDecoder(cfg, cfg.encoder_output)
        elif cfg.family == "tst_lstm":
            self.encoder = TSTEncoder(cfg)
            # flattened x_short encodings + pooled x_long encoding + raw inputs
            width = cfg.d_model * (cfg.short_len + 1) + cfg.short_len + cfg.long_len
            self.bridge = nn.Sequential(nn.Linear(width, cfg.encoder_output), nn.Tanh(), nn.Dropout(cfg.dropout))
            self.decoder = LSTMDualDecoder(cfg, cfg.encoder_output)
        else:
            self.encoder = TSTEncoder(cfg)
            self.bridge = None
            self.decoder = TransformerDualDecoder(cfg)

    def encode(self, x_short, x_long, short_valid=None, long_valid=None) -> EncoderOutput:
        if self.cfg.family == "cnn_lstm":
            return self.encoder(x_short, x_long)
        return self.encoder(x_short, x_long, short_valid, long_valid)

    def forward(self, x_short, x_long, short_valid=None, long_valid=None, steps: int | None = None):
        steps = steps or self.cfg.max_decode_len
        enc = self.encode(x_short, x_long, short_valid, long_valid)
        if self.cfg.family == "tst_transformer":
            return self.decoder(enc, steps, self.to_template)
        if self.cfg.family == "tst_lstm":
            s = self.cfg.short_len
            h = enc.context
            lv = enc.mask[:, s + 1 :].unsqueeze(-1).to(h.dtype)
            pooled_long = (h[:, s + 1 :] * lv).sum(1) / lv.sum(1).clamp(min=1.0)
            ctx = self.bridge(torch.cat([h[:, :s].flatten(1), pooled_long, x_short, x_long], dim=1))
        else:
            ctx = enc.pooled
        return self.decoder(ctx, steps, self.to_template)


def init_weights(model: nn.Module, seed: int) -> None:
    """Uniform fan-in init for weights, zero biases; seeded and order-stable."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, nn.LayerNorm):
                module.weight.fill_(1.0)
                module.bias.zero_()
                continue
            for name, p in module.named_parameters(recurse=False):
                if name.startswith("bias") or p.dim() < 2:
                    p.zero_()
                else:
                    bound = 1.0 / math.sqrt(int(np.prod(p.shape[1:])))
                    p.copy_(torch.empty(p.shape).uniform_(-bound, bound, generator=gen))


def build_model(cfg: ModelConfig, summary_vocab: Vocab, template_vocab: Vocab) -> NumericToText:
    model = NumericToText(cfg, summary_vocab, template_vocab)
    init_weights(model, cfg.seed)
    return model


# ---------------------------------------------------------------- batching


def _fit(values: Sequence[float], length: int) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad with zeros (or keep the most recent ``length`` values)."""
    x = np.asarray(values, dtype=np.float64)[-length:]
    out = np.zeros(length)
    valid = np.zeros(length, dtype=bool)
    out[: x.size] = x
    valid[: x.size] = True
    return out, valid


def zscore(values: Sequence[float], reference: Sequence[float]) -> np.ndarray:
    ref = np.asarray(reference, dtype=float)
    mean, sd = ref.mean(), ref.std()
    x = np.asarray(values, dtype=float)
    return np.zeros_like(x) if sd == 0 else (x - mean) / sd


def input_tensors(pairs: Sequence[tuple[Sequence[float], Sequence[float]]], cfg: ModelConfig,
                  normalize: bool = True, dtype=torch.float32):
    """(x_short, x_long) raw pairs -> padded tensors and validity masks.

    Both inputs are z-scored with the statistics of their own x_long.
    """
    xs, xl, vs, vl = [], [], [], []
    for short, long in pairs:
        if normalize:
            short, long = zscore(short, long), zscore(long, long)
        a, va = _fit(short, cfg.short_len)
        b, vb = _fit(long, cfg.long_len)
        xs.append(a)
        xl.append(b)
        vs.append(va)
        vl.append(vb)
    t = lambda arr, dt: torch.tensor(np.stack(arr), dtype=dt)  # noqa: E731
    return t(xs, dtype), t(xl, dtype), t(vs, torch.bool), t(vl, torch.bool)


def target_tensors(token_lists: Sequence[Sequence[str]], vocab: Vocab, steps: int | None = None) -> torch.Tensor:
    """Gold ids with a trailing </s>, padded with <pad>; no leading <s>."""
    ids = [[vocab.id(w) for w in toks] + [EOS_ID] for toks in token_lists]
    n = steps or max(len(x) for x in ids)
    out = torch.full((len(ids), n), PAD_ID, dtype=torch.long)
    for i, row in enumerate(ids):
        row = row[:n]
        out[i, : len(row)] = torch.tensor(row)
    return out


# ---------------------------------------------------------------- decoding


def _strip(ids: Sequence[int], vocab: Vocab) -> list[str]:
    """Tokens before the first </s>; stray specials are kept so they score as errors."""
    ids = list(ids)
    if EOS_ID in ids:
        ids = ids[: ids.index(EOS_ID)]
    for i in ids:
        if not 0 <= i < len(vocab):
            raise DecodeError(f"predicted id {i} is outside the vocabulary")
    return [vocab.token(i) for i in ids]


@torch.no_grad()
def generate_batch(model: NumericToText, pairs, batch_size: int = 256) -> list[tuple[list[str], list[str]]]:
    model.eval()
    out = []
    for k in range(0, len(pairs), batch_size):
        xs, xl, vs, vl = input_tensors(pairs[k : k + batch_size], model.cfg)
        s_logits, t_logits = model(xs, xl, vs, vl, steps=model.cfg.max_decode_len)
        for s_row, t_row in zip(s_logits.argmax(-1).tolist(), t_logits.argmax(-1).tolist()):
            out.append((_strip(s_row, model.summary_vocab), _strip(t_row, model.template_vocab)))
    return out


def greedy_generate(model: NumericToText, x_short: Sequence[float], x_long: Sequence[float]):
    """Argmax decode of one input; returns (summary tokens, template tokens)."""
    return generate_batch(model, [(x_short, x_long)])[0]


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(model: NumericToText, path: str | Path, extra: dict | None = None) -> Path:
    path = Path(path)
    torch.save({
        "format": CHECKPOINT_FORMAT,
        "config": model.cfg.to_dict(),
        "summary_vocab": list(model.summary_vocab.tokens),
        "template_vocab": list(model.template_vocab.tokens),
        "vocab_hashes": {
            "summary": model.summary_vocab.digest(),
            "template": model.template_vocab.digest(),
        },
        "state_dict": model.state_dict(),
        "extra": extra or {},
    }, path)
    return path


def load_checkpoint(path: str | Path, expected_hashes: dict | None = None) -> NumericToText:
    """Rebuild a model; refuses when the stored vocab hashes differ from ``expected_hashes``."""
    blob = torch.load(Path(path), map_location="cpu", weights_only=False)
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} archive")
    sv, tv = Vocab(tuple(blob["summary_vocab"])), Vocab(tuple(blob["template_vocab"]))
    stored = blob["vocab_hashes"]
    if stored != {"summary": sv.digest(), "template": tv.digest()}:
        raise VocabMismatchError(f"{path}: embedded vocabularies do not match their hashes")
    if expected_hashes is not None:
        for key in ("summary", "template"):
            if key in expected_hashes and expected_hashes[key] != stored[key]:
                raise VocabMismatchError(
                    f"{key} vocabulary hash {stored[key][:12]} != dataset {expected_hashes[key][:12]}"
                )
    model = NumericToText(ModelConfig.from_dict(blob["config"]), sv, tv)
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model
