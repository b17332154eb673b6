from __future__ import annotations

import numpy as np
import pytest
import torch

from tempsum.codec import RESERVED, Vocab, build_template_vocab
from tempsum.models import ModelConfig, build_model, dual_loss

MINI_WORDS = ("In", "the", "week", "was", "high", "low", ",", ".")


def mini_vocabs():
    sv = Vocab(RESERVED + MINI_WORDS)
    return sv, build_template_vocab(sv)


def mini_model(family: str, dropout: float = 0.0, seed: int = 3):
    """Miniature model: d_model 8, one layer, 12-word summary vocab, 5 decode steps."""
    sv, tv = mini_vocabs()
    short, long = (4, 8) if family == "cnn_lstm" else (2, 3)
    cfg = ModelConfig(
        family=family, summary_vocab_size=len(sv), template_vocab_size=len(tv),
        short_len=short, long_len=long, max_decode_len=5,
        hidden_size=8, encoder_output=8, embed_size=8, conv_channels=2,
        d_model=8, qkv_dim=2, heads=4, layers=1, ff_size=16, window=3,
        dropout=dropout, seed=seed,
    )
    return build_model(cfg, sv, tv)


def mini_batch(model, batch: int = 3, seed: int = 0, dtype=torch.float64):
    cfg = model.cfg
    g = torch.Generator().manual_seed(seed)
    xs = torch.randn(batch, cfg.short_len, generator=g, dtype=dtype)
    xl = torch.randn(batch, cfg.long_len, generator=g, dtype=dtype)
    ys = torch.randint(4, cfg.summary_vocab_size, (batch, cfg.max_decode_len), generator=g)
    ys[:, -1] = 2
    # template gold: summary ids, with the summarizer word replaced by its placeholder
    yt = model.to_template[ys]
    return xs, xl, ys, yt


def loss_of(model, batch) -> torch.Tensor:
    xs, xl, ys, yt = batch
    s, t = model(xs, xl, steps=model.cfg.max_decode_len)
    return dual_loss(s, t, ys, yt, model.placeholder_ids)


def gradient_check(model, batch, probes: int = 100, eps: float = 1e-6, seed: int = 0) -> list[float]:
    """Relative errors of analytic vs central-difference gradients at random parameter entries."""
    model.double().eval()
    model.zero_grad()
    loss_of(model, batch).backward()
    named = [(n, p) for n, p in model.named_parameters() if p.requires_grad]
    rng = np.random.default_rng(seed)
    errs = []
    for _ in range(probes):
        name, p = named[rng.integers(len(named))]
        idx = tuple(int(rng.integers(s)) for s in p.shape)
        analytic = p.grad[idx].item()
        with torch.no_grad():
            orig = p[idx].item()
            p[idx] = orig + eps
            up = loss_of(model, batch).item()
            p[idx] = orig - eps
            down = loss_of(model, batch).item()
            p[idx] = orig
        numeric = (up - down) / (2 * eps)
        errs.append(abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8))
    return errs


@pytest.fixture
def mini():
    return mini_model
