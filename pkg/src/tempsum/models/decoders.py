"""Dual (summary + template) autoregressive decoders.

Both decoders run free: every step consumes the previous argmax prediction,
never the gold token. The template decoder's input is the placeholder mapping
of the summary decoder's previous output.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from ..codec import BOS_ID
from .attention import MultiHeadAttention, sinusoidal_positions
from .config import ModelConfig
from .encoders import EncoderOutput


class LSTMDualDecoder(nn.Module):
    def __init__(self, cfg: ModelConfig, context_size: int) -> None:
        super().__init__()
        h, e = cfg.hidden_size, cfg.embed_size
        self.embed_s = nn.Embedding(cfg.summary_vocab_size, e)
        self.embed_t = nn.Embedding(cfg.template_vocab_size, e)
        self.init_s = nn.Linear(context_size, h)
        self.init_t = nn.Linear(context_size, h)
        self.cell_s = nn.LSTMCell(e + context_size, h)
        self.cell_t = nn.LSTMCell(e + context_size, h)
        self.drop = nn.Dropout(cfg.dropout)
        self.out_s = nn.Linear(h, cfg.summary_vocab_size)
        self.out_t = nn.Linear(h, cfg.template_vocab_size)

    def forward(self, context: torch.Tensor, steps: int, to_template: torch.Tensor):
        b = context.shape[0]
        hs = torch.tanh(self.init_s(context))
        ht = torch.tanh(self.init_t(context))
        cs = torch.zeros_like(hs)
        ct = torch.zeros_like(ht)
        prev_s = torch.full((b,), BOS_ID, dtype=torch.long)
        prev_t = prev_s
        s_logits, t_logits = [], []
        for _ in range(steps):
            hs, cs = self.cell_s(torch.cat([self.embed_s(prev_s), context], dim=1), (hs, cs))
            ht, ct = self.cell_t(torch.cat([self.embed_t(prev_t), context], dim=1), (ht, ct))
            ls = self.out_s(self.drop(hs))
            lt = self.out_t(self.drop(ht))
            s_logits.append(ls)
            t_logits.append(lt)
            prev_s = ls.argmax(-1)
            prev_t = to_template[prev_s]
        return torch.stack(s_logits, 1), torch.stack(t_logits, 1)


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        d = cfg.d_model
        self.self_attn = MultiHeadAttention(d, cfg.heads, cfg.qkv_dim, cfg.dropout)
        self.cross_attn = MultiHeadAttention(d, cfg.heads, cfg.qkv_dim, cfg.dropout)
        self.norm1 = nn.LayerNorm(d)
        self.norm2 = nn.LayerNorm(d)
        self.norm3 = nn.LayerNorm(d)
        self.ff = nn.Sequential(nn.Linear(d, cfg.ff_size), nn.ReLU(), nn.Dropout(cfg.dropout),
                                nn.Linear(cfg.ff_size, d))
        self.drop = nn.Dropout(cfg.dropout)

    def cross_keys(self, memory: torch.Tensor):
        a = self.cross_attn
        return a.split(a.k(memory)), a.split(a.v(memory))

    def step(self, x: torch.Tensor, cache: dict, cross: tuple, memory_valid: torch.Tensor) -> torch.Tensor:
        """One new position ``x`` of shape (b, 1, d); ``cache`` holds past self-attention keys/values."""
        a = self.self_attn
        y = self.norm1(x)
        k_new, v_new = a.split(a.k(y)), a.split(a.v(y))
        cache["k"] = k_new if "k" not in cache else torch.cat([cache["k"], k_new], dim=2)
        cache["v"] = v_new if "v" not in cache else torch.cat([cache["v"], v_new], dim=2)
        allowed = torch.ones(1, 1, 1, cache["k"].shape[2], dtype=torch.bool)
        ctx, _ = a.attend(a.split(a.q(y)), cache["k"], cache["v"], allowed)
        x = x + self.drop(a.out(a.merge(ctx)))

        c = self.cross_attn
        y = self.norm2(x)
        ctx, _ = c.attend(c.split(c.q(y)), cross[0], cross[1], memory_valid[:, None, None, :])
        x = x + self.drop(c.out(c.merge(ctx)))
        return x + self.drop(self.ff(self.norm3(x)))


class TransformerStream(nn.Module):
    def __init__(self, cfg: ModelConfig, vocab_size: int) -> None:
        super().__init__()
        self.embed = nn.Embedding(vocab_size, cfg.d_model)
        self.layers = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.layers))
        self.norm = nn.LayerNorm(cfg.d_model)
        self.out = nn.Linear(cfg.d_model, vocab_size)
        self.drop = nn.Dropout(cfg.dropout)
        self.scale = math.sqrt(cfg.d_model)
        n = cfg.max_decode_len + 1
        pe = sinusoidal_positions(n, cfg.d_model) if cfg.positional == "sinusoidal" else torch.zeros(n, cfg.d_model)
        self.register_buffer("positions", pe, persistent=False)

    def start(self, memory: torch.Tensor):
        return [{} for _ in self.layers], [layer.cross_keys(memory) for layer in self.layers]

    def step(self, token: torch.Tensor, t: int, state, memory_valid: torch.Tensor) -> torch.Tensor:
        caches, cross = state
        pos = self.positions[min(t, self.positions.shape[0] - 1)]
        x = self.drop(self.embed(token).unsqueeze(1) * self.scale + pos)
        for layer, cache, kv in zip(self.layers, caches, cross):
            x = layer.step(x, cache, kv, memory_valid)
        return self.out(self.norm(x)).squeeze(1)


class TransformerDualDecoder(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.summary = TransformerStream(cfg, cfg.summary_vocab_size)
        self.template = TransformerStream(cfg, cfg.template_vocab_size)

    def forward(self, enc: EncoderOutput, steps: int, to_template: torch.Tensor):
        b = enc.context.shape[0]
        st_s = self.summary.start(enc.context)
        st_t = self.template.start(enc.context)
        prev_s = torch.full((b,), BOS_ID, dtype=torch.long)
        prev_t = prev_s
        s_logits, t_logits = [], []
        for t in range(steps):
            ls = self.summary.step(prev_s, t, st_s, enc.mask)
            lt = self.template.step(prev_t, t, st_t, enc.mask)
            s_logits.append(ls)
            t_logits.append(lt)
            prev_s = ls.argmax(-1)
            prev_t = to_template[prev_s]
        return torch.stack(s_logits, 1), torch.stack(t_logits, 1)

