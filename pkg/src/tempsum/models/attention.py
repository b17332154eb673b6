"""Multi-head attention with a narrow per-head width and chunked (windowed) variant."""

from __future__ import annotations

import math

import torch
from torch import nn


def window_mask(length: int, window: int) -> torch.Tensor:
    """Boolean (length, length) mask: True where query and key share a window.

    Windows are consecutive non-overlapping chunks; a short final chunk only
    attends within itself.
    """
    block = torch.arange(length) // window
    return block[:, None] == block[None, :]


def causal_mask(length: int) -> torch.Tensor:
    return torch.ones(length, length, dtype=torch.bool).tril()


def sinusoidal_positions(length: int, dim: int) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float32)[:, None]
    i = torch.arange(0, dim, 2, dtype=torch.float32)
    angle = pos / torch.pow(10000.0, i / dim)
    pe = torch.zeros(length, dim)
    pe[:, 0::2] = torch.sin(angle)
    pe[:, 1::2] = torch.cos(angle[:, : dim // 2])
    return pe


def masked_softmax(scores: torch.Tensor, allowed: torch.Tensor) -> torch.Tensor:
    scores = scores.masked_fill(~allowed, float("-inf"))
    return torch.softmax(scores, dim=-1)


class MultiHeadAttention(nn.Module):
    """Heads of width ``qkv_dim``; projections map d_model -> heads*qkv_dim -> d_model."""

    def __init__(self, d_model: int, heads: int, qkv_dim: int, dropout: float = 0.0) -> None:
        super().__init__()
        self.heads = heads
        self.qkv_dim = qkv_dim
        inner = heads * qkv_dim
        self.q = nn.Linear(d_model, inner)
        self.k = nn.Linear(d_model, inner)
        self.v = nn.Linear(d_model, inner)
        self.out = nn.Linear(inner, d_model)
        self.drop = nn.Dropout(dropout)

    def split(self, x: torch.Tensor) -> torch.Tensor:
        # (..., n, inner) -> (..., heads, n, qkv_dim)
        *lead, n, _ = x.shape
        return x.view(*lead, n, self.heads, self.qkv_dim).transpose(-3, -2)

    def merge(self, x: torch.Tensor) -> torch.Tensor:
        *lead, h, n, d = x.shape
        return x.transpose(-3, -2).reshape(*lead, n, h * d)

    def attend(self, q, k, v, allowed) -> tuple[torch.Tensor, torch.Tensor]:
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.qkv_dim)
        weights = masked_softmax(scores, allowed)
        return self.drop(weights) @ v, weights

    def forward(
        self, query: torch.Tensor, key: torch.Tensor, allowed: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """``allowed`` broadcasts to (batch, heads, n_query, n_key)."""
        q, k, v = self.split(self.q(query)), self.split(self.k(key)), self.split(self.v(key))
        ctx, weights = self.attend(q, k, v, allowed)
        return self.out(self.merge(ctx)), weights


class WindowedSelfAttention(MultiHeadAttention):
    """Self-attention computed independently inside each chunk of ``window`` positions."""

    def __init__(self, d_model: int, heads: int, qkv_dim: int, window: int, dropout: float = 0.0) -> None:
        super().__init__(d_model, heads, qkv_dim, dropout)
        self.window = window

    def forward(self, x: torch.Tensor, key_valid: torch.Tensor | None = None,
                return_weights: bool = False):
        b, n, d = x.shape
        w = self.window
        nw = -(-n // w)
        pad = nw * w - n
        valid = torch.ones(b, n, dtype=torch.bool, device=x.device) if key_valid is None else key_valid
        if pad:
            x = torch.cat([x, x.new_zeros(b, pad, d)], dim=1)
            valid = torch.cat([valid, valid.new_zeros(b, pad)], dim=1)
        xb = x.view(b, nw, w, d)
        q, k, v = self.split(self.q(xb)), self.split(self.k(xb)), self.split(self.v(xb))
        # (b, nw, 1, w_q, w_k); every query may at least attend to itself
        allowed = valid.view(b, nw, 1, 1, w) | torch.eye(w, dtype=torch.bool, device=x.device)
        ctx, weights = self.attend(q, k, v, allowed)
        out = self.out(self.merge(ctx)).reshape(b, nw * w, d)[:, :n]
        if not return_weights:
            return out
        return out, self.expand_weights(weights, n)

    @staticmethod
    def expand_weights(block_weights: torch.Tensor, n: int) -> torch.Tensor:
        """Scatter (b, nw, heads, w, w) block weights into a dense (b, heads, n, n) matrix."""
        b, nw, h, w, _ = block_weights.shape
        full = block_weights.new_zeros(b, h, nw * w, nw * w)
        for i in range(nw):
            s = slice(i * w, (i + 1) * w)
            full[:, :, s, s] = block_weights[:, i]
        return full[:, :, :n, :n]
