"""Numeric encoders: a twin convolutional stack and the windowed-attention TST."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .attention import WindowedSelfAttention, sinusoidal_positions
from .config import ModelConfig


class ShapeError(ValueError):
    pass


@dataclass
class EncoderOutput:
    context: torch.Tensor  # (batch, positions, width)
    pooled: torch.Tensor  # (batch, width)
    mask: torch.Tensor  # (batch, positions) True on real positions


class ConvStack(nn.Module):
    """Two conv -> ReLU -> max-pool stages over a single-channel sequence."""

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        c = cfg.conv_channels
        conv = dict(kernel_size=cfg.conv_kernel, stride=cfg.conv_stride, padding=cfg.conv_padding)
        self.net = nn.Sequential(
            nn.Conv1d(1, c, **conv), nn.ReLU(), nn.MaxPool1d(cfg.pool_kernel, cfg.pool_stride),
            nn.Conv1d(c, c, **conv), nn.ReLU(), nn.MaxPool1d(cfg.pool_kernel, cfg.pool_stride),
        )
        self.cfg = cfg

    def out_len(self, n: int) -> int:
        cfg = self.cfg
        for _ in range(2):
            n = (n + 2 * cfg.conv_padding - cfg.conv_kernel) // cfg.conv_stride + 1
            n = (n - cfg.pool_kernel) // cfg.pool_stride + 1
        return n

    def min_len(self) -> int:
        n = 1
        while self.out_len(n) < 1:
            n += 1
        return n

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x.unsqueeze(1))


class CNNEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.cfg = cfg
        self.short_conv = ConvStack(cfg)
        self.long_conv = ConvStack(cfg)
        for name, n in (("short_len", cfg.short_len), ("long_len", cfg.long_len)):
            if self.short_conv.out_len(n) < 1:
                raise ShapeError(f"{name}={n} is below the pooling chain minimum of {self.short_conv.min_len()}")
        flat = cfg.conv_channels * (self.short_conv.out_len(cfg.short_len) + self.long_conv.out_len(cfg.long_len))
        self.dense = nn.Linear(flat + cfg.short_len + cfg.long_len, cfg.encoder_output)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x_short: torch.Tensor, x_long: torch.Tensor) -> EncoderOutput:
        if x_short.shape[1] != self.cfg.short_len or x_long.shape[1] != self.cfg.long_len:
            raise ShapeError(
                f"expected inputs of length {self.cfg.short_len}/{self.cfg.long_len}, "
                f"got {x_short.shape[1]}/{x_long.shape[1]}"
            )
        hs = self.short_conv(x_short).flatten(1)
        hl = self.long_conv(x_long).flatten(1)
        h = torch.tanh(self.dense(torch.cat([hs, hl, x_short, x_long], dim=1)))
        h = self.drop(h)
        return EncoderOutput(h.unsqueeze(1), h, torch.ones(h.shape[0], 1, dtype=torch.bool))


class TSTLayer(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.attn = WindowedSelfAttention(cfg.d_model, cfg.heads, cfg.qkv_dim, cfg.window, cfg.dropout)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.ff = nn.Sequential(
            nn.Linear(cfg.d_model, cfg.ff_size), nn.ReLU(), nn.Dropout(cfg.dropout),
            nn.Linear(cfg.ff_size, cfg.d_model),
        )
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
        x = x + self.drop(self.attn(self.norm1(x), valid))
        return x + self.drop(self.ff(self.norm2(x)))


class TSTEncoder(nn.Module):
    """Scalar inputs projected to d_model; sequence is x_short, a learned separator, x_long."""

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.cfg = cfg
        self.proj = nn.Linear(1, cfg.d_model)
        self.separator = nn.Parameter(torch.zeros(1))
        self.layers = nn.ModuleList(TSTLayer(cfg) for _ in range(cfg.layers))
        self.norm = nn.LayerNorm(cfg.d_model)
        self.drop = nn.Dropout(cfg.dropout)
        n = cfg.short_len + 1 + cfg.long_len
        pe = sinusoidal_positions(n, cfg.d_model) if cfg.positional == "sinusoidal" else torch.zeros(n, cfg.d_model)
        self.register_buffer("positions", pe, persistent=False)

    def forward(self, x_short: torch.Tensor, x_long: torch.Tensor,
                short_valid: torch.Tensor | None = None, long_valid: torch.Tensor | None = None) -> EncoderOutput:
        b = x_short.shape[0]
        sep = self.separator.expand(b, 1)
        x = torch.cat([x_short, sep, x_long], dim=1)
        ones = lambda t: torch.ones_like(t, dtype=torch.bool)  # noqa: E731
        valid = torch.cat([
            ones(x_short) if short_valid is None else short_valid,
            torch.ones(b, 1, dtype=torch.bool),
            ones(x_long) if long_valid is None else long_valid,
        ], dim=1)
        h = self.proj(x.unsqueeze(-1)) + self.positions[: x.shape[1]]
        h = self.drop(h)
        for layer in self.layers:
            h = layer(h, valid)
        h = self.norm(h)
        w = valid.unsqueeze(-1).to(h.dtype)
        pooled = (h * w).sum(1) / w.sum(1).clamp(min=1.0)
        return EncoderOutput(h, pooled, valid)
