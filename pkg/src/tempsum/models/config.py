from __future__ import annotations

from dataclasses import asdict, dataclass, fields

FAMILIES = ("cnn_lstm", "tst_transformer", "tst_lstm")


@dataclass
class ModelConfig:
    """Architecture hyperparameters; defaults follow the published setup."""

    family: str = "cnn_lstm"
    summary_vocab_size: int = 0
    template_vocab_size: int = 0
    short_len: int = 7
    long_len: int = 180
    max_decode_len: int = 32
    # recurrent / convolutional models
    hidden_size: int = 180
    encoder_output: int = 256
    embed_size: int = 64
    conv_channels: int = 16
    conv_kernel: int = 3
    conv_stride: int = 1
    conv_padding: int = 1
    pool_kernel: int = 2
    pool_stride: int = 2
    # transformer models
    d_model: int = 64
    qkv_dim: int = 8
    heads: int = 4
    layers: int = 4
    ff_size: int = 128
    window: int = 12
    positional: str = "sinusoidal"
    dropout: float = 0.2
    seed: int = 7

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, int) and f.name not in ("seed", "conv_padding") and v <= 0:
                raise ValueError(f"{f.name} must be positive, got {v}")
        if self.conv_padding < 0:
            raise ValueError("conv_padding must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.positional not in ("sinusoidal", "none"):
            raise ValueError("positional must be 'sinusoidal' or 'none'")
        if self.summary_vocab_size < 5 or self.template_vocab_size < 5:
            raise ValueError("vocabulary sizes must be set (reserved ids plus at least one token)")

    @property
    def inner_dim(self) -> int:
        return self.heads * self.qkv_dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})
