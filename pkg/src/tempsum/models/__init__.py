"""Encoder-decoder models mapping (x_short, x_long) to summary and template tokens."""

from .attention import MultiHeadAttention, WindowedSelfAttention, window_mask
from .config import FAMILIES, ModelConfig
from .encoders import CNNEncoder, EncoderOutput, ShapeError, TSTEncoder
from .loss import count_incorrect_blanks, dual_loss, incorrect_blanks
from .seq2seq import (
    NumericToText,
    VocabMismatchError,
    build_model,
    generate_batch,
    greedy_generate,
    input_tensors,
    load_checkpoint,
    save_checkpoint,
    target_tensors,
)
