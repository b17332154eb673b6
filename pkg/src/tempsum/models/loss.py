"""Combined summary/template loss weighted by the number of wrong blanks."""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn.functional as F

from ..codec import EOS_ID, PAD_ID


class AlignmentError(ValueError):
    pass


def count_incorrect_blanks(pred: Sequence, gold: Sequence, placeholders: set | frozenset) -> int:
    """Gold placeholder positions where the prediction differs or is missing.

    Both sequences are compared position by position; a prediction that ends
    early leaves its missing positions counted as wrong.
    """
    m = 0
    for i, g in enumerate(gold):
        if g in placeholders and (i >= len(pred) or pred[i] != g):
            m += 1
    return m


def truncate_at_eos(pred_ids: torch.Tensor) -> torch.Tensor:
    """Replace everything after the first </s> with -1 (treated as missing)."""
    is_eos = pred_ids == EOS_ID
    after = (is_eos.cumsum(1) - is_eos.long()) > 0
    return pred_ids.masked_fill(after, -1)


def incorrect_blanks(template_logits: torch.Tensor, gold_template: torch.Tensor,
                     placeholder_ids: torch.Tensor) -> torch.Tensor:
    """Batched m: (batch,) counts from argmax template predictions."""
    pred = truncate_at_eos(template_logits.argmax(-1))
    is_blank = torch.isin(gold_template, placeholder_ids)
    return (is_blank & (pred != gold_template)).sum(1)


def dual_loss(
    summary_logits: torch.Tensor,
    template_logits: torch.Tensor,
    gold_summary: torch.Tensor,
    gold_template: torch.Tensor,
    placeholder_ids: torch.Tensor | None = None,
    m: torch.Tensor | None = None,
    reduction: str = "mean",
) -> torch.Tensor:
    """Per example: sum_i CE(summary_i) + m * sum_i CE(template_i).

    Logits are (batch, steps, vocab); golds (batch, steps) padded with <pad>,
    which is masked out. ``m`` defaults to the count of wrong blanks in the
    current argmax template output and carries no gradient.
    """
    if summary_logits.shape[:2] != gold_summary.shape or template_logits.shape[:2] != gold_template.shape:
        raise AlignmentError(
            f"logits {tuple(summary_logits.shape[:2])}/{tuple(template_logits.shape[:2])} "
            f"vs golds {tuple(gold_summary.shape)}/{tuple(gold_template.shape)}"
        )
    if gold_summary.shape != gold_template.shape:
        raise AlignmentError("summary and template golds must have equal shapes")
    ce_s = F.cross_entropy(summary_logits.transpose(1, 2), gold_summary, ignore_index=PAD_ID,
                           reduction="none").sum(1)
    ce_t = F.cross_entropy(template_logits.transpose(1, 2), gold_template, ignore_index=PAD_ID,
                           reduction="none").sum(1)
    if m is None:
        if placeholder_ids is None:
            raise ValueError("need placeholder_ids to count wrong blanks")
        m = incorrect_blanks(template_logits, gold_template, placeholder_ids)
    per_example = ce_s + m.detach().to(ce_t.dtype) * ce_t
    if reduction == "none":
        return per_example
    if reduction == "sum":
        return per_example.sum()
    return per_example.mean()
