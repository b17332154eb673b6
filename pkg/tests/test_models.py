from __future__ import annotations

import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import gradient_check, loss_of, mini_batch, mini_model, mini_vocabs
from tempsum.codec import EOS_ID, PAD_ID
from tempsum.models import (
    CNNEncoder,
    ModelConfig,
    MultiHeadAttention,
    ShapeError,
    TSTEncoder,
    VocabMismatchError,
    WindowedSelfAttention,
    count_incorrect_blanks,
    dual_loss,
    greedy_generate,
    input_tensors,
    load_checkpoint,
    save_checkpoint,
    target_tensors,
    window_mask,
)
from tempsum.models.encoders import ConvStack
from tempsum.models.loss import AlignmentError, incorrect_blanks
from tempsum.models.seq2seq import init_weights

FAMILIES = ("cnn_lstm", "tst_lstm", "tst_transformer")

# ---------------------------------------------------------------- attention


def test_window_mask_blocks():
    m = window_mask(24, 12)
    assert m[:12, :12].all() and m[12:, 12:].all()
    assert not m[:12, 12:].any() and not m[12:, :12].any()
    tail = window_mask(30, 12)
    assert tail[24:, 24:].all() and not tail[24:, :24].any()


def _attn(window, d=16, heads=4, qkv=4):
    torch.manual_seed(0)
    return WindowedSelfAttention(d, heads, qkv, window).double().eval()


def test_windowed_weights_are_block_diagonal():
    attn = _attn(12)
    x = torch.randn(2, 24, 16, dtype=torch.float64)
    _, w = attn(x, return_weights=True)
    mask = window_mask(24, 12)
    assert torch.all(w[..., ~mask] == 0)
    assert torch.allclose(w.sum(-1), torch.ones(2, 4, 24, dtype=torch.float64), atol=1e-6)
    assert (w >= 0).all()


def test_incomplete_final_window_attends_within_itself():
    attn = _attn(12)
    _, w = attn(torch.randn(1, 30, 16, dtype=torch.float64), return_weights=True)
    assert torch.all(w[:, :, 24:, :24] == 0)
    assert torch.allclose(w[:, :, 24:, 24:].sum(-1), torch.ones(1, 4, 6, dtype=torch.float64))


@pytest.mark.parametrize("n", [5, 12, 17])
def test_large_window_equals_full_attention(n):
    attn = _attn(64)
    x = torch.randn(3, n, 16, dtype=torch.float64)
    out = attn(x)
    full, _ = MultiHeadAttention.forward(attn, x, x, torch.ones(1, 1, n, n, dtype=torch.bool))
    assert torch.allclose(out, full, atol=1e-6)


def test_identical_window_values_give_projected_value():
    attn = _attn(4)
    v = torch.randn(16, dtype=torch.float64)
    x = v.repeat(1, 8, 1)
    out = attn(x)
    expected = attn.out(attn.v(v))
    assert torch.allclose(out, expected.expand_as(out), atol=1e-9)


def test_padding_keys_get_no_weight():
    attn = _attn(4)
    x = torch.randn(1, 8, 16, dtype=torch.float64)
    valid = torch.tensor([[True] * 6 + [False] * 2])
    _, w = attn(x, key_valid=valid, return_weights=True)
    assert torch.all(w[:, :, :6, 6:] == 0)


# ---------------------------------------------------------------- encoders


def _cfg(family="cnn_lstm", **kw):
    base = dict(family=family, summary_vocab_size=12, template_vocab_size=19, short_len=7, long_len=28)
    base.update(kw)
    return ModelConfig(**base)


def test_pool_arithmetic():
    stack = ConvStack(_cfg())
    assert stack.out_len(28) == 7
    x = torch.zeros(2, 28)
    assert stack(x).shape == (2, 16, 7)
    with pytest.raises(ShapeError, match="minimum of 4"):
        CNNEncoder(_cfg(short_len=3))


def test_zero_input_gives_zero_context():
    enc = CNNEncoder(_cfg()).eval()
    init_weights(enc, 0)
    out = enc(torch.zeros(2, 7), torch.zeros(2, 28))
    assert torch.count_nonzero(out.pooled) == 0
    assert out.context.shape == (2, 1, 256)


def test_encoder_shape_error():
    enc = CNNEncoder(_cfg())
    with pytest.raises(ShapeError):
        enc(torch.zeros(1, 6), torch.zeros(1, 28))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=35, max_size=35))
def test_encoders_stay_finite(vals):
    x = torch.tensor(vals, dtype=torch.float32)[None]
    torch.manual_seed(0)
    for enc in (CNNEncoder(_cfg()).eval(), TSTEncoder(_cfg("tst_lstm", layers=1)).eval()):
        out = enc(x[:, :7], x[:, 7:])
        assert torch.isfinite(out.context).all() and torch.isfinite(out.pooled).all()


def test_tst_encoder_output_shape():
    enc = TSTEncoder(_cfg("tst_lstm")).eval()
    out = enc(torch.randn(2, 7), torch.randn(2, 28))
    assert out.context.shape == (2, 36, 64)
    assert out.mask.all()


# ---------------------------------------------------------------- decoders / model


@pytest.mark.parametrize("family", FAMILIES)
def test_model_bit_stable_and_bounded(family):
    m1, m2 = mini_model(family), mini_model(family)
    batch = mini_batch(m1, dtype=torch.float32)
    s1, t1 = m1.eval()(batch[0], batch[1])
    s2, t2 = m2.eval()(batch[0], batch[1])
    assert torch.equal(s1, s2) and torch.equal(t1, t2)
    assert s1.shape[1] == t1.shape[1] == m1.cfg.max_decode_len


@pytest.mark.parametrize("family", FAMILIES)
def test_zero_output_layer_gives_uniform_first_step(family):
    model = mini_model(family).eval()
    dec = model.decoder
    heads = [dec.out_s, dec.out_t] if family != "tst_transformer" else [dec.summary.out, dec.template.out]
    with torch.no_grad():
        for h in heads:
            h.weight.zero_()
            h.bias.zero_()
    s, _ = model(torch.zeros(1, model.cfg.short_len), torch.zeros(1, model.cfg.long_len))
    probs = s[0, 0].softmax(-1)
    assert torch.allclose(probs, torch.full_like(probs, 1 / probs.numel()))


@pytest.mark.parametrize("family", FAMILIES)
def test_greedy_generate_respects_vocab_and_length(family):
    model = mini_model(family)
    summary, template = greedy_generate(model, [1.0] * model.cfg.short_len, list(range(model.cfg.long_len)))
    assert len(summary) <= model.cfg.max_decode_len
    assert all(w in model.summary_vocab for w in summary)
    assert all(w in model.template_vocab for w in template)
    again = greedy_generate(model, [1.0] * model.cfg.short_len, list(range(model.cfg.long_len)))
    assert again == (summary, template)


@pytest.mark.parametrize("family", FAMILIES)
def test_memorize_single_pair(family):
    model = mini_model(family)
    sv = model.summary_vocab
    words = ["In", "the", "week", "was", "high", "."]
    model.cfg.max_decode_len = 7
    xs, xl, vs, vl = input_tensors([([1, 2, 3, 4][: model.cfg.short_len], list(range(model.cfg.long_len)))], model.cfg)
    ys = target_tensors([words], sv, 7)
    yt = model.to_template[ys].masked_fill(ys == PAD_ID, PAD_ID)
    opt = torch.optim.Adam(model.parameters(), lr=0.02)
    torch.manual_seed(0)
    for _ in range(300):
        s, t = model(xs, xl, vs, vl, steps=7)
        loss = dual_loss(s, t, ys, yt, model.placeholder_ids)
        opt.zero_grad()
        loss.backward()
        opt.step()
    summary, template = greedy_generate(model, [1, 2, 3, 4][: model.cfg.short_len], list(range(model.cfg.long_len)))
    assert summary == words
    # the template stream is weighted by m, so only its blanks are guaranteed to be learned
    gold_template = ["In", "the", "TW", "was", "S", "."]
    assert count_incorrect_blanks(template, gold_template, {"TW", "S"}) == 0


@pytest.mark.parametrize("family", FAMILIES)
def test_gradient_check_small(family):
    model = mini_model(family)
    errs = gradient_check(model, mini_batch(model), probes=20)
    assert max(errs) <= 1e-3


# ---------------------------------------------------------------- loss


def test_count_incorrect_blanks_examples():
    ph = {"TW", "A", "S"}
    gold = "In the past full TW your A A has been S".split()
    assert count_incorrect_blanks(gold, gold, ph) == 0
    assert count_incorrect_blanks(gold[:-1] + ["low"], gold, ph) == 1
    short = "In the past full TW your A".split()
    assert count_incorrect_blanks(short, gold, ph) == 2


def test_batched_blanks_truncate_at_eos():
    gold = torch.tensor([[5, 9, 9, EOS_ID]])
    pred = torch.tensor([[5, 9, EOS_ID, 9]])
    logits = F.one_hot(pred, 12).double() * 10
    assert incorrect_blanks(logits, gold, torch.tensor([9])).tolist() == [1]


def _rows(probs):
    return torch.log(torch.tensor(probs, dtype=torch.float64))[None]


def test_loss_hand_computed_toy():
    # two positions; gold ids (0-based within a 3-word toy vocab offset by the reserved ids)
    s_probs = [[0.1, 0.1, 0.2, 0.2, 0.4, 0.0 + 1e-300], [0.1, 0.1, 0.5, 0.1, 0.1, 0.1]]
    t_probs = [[0.2, 0.2, 0.2, 0.2, 0.1, 0.1], [0.05, 0.05, 0.6, 0.1, 0.1, 0.1]]
    s, t = _rows(s_probs), _rows(t_probs)
    gold = torch.tensor([[4, EOS_ID]])
    expected = -math.log(0.4) - math.log(0.5) + 1 * (-math.log(0.1) - math.log(0.6))
    got = dual_loss(s, t, gold, gold, m=torch.tensor([1]))
    assert got.item() == pytest.approx(expected, rel=1e-12)


def test_perfect_predictions_give_zero_loss():
    gold = torch.tensor([[4, 5, EOS_ID]])
    logits = F.one_hot(gold, 8).double() * 1e3
    loss = dual_loss(logits, logits, gold, gold, torch.tensor([5]))
    assert loss.item() == pytest.approx(0.0, abs=1e-9)


def test_alignment_error():
    with pytest.raises(AlignmentError):
        dual_loss(torch.zeros(1, 3, 8), torch.zeros(1, 3, 8), torch.zeros(1, 2, dtype=torch.long),
                  torch.zeros(1, 2, dtype=torch.long), m=torch.tensor([0]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), m1=st.integers(0, 6), m2=st.integers(0, 6))
def test_loss_properties(seed, m1, m2):
    g = torch.Generator().manual_seed(seed)
    s = torch.randn(2, 4, 9, generator=g, dtype=torch.float64)
    t = torch.randn(2, 4, 9, generator=g, dtype=torch.float64)
    gold = torch.randint(3, 9, (2, 4), generator=g)
    gold[:, -1] = PAD_ID
    ce_s = F.cross_entropy(s.transpose(1, 2), gold, ignore_index=PAD_ID, reduction="none").sum(1).mean()
    zero = dual_loss(s, t, gold, gold, m=torch.zeros(2))
    assert zero.item() == ce_s.item()
    lo, hi = sorted((m1, m2))
    l_lo = dual_loss(s, t, gold, gold, m=torch.full((2,), lo))
    l_hi = dual_loss(s, t, gold, gold, m=torch.full((2,), hi))
    assert 0 <= l_lo.item() <= l_hi.item()


def test_m_carries_no_gradient():
    s = torch.randn(1, 3, 8, dtype=torch.float64, requires_grad=True)
    t = torch.randn(1, 3, 8, dtype=torch.float64, requires_grad=True)
    m = torch.tensor([2.0], requires_grad=True)
    gold = torch.tensor([[4, 5, EOS_ID]])
    dual_loss(s, t, gold, gold, m=m).backward()
    assert m.grad is None


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip(tmp_path):
    model = mini_model("tst_lstm").eval()
    path = save_checkpoint(model, tmp_path / "m.pt")
    back = load_checkpoint(path, {"summary": model.summary_vocab.digest()})
    xs, xl, _, _ = mini_batch(model, dtype=torch.float32)
    assert torch.equal(model(xs, xl)[0], back(xs, xl)[0])
    with pytest.raises(VocabMismatchError):
        load_checkpoint(path, {"summary": "0" * 64})


def test_vocab_size_mismatch_rejected():
    sv, tv = mini_vocabs()
    cfg = ModelConfig(summary_vocab_size=len(sv) + 1, template_vocab_size=len(tv))
    from tempsum.models.seq2seq import NumericToText

    with pytest.raises(ValueError):
        NumericToText(cfg, sv, tv)


def test_input_tensors_pad_and_normalize():
    cfg = _cfg(short_len=7, long_len=10)
    xs, xl, vs, vl = input_tensors([([3.0, 5.0], [1.0, 3.0, 5.0])], cfg)
    assert vl.sum().item() == 3 and vs.sum().item() == 2
    ref = np.array([1.0, 3.0, 5.0])
    assert xl[0, :3].numpy() == pytest.approx((ref - ref.mean()) / ref.std(), rel=1e-6)
    assert torch.count_nonzero(xl[0, 3:]) == 0
