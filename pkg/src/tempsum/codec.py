"""Token vocabularies and id sequences for the summary and template streams."""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .protoform.catalog import PLACEHOLDERS
from .protoform.engine import detokenize, to_template_tokens  # noqa: F401  (re-exported)

PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"
RESERVED = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = range(4)

_PUNCT = re.compile(r"[^\s,.;:!?]+|[,.;:!?]")


class MalformedSequenceError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Whitespace split with punctuation as separate tokens: "week," -> "week", ","."""
    return _PUNCT.findall(text)


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.tokens[:4] != RESERVED:
            raise ValueError("reserved tokens must occupy ids 0..3")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        if not 0 <= idx < len(self.tokens):
            raise KeyError(f"id {idx} outside vocabulary of size {len(self.tokens)}")
        return self.tokens[idx]

    def to_json(self) -> str:
        return json.dumps(list(self.tokens), ensure_ascii=False)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        return cls(tuple(json.loads(Path(path).read_text(encoding="utf-8"))))


def build_vocab(corpus: Iterable[Sequence[str]]) -> Vocab:
    """Reserved tokens first, then by descending frequency, ties lexicographic."""
    counts = Counter(tok for seq in corpus for tok in seq if tok not in RESERVED)
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocab(RESERVED + tuple(ordered))


def build_template_vocab(summary_vocab: Vocab) -> Vocab:
    """Summary vocabulary extended with the placeholders, so shared literals keep their ids."""
    extra = tuple(p for p in PLACEHOLDERS if p not in summary_vocab)
    return Vocab(summary_vocab.tokens + extra)


def encode(words: Sequence[str], vocab: Vocab) -> list[int]:
    return [BOS_ID] + [vocab.id(w) for w in words] + [EOS_ID]


def decode(ids: Sequence[int], vocab: Vocab, *, require_eos: bool = True) -> list[str]:
    """Tokens between an optional leading <s> and the first </s>."""
    ids = list(ids)
    if ids and ids[0] == BOS_ID:
        ids = ids[1:]
    if EOS_ID in ids:
        ids = ids[: ids.index(EOS_ID)]
    elif require_eos:
        raise MalformedSequenceError("sequence has no </s> terminator")
    if PAD_ID in ids:
        raise MalformedSequenceError("<pad> before </s>")
    return [vocab.token(i) for i in ids]


def placeholder_id_map(summary_vocab: Vocab, template_vocab: Vocab, word_to_kind: dict[str, str]) -> list[int]:
    """For each summary id, the template id fed to the template decoder."""
    out = []
    for tok in summary_vocab.tokens:
        kind = word_to_kind.get(tok)
        out.append(template_vocab.id(kind) if kind else template_vocab.id(tok))
    return out
