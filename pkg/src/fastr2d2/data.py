"""Corpus ingestion: vocabulary, word-piece tables, span constraints."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

UNK = "<unk>"
MASK = "<mask>"
SPECIALS = (UNK, MASK)


def read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def read_corpus(path) -> list[list[str]]:
    """Whitespace-tokenized sentences, one per line; blank lines skipped."""
    return [line.split() for line in read_lines(path) if line.strip()]


@dataclass
class Vocabulary:
    tokens: list[str]
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        if list(self.tokens[: len(SPECIALS)]) != list(SPECIALS):
            raise ValueError("vocabulary must start with the special tokens")
        self.index = {}
        for i, t in enumerate(self.tokens):
            if t in self.index:
                raise ValueError(f"duplicate vocabulary entry {t!r}")
            self.index[t] = i

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def unk_id(self) -> int:
        return self.index[UNK]

    @property
    def mask_id(self) -> int:
        return self.index[MASK]

    def encode(self, words: Sequence[str]) -> list[int]:
        return [self.index.get(w, self.unk_id) for w in words]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def to_text(self) -> str:
        return "".join(t + "\n" for t in self.tokens)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls([t for t in read_lines(path) if t])


def build_vocab_from_sentences(sentences: Iterable[Sequence[str]], min_freq: int = 1) -> Vocabulary:
    counts = Counter(w for s in sentences for w in s)
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = sorted((w for w, c in counts.items() if c >= min_freq and w not in SPECIALS), key=lambda w: (-counts[w], w))
    return Vocabulary(list(SPECIALS) + kept)


def build_vocab(path, min_freq: int = 1) -> Vocabulary:
    return build_vocab_from_sentences(read_corpus(path), min_freq)


def load_piece_table(path) -> dict[str, list[str]]:
    """``word piece1 piece2 ...`` per line."""
    table = {}
    for line in read_lines(path):
        parts = line.split()
        if len(parts) >= 2:
            table[parts[0]] = parts[1:]
    return table


def to_pieces(words: Sequence[str], table: dict[str, list[str]]) -> tuple[list[str], list[int]]:
    """Word-piece sequence and the number of pieces per word (unknown words stay whole)."""
    pieces, counts = [], []
    for w in words:
        p = table.get(w, [w])
        if not p:
            raise ValueError(f"empty piece list for {w!r}")
        pieces.extend(p)
        counts.append(len(p))
    return pieces, counts


def derive_constraints(piece_counts: Sequence[int]) -> list[tuple[int, int]]:
    """One constraint per multi-piece word, covering its piece range (1-based)."""
    out, pos = [], 1
    for c in piece_counts:
        if c > 1:
            out.append((pos, pos + c - 1))
        pos += c
    return out


def read_constraints(path) -> list[list[tuple[int, int]]]:
    """One line per sentence of space-separated ``b:e`` ranges."""
    out = []
    for line in read_lines(path):
        spans = []
        for item in line.split():
            b, e = item.split(":")
            spans.append((int(b), int(e)))
        out.append(spans)
    return out


def batch_by_tokens(lengths: Sequence[int], order: Sequence[int], budget: int) -> list[list[int]]:
    """Greedy batches under a total-token budget; overflow moves to the next batch.

    A sentence longer than the budget gets a batch of its own.
    """
    batches, current, used = [], [], 0
    for idx in order:
        if current and used + lengths[idx] > budget:
            batches.append(current)
            current, used = [], 0
        current.append(idx)
        used += lengths[idx]
    if current:
        batches.append(current)
    return batches
