"""Grammar-induction metrics against labeled gold trees.

Conventions (matching the sentence-level scorer commonly used for
unsupervised parsing): spans shorter than two tokens are ignored, the
whole-sentence span counts, scores are averaged over sentences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from statistics import mean
from typing import Iterable, Sequence, Union

from fastr2d2.trees import BinaryTree

PUNCT_TAGS = frozenset({"''", "``", ".", ":", ",", "-LRB-", "-RRB-", "#", "$", "-NONE-"})


@dataclass
class GoldTree:
    """Labeled n-ary tree. A preterminal has exactly one ``str`` child."""

    label: str
    children: list[Union["GoldTree", str]] = field(default_factory=list)

    @property
    def is_preterminal(self) -> bool:
        return len(self.children) == 1 and isinstance(self.children[0], str)

    def leaves(self) -> list[str]:
        out = []
        for c in self.children:
            if isinstance(c, str):
                out.append(c)
            else:
                out.extend(c.leaves())
        return out

    def __str__(self) -> str:
        inner = " ".join(c if isinstance(c, str) else str(c) for c in self.children)
        return f"({self.label} {inner})"

    def labeled_spans(self) -> list[tuple[str, int, int]]:
        """(label, start, end) for every internal node, 1-based inclusive."""
        out = []

        def walk(node, start):
            pos = start
            for c in node.children:
                if isinstance(c, str):
                    pos += 1
                else:
                    pos = walk(c, pos)
            out.append((node.label, start, pos - 1))
            return pos

        walk(self, 1)
        return out

    def spans(self) -> set[tuple[int, int]]:
        return {(s, e) for _, s, e in self.labeled_spans() if e > s}


def parse_ptb(text: str) -> GoldTree:
    """Read one bracketed tree, e.g. ``(S (NP (DT the) (NN dog)) (VP (VBD ran)))``.

    An unlabeled outer wrapper ``( (S ...) )`` is removed.
    """
    toks = text.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def parse():
        nonlocal pos
        if toks[pos] != "(":
            raise ValueError(f"expected '(' at token {pos} in {text!r}")
        pos += 1
        label = ""
        if toks[pos] not in ("(", ")"):
            label = toks[pos]
            pos += 1
        children = []
        while toks[pos] != ")":
            if toks[pos] == "(":
                children.append(parse())
            else:
                children.append(toks[pos])
                pos += 1
        pos += 1
        return GoldTree(label, children)

    try:
        tree = parse()
    except IndexError:
        raise ValueError(f"unbalanced tree: {text!r}") from None
    if pos != len(toks):
        raise ValueError(f"trailing input after tree: {text!r}")
    while not tree.label and len(tree.children) == 1 and isinstance(tree.children[0], GoldTree):
        tree = tree.children[0]
    return tree


def binarize(gold: GoldTree) -> BinaryTree:
    """Right-factored binary tree with the same leaves; unary nodes vanish."""
    def build(node, start):
        parts = []
        pos = start
        for c in node.children:
            if isinstance(c, str):
                parts.append(BinaryTree.leaf(pos))
                pos += 1
            else:
                sub, pos = build(c, pos)
                parts.append(sub)
        t = parts[-1]
        for left in reversed(parts[:-1]):
            t = BinaryTree.node(left, t)
        return t, pos

    return build(gold, 1)[0]


def _gold_spans(gold: GoldTree | BinaryTree) -> set[tuple[int, int]]:
    return gold.internal_spans() if isinstance(gold, BinaryTree) else gold.spans()


def _length(t: GoldTree | BinaryTree) -> int:
    return len(t) if isinstance(t, BinaryTree) else len(t.leaves())


def span_f1(pred: set, gold: set) -> float:
    if not pred and not gold:
        return 100.0
    overlap = len(pred & gold)
    if overlap == 0:
        return 0.0
    precision, recall = overlap / len(pred), overlap / len(gold)
    return 100.0 * 2 * precision * recall / (precision + recall)


def unlabeled_f1(pred: BinaryTree, gold: GoldTree | BinaryTree, sentence_id: int | str = "?") -> float:
    if len(pred) != _length(gold):
        raise ValueError(f"sentence {sentence_id}: prediction has {len(pred)} leaves, gold has {_length(gold)}")
    return span_f1(pred.internal_spans(), _gold_spans(gold))


def corpus_f1(preds: Sequence[BinaryTree], golds: Sequence[GoldTree | BinaryTree]) -> tuple[float, list[float]]:
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions for {len(golds)} gold trees")
    scores = [unlabeled_f1(p, g, idx) for idx, (p, g) in enumerate(zip(preds, golds), start=1)]
    return (mean(scores) if scores else 0.0), scores


def nnp_chunks(gold: GoldTree) -> set[tuple[int, int]]:
    """Runs of two or more adjacent NNP preterminals under the same parent."""
    out = set()

    def walk(node, start):
        pos, run_start, run_len = start, None, 0
        for c in node.children:
            if isinstance(c, GoldTree) and c.is_preterminal and c.label == "NNP":
                if run_start is None:
                    run_start = pos
                run_len += 1
            else:
                if run_len >= 2:
                    out.add((run_start, run_start + run_len - 1))
                run_start, run_len = None, 0
            pos = pos + 1 if isinstance(c, str) else walk(c, pos)
        if run_len >= 2:
            out.add((run_start, run_start + run_len - 1))
        return pos

    walk(gold, 1)
    return out


def constituents(gold: GoldTree, tag: str) -> set[tuple[int, int]]:
    if tag == "NNP":
        return nnp_chunks(gold)
    return {(s, e) for label, s, e in gold.labeled_spans() if label == tag and e > s}


def label_recall(pred: BinaryTree, gold: GoldTree, tag: str) -> float | None:
    """Percentage of gold ``tag`` constituents present in ``pred``; None if there are none."""
    if len(pred) != len(gold.leaves()):
        raise ValueError(f"prediction has {len(pred)} leaves, gold has {len(gold.leaves())}")
    wanted = constituents(gold, tag)
    if not wanted:
        return None
    return 100.0 * len(wanted & pred.all_spans()) / len(wanted)


def corpus_recall(preds: Sequence[BinaryTree], golds: Sequence[GoldTree], tag: str) -> float | None:
    """Micro-averaged recall over all gold constituents with ``tag``."""
    hit = total = 0
    for p, g in zip(preds, golds):
        wanted = constituents(g, tag)
        hit += len(wanted & p.all_spans())
        total += len(wanted)
    return None if total == 0 else 100.0 * hit / total


def wordpiece_gold(gold: GoldTree, pieces: Sequence[Sequence[str]]) -> GoldTree:
    """Expand each preterminal ``(T w)`` into ``(T (WP p1) ... (WP pk))``."""
    if len(pieces) != len(gold.leaves()):
        raise ValueError(f"{len(pieces)} piece lists for {len(gold.leaves())} tokens")
    it = iter(pieces)

    def convert(node):
        if node.is_preterminal:
            ps = next(it)
            if not ps:
                raise ValueError(f"empty piece list for token {node.children[0]!r}")
            return GoldTree(node.label, [GoldTree("WP", [p]) for p in ps])
        return GoldTree(node.label, [convert(c) for c in node.children])

    return convert(gold)


def strip_punct(gold: GoldTree, punct_tags: Iterable[str] = PUNCT_TAGS) -> GoldTree | None:
    """Drop punctuation preterminals, empty nodes and the unary chains they leave; lower-case words.

    Returns None when nothing but punctuation remains.
    """
    punct = frozenset(punct_tags)

    def clean(node):
        if node.is_preterminal:
            if node.label in punct:
                return None
            return GoldTree(node.label, [node.children[0].lower()])
        kept = [k for k in (clean(c) for c in node.children if isinstance(c, GoldTree)) if k is not None]
        if not kept:
            return None
        if len(kept) == 1 and len(node.children) > 1 and not kept[0].is_preterminal:
            return GoldTree(node.label, kept[0].children)
        return GoldTree(node.label, kept)

    return clean(gold)


def format_report(
    f1_scores: Sequence[float],
    lengths: Sequence[int],
    recalls: dict[str, float | None] | None = None,
) -> str:
    """Tab-separated per-sentence table, then corpus means and per-tag recall."""
    lines = ["sentence\tlength\tf1\tflag"]
    for idx, (f, n) in enumerate(zip(f1_scores, lengths), start=1):
        lines.append(f"{idx}\t{n}\t{f:.2f}\t{'short' if n <= 2 else ''}")
    lines.append(f"corpus_f1\t\t{(mean(f1_scores) if f1_scores else 0.0):.2f}\t")
    for tag, r in (recalls or {}).items():
        lines.append(f"recall_{tag}\t\t{'undefined' if r is None else f'{r:.2f}'}\t")
    return "\n".join(lines) + "\n"
