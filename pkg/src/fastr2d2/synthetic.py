"""Toy corpora for desk-scale experiments.

``ToyGrammar`` is a small deterministic bracketing grammar: every sentence
has exactly one derivation, so the generating brackets are an unambiguous
gold standard. Words inside a phrase agree on features (number between
determiner and noun, noun class between adjective, noun, verb and
preposition, tense between verb and adverb), which is the distributional
cue a grammar learner can pick up. Left- and right-attaching rules are
mixed so a right-branching guess is not already optimal.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fastr2d2.evaluation import GoldTree
from fastr2d2.trees import BinaryTree, tree_from_split_sequence

NUMBERS = ("sg", "pl")
CLASSES = ("animal", "object")
TENSES = ("past", "present")

LEXICON: dict[tuple[str, ...], list[str]] = {
    ("Det", "sg"): ["a", "every", "one"],
    ("Det", "pl"): ["some", "many", "two"],
    ("N", "sg", "animal"): ["dog", "cat", "fox", "cow"],
    ("N", "pl", "animal"): ["dogs", "cats", "foxes", "cows"],
    ("N", "sg", "object"): ["box", "cup", "rock", "hat"],
    ("N", "pl", "object"): ["boxes", "cups", "rocks", "hats"],
    ("Adj", "animal"): ["hungry", "sleepy", "wild"],
    ("Adj", "object"): ["heavy", "empty", "broken"],
    ("V", "past", "animal"): ["chased", "fed", "petted"],
    ("V", "present", "animal"): ["chases", "feeds", "pets"],
    ("V", "past", "object"): ["dropped", "carried", "opened"],
    ("V", "present", "object"): ["drops", "carries", "opens"],
    ("Adv", "past"): ["yesterday", "earlier"],
    ("Adv", "present"): ["now", "today"],
    ("P", "animal"): ["near", "beside"],
    ("P", "object"): ["under", "inside"],
}


@dataclass
class ToyGrammar:
    """S -> NP VP | S1 Adv;  NP -> Det N | Det AN | NP0 PP;  VP -> V NP | VP0 Adv."""

    lexicon: dict[tuple[str, ...], list[str]] = None

    def __post_init__(self):
        if self.lexicon is None:
            self.lexicon = dict(LEXICON)

    def generate(self, rng: np.random.Generator) -> GoldTree:
        def pick(options):
            return options[int(rng.integers(len(options)))]

        def word(*key):
            return GoldTree(key[0], [pick(self.lexicon[key])])

        def np0(num, cls):
            return GoldTree("NP0", [word("Det", num), word("N", num, cls)])

        def noun_phrase(label="NP"):
            num, cls = pick(NUMBERS), pick(CLASSES)
            kind = int(rng.integers(3))
            if kind == 0:
                return GoldTree(label, [word("Det", num), word("N", num, cls)]), cls
            if kind == 1:
                an = GoldTree("AN", [word("Adj", cls), word("N", num, cls)])
                return GoldTree(label, [word("Det", num), an]), cls
            inner = pick(CLASSES)
            pp = GoldTree("PP", [word("P", inner), np0(pick(NUMBERS), inner)])
            return GoldTree(label, [np0(num, cls), pp]), cls

        def verb_phrase(tense):
            obj = pick(CLASSES)
            if rng.integers(2) == 0:
                np_tree, _ = noun_phrase()
                # the verb selects its object's class
                while noun_class(np_tree) != obj:
                    np_tree, _ = noun_phrase()
                return GoldTree("VP", [word("V", tense, obj), np_tree])
            vp0 = GoldTree("VP0", [word("V", tense, obj), np0(pick(NUMBERS), obj)])
            return GoldTree("VP", [vp0, word("Adv", tense)])

        tense = pick(TENSES)
        subject, _ = noun_phrase()
        if rng.integers(2) == 0:
            return GoldTree("S", [subject, verb_phrase(tense)])
        s1 = GoldTree("S1", [subject, verb_phrase(tense)])
        return GoldTree("S", [s1, word("Adv", tense)])

    def corpus(self, count: int, seed: int = 0, min_len: int = 1, max_len: int = 10**9) -> list[GoldTree]:
        """``count`` trees whose yield length lies in [min_len, max_len]."""
        rng = np.random.default_rng(seed)
        out = []
        while len(out) < count:
            t = self.generate(rng)
            if min_len <= len(t.leaves()) <= max_len:
                out.append(t)
        return out


def noun_class(np_tree: GoldTree) -> str:
    """Class of an NP's head noun (the first noun under it)."""
    for word in np_tree.leaves():
        for (cat, *feats), words in LEXICON.items():
            if cat == "N" and word in words:
                return feats[-1]
    raise ValueError(f"no noun in {np_tree}")


def random_tree(n: int, rng: np.random.Generator) -> BinaryTree:
    """Tree from a uniformly random split order (the usual random baseline)."""
    if n == 1:
        return BinaryTree.leaf(1)
    return tree_from_split_sequence([int(k) for k in rng.permutation(np.arange(1, n))], n)


def random_sentences(count: int, lo: int, hi: int, vocab_size: int, seed: int = 0) -> list[list[int]]:
    """Token-id sentences with lengths uniform in [lo, hi]; ids avoid the special slots 0 and 1."""
    rng = np.random.default_rng(seed)
    return [rng.integers(2, vocab_size, size=int(rng.integers(lo, hi + 1))).tolist() for _ in range(count)]


def marker_task(
    count: int, length: int, vocab_size: int, markers: Sequence[int] = (2, 3), seed: int = 0
) -> tuple[list[list[int]], list[int]]:
    """Sentences containing both markers once; label 1 when the first marker precedes the second."""
    if vocab_size <= max(markers) + 1:
        raise ValueError("vocab too small for markers plus filler")
    rng = np.random.default_rng(seed)
    a, b = markers
    fillers = [t for t in range(2, vocab_size) if t not in markers]
    sents, labels = [], []
    for _ in range(count):
        s = [fillers[int(rng.integers(len(fillers)))] for _ in range(length)]
        i, j = rng.choice(length, size=2, replace=False)
        s[i], s[j] = a, b
        sents.append(s)
        labels.append(int(i < j))
    return sents, labels
