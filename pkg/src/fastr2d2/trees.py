"""Unlabeled binary trees over 1-based token positions, plus bracket I/O."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence


@dataclass(frozen=True)
class BinaryTree:
    start: int
    end: int
    split: int | None = None
    left: "BinaryTree | None" = None
    right: "BinaryTree | None" = None

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"bad span ({self.start}, {self.end})")
        if self.split is None:
            if self.start != self.end or self.left is not None or self.right is not None:
                raise ValueError(f"leaf must cover one token, got ({self.start}, {self.end})")
        else:
            ok = (
                self.left is not None
                and self.right is not None
                and self.start <= self.split < self.end
                and (self.left.start, self.left.end) == (self.start, self.split)
                and (self.right.start, self.right.end) == (self.split + 1, self.end)
            )
            if not ok:
                raise ValueError(f"children do not partition ({self.start}, {self.end}) at {self.split}")

    @classmethod
    def leaf(cls, i: int) -> "BinaryTree":
        return cls(i, i)

    @classmethod
    def node(cls, left: "BinaryTree", right: "BinaryTree") -> "BinaryTree":
        return cls(left.start, right.end, left.end, left, right)

    @property
    def is_leaf(self) -> bool:
        return self.split is None

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    def __len__(self) -> int:
        return self.end - self.start + 1

    def nodes(self) -> Iterator["BinaryTree"]:
        """Pre-order traversal."""
        stack = [self]
        while stack:
            t = stack.pop()
            yield t
            if not t.is_leaf:
                stack.append(t.right)
                stack.append(t.left)

    def internal_spans(self) -> set[tuple[int, int]]:
        return {t.span for t in self.nodes() if not t.is_leaf}

    def all_spans(self) -> set[tuple[int, int]]:
        return {t.span for t in self.nodes()}

    def leaves(self) -> list[int]:
        return [t.start for t in self.nodes() if t.is_leaf]

    def split_sequence(self) -> list[int]:
        """Split points in breadth-first (top-down) order."""
        out, queue = [], [self]
        while queue:
            t = queue.pop(0)
            if t.is_leaf:
                continue
            out.append(t.split)
            queue.extend([t.left, t.right])
        return out

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def to_brackets(self, tokens: Sequence[str] | None = None) -> str:
        def word(i):
            return str(i) if tokens is None else tokens[i - 1]

        if self.is_leaf:
            return f"( {word(self.start)} )"

        def render(t):
            if t.is_leaf:
                return word(t.start)
            return f"( {render(t.left)} {render(t.right)} )"

        return render(self)

    @classmethod
    def from_brackets(cls, text: str) -> tuple["BinaryTree", list[str]]:
        """Parse ``( ( a b ) c )``; returns the tree and its leaf tokens.

        A node with a single child collapses onto that child, so ``( a )``
        reads as a one-token tree.
        """
        toks = text.replace("(", " ( ").replace(")", " ) ").split()
        if not toks:
            raise ValueError("empty tree string")
        words: list[str] = []
        pos = 0

        def parse():
            nonlocal pos
            if pos >= len(toks):
                raise ValueError(f"unexpected end of tree: {text!r}")
            tok = toks[pos]
            if tok == ")":
                raise ValueError(f"unexpected ')' in {text!r}")
            if tok != "(":
                pos += 1
                words.append(tok)
                return cls.leaf(len(words))
            pos += 1
            kids = []
            while pos < len(toks) and toks[pos] != ")":
                kids.append(parse())
            if pos >= len(toks):
                raise ValueError(f"unbalanced brackets in {text!r}")
            pos += 1
            if len(kids) == 1:
                return kids[0]
            if len(kids) != 2:
                raise ValueError(f"node with {len(kids)} children is not binary in {text!r}")
            return cls.node(kids[0], kids[1])

        tree = parse()
        if pos != len(toks):
            raise ValueError(f"trailing input after tree in {text!r}")
        return tree, words


def tree_from_split_sequence(order: Sequence[int], n: int | None = None) -> BinaryTree:
    """The unique binary tree whose recursive splits follow ``order``.

    ``order`` lists split points top-down: each span is split at the
    earliest-listed split point falling inside it.
    """
    order = list(order)
    n = len(order) + 1 if n is None else n
    if sorted(order) != list(range(1, n)):
        raise ValueError(f"split sequence {order} is not a permutation of 1..{n - 1}")
    rank = {k: r for r, k in enumerate(order)}

    def build(i, j):
        if i == j:
            return BinaryTree.leaf(i)
        k = min(range(i, j), key=rank.__getitem__)
        return BinaryTree(i, j, k, build(i, k), build(k + 1, j))

    return build(1, n)


def right_branching(n: int) -> BinaryTree:
    t = BinaryTree.leaf(n)
    for i in range(n - 1, 0, -1):
        t = BinaryTree.node(BinaryTree.leaf(i), t)
    return t


def left_branching(n: int) -> BinaryTree:
    t = BinaryTree.leaf(1)
    for i in range(2, n + 1):
        t = BinaryTree.node(t, BinaryTree.leaf(i))
    return t


def all_binary_trees(i: int, j: int) -> list[BinaryTree]:
    if i == j:
        return [BinaryTree.leaf(i)]
    out = []
    for k in range(i, j):
        for lt in all_binary_trees(i, k):
            for rt in all_binary_trees(k + 1, j):
                out.append(BinaryTree(i, j, k, lt, rt))
    return out
