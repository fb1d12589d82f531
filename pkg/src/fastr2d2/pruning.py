"""Linear-size chart encoding by committing to merges of adjacent atoms.

The chart keeps every cell up to height ``m`` (in current atoms) encoded.
While more than ``m`` atoms remain, two adjacent atoms are merged into a
non-splittable atom; cells crossing its boundary are dropped, the row is
re-indexed and the cells that are now missing at the top of the window
are encoded. Merge positions come either from the heuristic rule (highest
composition probability among second-level cells used by the best
sub-trees) or from a parser-supplied merge order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from fastr2d2.chart import ChartError, ChartTable, Composer, best_retained_split, fill_window
from fastr2d2.trees import BinaryTree, tree_from_split_sequence


@dataclass
class MergeOrder:
    """Queue of merge positions in the current (shrinking) bottom row."""

    order: list[int]

    def __len__(self) -> int:
        return len(self.order)

    @classmethod
    def from_split_sequence(cls, split_sequence: Sequence[int]) -> "MergeOrder":
        return cls(list(reversed(split_sequence)))


@dataclass
class MergeStep:
    pos: int
    span: tuple[int, int]
    removed: int
    encoded: int

    def to_line(self) -> str:
        return f"pos={self.pos} span={self.span[0]}-{self.span[1]} removed={self.removed} encoded={self.encoded}"


@dataclass
class PruneTrace:
    steps: list[MergeStep] = field(default_factory=list)
    initial_encoded: int = 0
    compositions: int = 0

    def to_text(self) -> str:
        return "".join(s.to_line() + "\n" for s in self.steps)


def next_merge_index(order: MergeOrder | list[int]) -> int:
    """Pop the head position and shift every later-merging position right of it."""
    queue = order.order if isinstance(order, MergeOrder) else order
    if not queue:
        raise IndexError("merge order is empty")
    i = queue.pop(0)
    for t, j in enumerate(queue):
        if j > i:
            queue[t] = j - 1
    return i


def validate_merge_order(order: Sequence[int], n: int) -> None:
    if sorted(order) != list(range(1, n)):
        raise ValueError(f"merge order {list(order)} is not a permutation of 1..{n - 1}")


def heuristic_select(table: ChartTable) -> int:
    """Position of the second-level cell to merge next.

    The best sub-tree of every top-of-window cell is recovered (noise-free
    descent); second-level cells on any of them are candidates, and the one
    with the highest composition probability wins, leftmost on ties.
    """
    length = len(table.atoms)
    if length < 2:
        raise ChartError("nothing left to merge")
    start_pos = {a[0]: x for x, a in enumerate(table.atoms, start=1)}
    end_pos = {a[1]: x for x, a in enumerate(table.atoms, start=1)}
    top = min(table.m, length)
    candidates: set[int] = set()

    def collect(span):
        x, y = start_pos[span[0]], end_pos[span[1]]
        if x == y:
            return
        if y - x == 1:
            candidates.add(x)
            return
        k = best_retained_split(table, table.cell(span))
        collect((span[0], k))
        collect((k + 1, span[1]))

    for x in range(1, length - top + 2):
        collect(table.span_over_atoms(x, x + top - 1))
    return max(sorted(candidates), key=lambda x: (table.cell(table.span_over_atoms(x, x + 1)).p, -x))


def crosses(span: tuple[int, int], block: tuple[int, int]) -> bool:
    """True if ``span`` partially overlaps ``block`` (neither contains the other)."""
    s, e = span
    b0, b1 = block
    return (s < b0 <= e < b1) or (b0 < s <= b1 < e)


def apply_merge(model: Composer, table: ChartTable, pos: int, rng=None, **kwargs) -> MergeStep:
    """Merge atoms ``pos`` and ``pos + 1`` into one non-splittable atom."""
    length = len(table.atoms)
    if not 1 <= pos < length:
        raise ValueError(f"merge position {pos} invalid for a row of {length} atoms")
    block = table.span_over_atoms(pos, pos + 1)
    if block not in table.cells:
        raise ChartError(f"second-level cell {block} is not encoded")
    doomed = [span for span in table.cells if crosses(span, block)]
    for span in doomed:
        del table.cells[span]
    table.atoms[pos - 1:pos + 1] = [block]
    table.merged.append(block)
    encoded = fill_window(model, table, rng, **kwargs)
    return MergeStep(pos, block, len(doomed), encoded)


def encode_pruned(
    model: Composer,
    embeddings: torch.Tensor,
    m: int,
    merge_order: MergeOrder | Sequence[int] | None = None,
    rng: np.random.Generator | None = None,
    **kwargs,
) -> tuple[ChartTable, PruneTrace]:
    """Encode a chart with at most ``m`` atoms per window.

    ``merge_order=None`` selects the heuristic strategy. Merging stops once
    the root fits in the window, so with ``m >= n`` this is exactly the
    full chart.
    """
    if m < 2:
        raise ValueError("window height m must be at least 2")
    n = embeddings.shape[0]
    if n < 1:
        raise ChartError("empty sentence")
    order = None
    if merge_order is not None:
        seq = merge_order.order if isinstance(merge_order, MergeOrder) else list(merge_order)
        validate_merge_order(seq, n)
        order = MergeOrder(list(seq))
    table = ChartTable.from_embeddings(embeddings, m)
    trace = PruneTrace()
    trace.initial_encoded = fill_window(model, table, rng, **kwargs)
    while len(table.atoms) > m:
        pos = heuristic_select(table) if order is None else next_merge_index(order)
        trace.steps.append(apply_merge(model, table, pos, rng, **kwargs))
    trace.compositions = table.compositions
    return table, trace


def tree_from_merge_order(split_sequence: Sequence[int]) -> BinaryTree:
    """Tree implied by a top-down split sequence (a merge order read backwards)."""
    return tree_from_split_sequence(split_sequence)
