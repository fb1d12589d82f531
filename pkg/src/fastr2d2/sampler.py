"""Top-down sampling of derivations from an encoded chart.

Starting at the root, each visited cell picks one of its retained splits
with probability proportional to that split's subtree probability, then
queues its non-terminal children (breadth-first). Cells inside merged
atoms keep a single live split, so their structure comes out fixed.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from fastr2d2.chart import ChartError, ChartTable
from fastr2d2.trees import BinaryTree

Triple = tuple[int, int, int]  # (split point, span start, span end)


@dataclass(frozen=True)
class SampledDerivation:
    triples: tuple[Triple, ...]

    def to_tree(self) -> BinaryTree:
        split_of = {(i, j): k for k, i, j in self.triples}
        if len(split_of) != len(self.triples):
            raise ValueError("derivation visits a span twice")
        n = self.triples[0][2] if self.triples else 1

        def build(i, j):
            if i == j:
                return BinaryTree.leaf(i)
            k = split_of[(i, j)]
            return BinaryTree(i, j, k, build(i, k), build(k + 1, j))

        return build(1, n)


class SplitDistributions:
    """Per-cell categorical distributions over retained splits, built lazily."""

    def __init__(self, table: ChartTable):
        self.table = table
        self._cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def __getitem__(self, span):
        hit = self._cache.get(span)
        if hit is None:
            cell = self.table.cell(span)
            live = self.table.retained(cell)
            if not live:
                raise ChartError(f"sampler reached cell {span} with no retained split")
            logw = cell.log_pt_k.detach().numpy()[live]
            w = np.exp(logw - logw.max())
            cum = np.cumsum(w / w.sum())
            cum[-1] = 1.0
            hit = (np.asarray([cell.splits[i] for i in live]), cum)
            self._cache[span] = hit
        return hit


def sample_derivation(
    table: ChartTable,
    rng: np.random.Generator,
    dists: SplitDistributions | None = None,
) -> SampledDerivation:
    dists = SplitDistributions(table) if dists is None else dists
    if table.n == 1:
        return SampledDerivation(())
    queue = deque([(1, table.n)])
    out = []
    while queue:
        i, j = queue.popleft()
        splits, cum = dists[(i, j)]
        k = int(splits[min(int(np.searchsorted(cum, rng.random(), side="right")), len(cum) - 1)])
        out.append((k, i, j))
        if k > i:
            queue.append((i, k))
        if k + 1 < j:
            queue.append((k + 1, j))
    return SampledDerivation(tuple(out))


def sample_batch(table: ChartTable, count: int, rng: np.random.Generator) -> list[SampledDerivation]:
    if count < 1:
        raise ValueError("sample count must be at least 1")
    dists = SplitDistributions(table)
    return [sample_derivation(table, rng, dists) for _ in range(count)]
