"""Differentiable CKY chart: cell encoding with straight-through Gumbel selection.

Spans are 1-based inclusive over original token positions. A split point
``k`` of span ``(i, j)`` yields children ``(i, k)`` and ``(k + 1, j)``.
Subtree probabilities are kept in log space, so the product
``p~_k = p_k * p~_left * p~_right`` is a sum here.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np
import torch

from fastr2d2.trees import BinaryTree

Span = tuple[int, int]


class Composer(Protocol):
    def compose_tensors(self, lefts: torch.Tensor, rights: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        ...


class ChartError(ValueError):
    pass


@dataclass(eq=False)
class ChartCell:
    start: int
    end: int
    e: torch.Tensor
    log_p: torch.Tensor
    log_pt: torch.Tensor
    splits: tuple[int, ...] = ()
    c: torch.Tensor | None = None  # (S, d) candidate compositions
    log_p_k: torch.Tensor | None = None  # (S,)
    log_pt_k: torch.Tensor | None = None  # (S,)
    alpha: torch.Tensor | None = None  # (S,), one-hot in the forward pass

    @property
    def span(self) -> Span:
        return (self.start, self.end)

    @property
    def is_terminal(self) -> bool:
        return self.start == self.end

    @property
    def p(self) -> float:
        return float(self.log_p.detach().exp())

    @property
    def pt(self) -> float:
        return float(self.log_pt.detach().exp())

    def selected(self) -> int:
        """Index (into ``splits``) of the split chosen in the forward pass."""
        return int(torch.argmax(self.alpha.detach()))


@dataclass(eq=False)
class ChartTable:
    n: int
    m: int
    atoms: list[Span]
    cells: dict[Span, ChartCell] = field(default_factory=dict)
    merged: list[Span] = field(default_factory=list)
    compositions: int = 0

    @classmethod
    def from_embeddings(cls, embeddings: torch.Tensor, m: int) -> "ChartTable":
        n = embeddings.shape[0]
        if n < 1:
            raise ChartError("empty sentence")
        table = cls(n=n, m=m, atoms=[(i, i) for i in range(1, n + 1)])
        zero = torch.zeros((), dtype=embeddings.dtype)
        for i in range(1, n + 1):
            table.cells[(i, i)] = ChartCell(i, i, embeddings[i - 1], zero, zero)
        return table

    def is_live(self, span: Span) -> bool:
        return span in self.cells

    def cell(self, span: Span) -> ChartCell:
        try:
            return self.cells[span]
        except KeyError:
            raise ChartError(f"cell {span} is not live") from None

    @property
    def root(self) -> ChartCell:
        return self.cell((1, self.n))

    def retained(self, cell: ChartCell) -> list[int]:
        """Indices of the cell's splits whose two children are still live."""
        return [
            idx
            for idx, k in enumerate(cell.splits)
            if (cell.start, k) in self.cells and (k + 1, cell.end) in self.cells
        ]

    def span_over_atoms(self, x: int, y: int) -> Span:
        """Original-token span covered by atoms x..y (1-based, inclusive)."""
        return (self.atoms[x - 1][0], self.atoms[y - 1][1])

    def allowed_splits(self, x: int, y: int) -> list[int]:
        span = self.span_over_atoms(x, y)
        out = []
        for t in range(x, y):
            k = self.atoms[t - 1][1]
            if (span[0], k) in self.cells and (k + 1, span[1]) in self.cells:
                out.append(k)
        return out


def gumbel_straight_through(
    log_weights: torch.Tensor,
    noise: torch.Tensor | np.ndarray | None = None,
    *,
    choose: torch.Tensor | None = None,
    straight_through: bool = True,
) -> torch.Tensor:
    """One-hot selection along the last axis with a softmax backward path.

    The forward value is exactly one-hot at ``argmax(log_weights + noise)``
    (lowest index on ties); gradients flow through
    ``softmax(log_weights + noise)`` at temperature one. ``noise=None``
    means zero noise. ``choose`` overrides the selected index per row.
    With ``straight_through=False`` the selection carries no gradient.
    """
    if torch.isnan(log_weights).any() or torch.isposinf(log_weights).any():
        raise ChartError("log weights must be finite or -inf")
    if torch.isneginf(log_weights).all(dim=-1).any():
        raise ChartError("all candidate weights are -inf")
    scores = log_weights
    if noise is not None:
        scores = scores + torch.as_tensor(noise, dtype=log_weights.dtype)
    idx = torch.argmax(scores.detach(), dim=-1) if choose is None else choose
    hard = torch.nn.functional.one_hot(idx, scores.shape[-1]).to(scores.dtype)
    if not straight_through:
        return hard
    soft = torch.softmax(scores, dim=-1)
    return hard + (soft - soft.detach())


def encode_cells(
    model: Composer,
    table: ChartTable,
    requests: Sequence[tuple[int, int, Sequence[int]]],
    rng: np.random.Generator | None = None,
    *,
    forced: Mapping[Span, int] | None = None,
    straight_through: bool = True,
) -> list[ChartCell]:
    """Encode several cells with one batched composition call.

    Each request is ``(i, j, allowed_splits)``; all child cells must be
    live. Candidates are padded to a common width with -inf weights. The
    table's composition counter is advanced; cells are not inserted.
    """
    if not requests:
        return []
    lefts, rights, rows, cols, child_pt = [], [], [], [], []
    width = 0
    for r, (i, j, splits) in enumerate(requests):
        if not splits:
            raise ChartError(f"cell ({i}, {j}) has no allowed splits")
        width = max(width, len(splits))
        for col, k in enumerate(splits):
            if not i <= k < j:
                raise ChartError(f"split {k} outside span ({i}, {j})")
            lc, rc = table.cell((i, k)), table.cell((k + 1, j))
            lefts.append(lc.e)
            rights.append(rc.e)
            child_pt.append(lc.log_pt + rc.log_pt)
            rows.append(r)
            cols.append(col)
    c, log_p = model.compose_tensors(torch.stack(lefts), torch.stack(rights))
    table.compositions += len(lefts)
    log_pt = log_p + torch.stack(child_pt)

    n_cells, d = len(requests), c.shape[1]
    rows_t, cols_t = torch.tensor(rows), torch.tensor(cols)
    neg_inf = torch.full((n_cells, width), float("-inf"), dtype=c.dtype)
    scores = neg_inf.index_put((rows_t, cols_t), log_pt)
    pad_p = torch.zeros((n_cells, width), dtype=c.dtype).index_put((rows_t, cols_t), log_p)
    pad_pt = torch.zeros((n_cells, width), dtype=c.dtype).index_put((rows_t, cols_t), log_pt)
    pad_c = torch.zeros((n_cells, width, d), dtype=c.dtype).index_put((rows_t, cols_t), c)

    noise = None if rng is None else torch.from_numpy(rng.gumbel(size=(n_cells, width)))
    choose = None
    if forced:
        base = torch.argmax(scores.detach() if noise is None else (scores + noise).detach(), dim=-1)
        for r, (i, j, splits) in enumerate(requests):
            if (i, j) in forced:
                k = forced[(i, j)]
                if k not in splits:
                    raise ChartError(f"forced split {k} not available for cell ({i}, {j})")
                base[r] = list(splits).index(k)
        choose = base
    alpha = gumbel_straight_through(scores, noise, choose=choose, straight_through=straight_through)

    e = (alpha.unsqueeze(-1) * pad_c).sum(dim=1)
    cell_log_p = (alpha * pad_p).sum(dim=1)
    cell_log_pt = (alpha * pad_pt).sum(dim=1)

    out, offset = [], 0
    for r, (i, j, splits) in enumerate(requests):
        s = len(splits)
        out.append(
            ChartCell(
                i,
                j,
                e[r],
                cell_log_p[r],
                cell_log_pt[r],
                tuple(splits),
                c[offset:offset + s],
                log_p[offset:offset + s],
                log_pt[offset:offset + s],
                alpha[r, :s],
            )
        )
        offset += s
    return out


def encode_cell(
    model: Composer,
    table: ChartTable,
    i: int,
    j: int,
    allowed_splits: Sequence[int],
    rng: np.random.Generator | None = None,
    **kwargs,
) -> ChartCell:
    return encode_cells(model, table, [(i, j, allowed_splits)], rng, **kwargs)[0]


def fill_window(model: Composer, table: ChartTable, rng=None, **kwargs) -> int:
    """Encode every missing cell up to height ``m`` over the current atoms.

    Heights are processed bottom-up, one batched call per height. Returns
    the number of cells encoded.
    """
    count = 0
    length = len(table.atoms)
    for h in range(2, min(table.m, length) + 1):
        requests = []
        for x in range(1, length - h + 2):
            y = x + h - 1
            span = table.span_over_atoms(x, y)
            if span not in table.cells:
                requests.append((span[0], span[1], table.allowed_splits(x, y)))
        for cell in encode_cells(model, table, requests, rng, **kwargs):
            table.cells[cell.span] = cell
        count += len(requests)
    return count


def encode_full(model: Composer, embeddings: torch.Tensor, rng=None, **kwargs) -> ChartTable:
    """Unpruned O(n^3) chart over all n(n+1)/2 spans."""
    if embeddings.dim() != 2 or embeddings.shape[0] < 1:
        raise ChartError("encode_full needs a non-empty (n, d) embedding matrix")
    table = ChartTable.from_embeddings(embeddings, m=embeddings.shape[0])
    fill_window(model, table, rng, **kwargs)
    return table


def best_retained_split(table: ChartTable, cell: ChartCell) -> int:
    """Split point to follow when reading a tree off the chart.

    Only splits whose children are still live are eligible. Among those the
    forward-pass selection wins; if it was pruned away, the highest subtree
    probability does (lowest split on ties).
    """
    live = table.retained(cell)
    if not live:
        raise ChartError(f"cell {cell.span} has no live split")
    alpha = cell.alpha.detach().tolist()
    pt = cell.log_pt_k.detach().tolist()
    best = live[0]
    for idx in live[1:]:
        if (alpha[idx], pt[idx]) > (alpha[best], pt[best]):
            best = idx
    return cell.splits[best]


def best_tree(table: ChartTable) -> BinaryTree:
    """Top-down descent from the root along ``best_retained_split``."""
    def descend(span) -> BinaryTree:
        i, j = span
        if i == j:
            return BinaryTree.leaf(i)
        k = best_retained_split(table, table.cell(span))
        return BinaryTree(i, j, k, descend((i, k)), descend((k + 1, j)))

    return descend(table.root.span)
