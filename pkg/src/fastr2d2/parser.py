"""Top-down split-point parser.

A BiLSTM reads the sentence and an MLP scores each of the n-1 split
points from the forward state left of it and the backward state right of
it. Trees come from recursively splitting at the best-scoring point;
training samples come from sorting scores perturbed by Gumbel noise.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from fastr2d2.numerics import LAYER_NORM_EPS, ShapeError
from fastr2d2.pruning import MergeOrder
from fastr2d2.trees import BinaryTree

SpanConstraints = list[tuple[int, int]]


@dataclass
class ParserConfig:
    vocab_size: int
    embed_dim: int = 64
    hidden_dim: int = 64
    layers: int = 2
    mlp_dim: int = 64


class TopDownParser(nn.Module):
    def __init__(self, config: ParserConfig):
        super().__init__()
        self.config = config
        self.embedding = nn.Embedding(config.vocab_size, config.embed_dim)
        self.lstm = nn.LSTM(
            config.embed_dim, config.hidden_dim, num_layers=config.layers, bidirectional=True, batch_first=True
        )
        self.mlp = nn.Linear(2 * config.hidden_dim, config.mlp_dim)
        self.norm = nn.LayerNorm(config.mlp_dim, eps=LAYER_NORM_EPS)
        self.out = nn.Linear(config.mlp_dim, 1)

    def score_embeddings(self, emb: torch.Tensor) -> torch.Tensor:
        n = emb.shape[0]
        if n < 2:
            raise ShapeError("score_splits needs at least two tokens")
        states, _ = self.lstm(emb.unsqueeze(0))
        h = self.config.hidden_dim
        fwd = states[0, :-1, :h]  # after reading tokens 1..i
        bwd = states[0, 1:, h:]  # after reading tokens n..i+1
        hidden = torch.nn.functional.gelu(self.norm(self.mlp(torch.cat([fwd, bwd], dim=-1))))
        return self.out(hidden).squeeze(-1)

    def score_splits(self, token_ids: Sequence[int] | torch.Tensor) -> torch.Tensor:
        """Scores v_1..v_{n-1}; v_i belongs to the boundary between tokens i and i+1."""
        ids = torch.as_tensor(token_ids, dtype=torch.long)
        return self.score_embeddings(self.embedding(ids))


def greedy_parse(scores: torch.Tensor | Sequence[float], start: int = 1) -> BinaryTree:
    """Split each span at its highest-scoring point, lowest index on ties."""
    v = scores.detach().tolist() if isinstance(scores, torch.Tensor) else list(scores)
    n = len(v) + 1

    def build(i, j):
        if i == j:
            return BinaryTree.leaf(i + start - 1)
        k = i
        for s in range(i + 1, j):
            if v[s - 1] > v[k - 1]:
                k = s
        return BinaryTree(i + start - 1, j + start - 1, k + start - 1, build(i, k), build(k + 1, j))

    return build(1, n)


def sample_split_sequence(
    scores: torch.Tensor | Sequence[float],
    noise: np.ndarray | np.random.Generator | None = None,
) -> list[int]:
    """Split points sorted by ``v + g`` in descending order (stable on ties).

    ``noise`` is either an explicit Gumbel vector, a generator to draw one
    from, or None for no noise.
    """
    v = np.asarray(scores.detach().numpy() if isinstance(scores, torch.Tensor) else scores, dtype=np.float64)
    if isinstance(noise, np.random.Generator):
        noise = noise.gumbel(size=v.shape)
    if noise is not None:
        noise = np.asarray(noise, dtype=np.float64)
        if noise.shape != v.shape:
            raise ShapeError(f"noise shape {noise.shape} does not match scores {v.shape}")
        v = v + noise
    return [int(i) + 1 for i in np.argsort(-v, kind="stable")]


def validate_constraints(constraints: SpanConstraints, n: int) -> None:
    for b, e in constraints:
        if not 1 <= b < e <= n:
            raise ValueError(f"constraint ({b}, {e}) invalid for sentence of length {n}")
    ordered = sorted(constraints, key=lambda s: (s[0], -s[1]))
    for idx, (b1, e1) in enumerate(ordered):
        for b2, e2 in ordered[idx + 1:]:
            if b2 > e1:
                break
            if e2 > e1:
                raise ValueError(f"constraints ({b1}, {e1}) and ({b2}, {e2}) partially overlap")


def apply_span_constraints(scores: torch.Tensor, constraints: SpanConstraints, c: float = 1.0) -> torch.Tensor:
    """Push split points inside constrained spans below every boundary.

    Each split point loses ``delta = max(v) - min(v) + c`` once per
    constraint that strictly contains it, so nested constraints keep their
    relative order.
    """
    if not constraints:
        return scores
    n = scores.shape[0] + 1
    validate_constraints(constraints, n)
    v = scores.detach()
    delta = float(v.max() - v.min()) + c
    depth = torch.zeros_like(v)
    for b, e in constraints:
        depth[b - 1:e - 1] += 1
    return scores - delta * depth


def merge_order_from(split_sequence: Sequence[int]) -> MergeOrder:
    return MergeOrder.from_split_sequence(split_sequence)
