"""The composition function and the masked-slot token predictor.

Both run the same small Transformer encoder over a 2- or 3-slot sequence:
``[summary, left, right]`` for composition and ``[mask, left?, right?]``
for token prediction. Every slot gets a learned role embedding; the
encoder output at slot 0 is the result.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
import torch.nn.functional as F

from fastr2d2.numerics import DTYPE, LAYER_NORM_EPS, ShapeError, batched_linear, check_finite

ROLE_SUMMARY, ROLE_MASK, ROLE_LEFT, ROLE_RIGHT = range(4)


@dataclass
class CompositionConfig:
    vocab_size: int
    dim: int = 64
    layers: int = 2
    heads: int = 4
    ffn_dim: int = 128

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be positive")


class EncoderLayer(nn.Module):
    """Pre-norm Transformer block. All linear maps are batch-invariant."""

    def __init__(self, dim: int, heads: int, ffn_dim: int):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)
        self.ff1 = nn.Linear(dim, ffn_dim)
        self.ff2 = nn.Linear(ffn_dim, dim)
        self.norm1 = nn.LayerNorm(dim, eps=LAYER_NORM_EPS)
        self.norm2 = nn.LayerNorm(dim, eps=LAYER_NORM_EPS)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        dh = d // self.heads
        h = self.norm1(x)
        q, k, v = batched_linear(h, self.qkv.weight, self.qkv.bias).split(d, dim=-1)
        q = q.reshape(b, t, self.heads, dh).transpose(1, 2)
        k = k.reshape(b, t, self.heads, dh).transpose(1, 2)
        v = v.reshape(b, t, self.heads, dh).transpose(1, 2)
        att = torch.softmax(torch.matmul(q, k.transpose(-1, -2)) / math.sqrt(dh), dim=-1)
        ctx = torch.matmul(att, v).transpose(1, 2).reshape(b, t, d)
        x = x + batched_linear(ctx, self.out.weight, self.out.bias)
        h = F.gelu(batched_linear(self.norm2(x), self.ff1.weight, self.ff1.bias))
        return x + batched_linear(h, self.ff2.weight, self.ff2.bias)


class CompositionModel(nn.Module):
    def __init__(self, config: CompositionConfig):
        super().__init__()
        self.config = config
        d = config.dim
        self.embedding = nn.Embedding(config.vocab_size, d)
        self.roles = nn.Parameter(torch.randn(4, d) * 0.1)
        self.slot_summary = nn.Parameter(torch.randn(d) * 0.1)
        self.slot_mask = nn.Parameter(torch.randn(d) * 0.1)
        self.layers = nn.ModuleList(EncoderLayer(d, config.heads, config.ffn_dim) for _ in range(config.layers))
        self.final_norm = nn.LayerNorm(d, eps=LAYER_NORM_EPS)
        self.prob_head = nn.Linear(d, 1)
        self.vocab_proj = nn.Linear(d, config.vocab_size)
        nn.init.normal_(self.embedding.weight, std=0.5)

    @property
    def dim(self) -> int:
        return self.config.dim

    def embed(self, token_ids) -> torch.Tensor:
        ids = torch.as_tensor(token_ids, dtype=torch.long)
        if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= self.config.vocab_size):
            raise ShapeError(f"token id out of range for vocabulary of {self.config.vocab_size}")
        return self.embedding(ids)

    def _encode(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers:
            x = layer(x)
        return self.final_norm(x[:, 0])

    def compose_tensors(self, lefts: torch.Tensor, rights: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Batched composition: (P, d) x (P, d) -> (c: (P, d), log p: (P,)).

        Row r of the output depends only on row r of the inputs, bit for bit.
        """
        d = self.dim
        if lefts.dim() != 2 or lefts.shape != rights.shape or lefts.shape[1] != d:
            raise ShapeError(
                f"compose: expected two (P, {d}) inputs, got {tuple(lefts.shape)} and {tuple(rights.shape)}"
            )
        check_finite(lefts, "left input"), check_finite(rights, "right input")
        p_count = lefts.shape[0]
        summary = (self.slot_summary + self.roles[ROLE_SUMMARY]).expand(p_count, d)
        x = torch.stack([summary, lefts + self.roles[ROLE_LEFT], rights + self.roles[ROLE_RIGHT]], dim=1)
        c = self._encode(x)
        logit = batched_linear(c.unsqueeze(1), self.prob_head.weight, self.prob_head.bias).reshape(p_count)
        return c, F.logsigmoid(logit)

    def compose(self, e_left: torch.Tensor, e_right: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if e_left.shape != (self.dim,) or e_right.shape != (self.dim,):
            raise ShapeError(f"compose: expected ({self.dim},) vectors, got {tuple(e_left.shape)}, {tuple(e_right.shape)}")
        c, log_p = self.compose_tensors(e_left[None], e_right[None])
        return c[0], log_p[0].exp()

    def compose_batch(self, pairs) -> list[tuple[torch.Tensor, torch.Tensor]]:
        if not pairs:
            raise ValueError("compose_batch: empty batch")
        lefts = torch.stack([l for l, _ in pairs])
        rights = torch.stack([r for _, r in pairs])
        c, log_p = self.compose_tensors(lefts, rights)
        p = log_p.exp()
        return [(c[i], p[i]) for i in range(len(pairs))]

    def predict_tokens(self, lefts: list[torch.Tensor | None], rights: list[torch.Tensor | None]) -> torch.Tensor:
        """Log-distributions over the vocabulary, one row per query.

        Queries are grouped by which contexts are present so each group runs
        as a single fixed-length batch; absent contexts are left out of the
        input sequence rather than padded.
        """
        if len(lefts) != len(rights):
            raise ShapeError("predict_tokens: context lists differ in length")
        d = self.dim
        mask = self.slot_mask + self.roles[ROLE_MASK]
        out = [None] * len(lefts)
        groups: dict[tuple[bool, bool], list[int]] = {}
        for idx, (l, r) in enumerate(zip(lefts, rights)):
            if l is None and r is None:
                raise ValueError("predict_token needs at least one context")
            groups.setdefault((l is not None, r is not None), []).append(idx)
        for (has_l, has_r), idxs in groups.items():
            slots = [mask.expand(len(idxs), d)]
            if has_l:
                slots.append(torch.stack([lefts[i] for i in idxs]) + self.roles[ROLE_LEFT])
            if has_r:
                slots.append(torch.stack([rights[i] for i in idxs]) + self.roles[ROLE_RIGHT])
            h = self._encode(torch.stack(slots, dim=1))
            logp = torch.log_softmax(batched_linear(h.unsqueeze(1), self.vocab_proj.weight, self.vocab_proj.bias)[:, 0], -1)
            for row, i in enumerate(idxs):
                out[i] = logp[row]
        return torch.stack(out)

    def predict_token(self, left_context: torch.Tensor | None, right_context: torch.Tensor | None) -> torch.Tensor:
        return self.predict_tokens([left_context], [right_context])[0]
