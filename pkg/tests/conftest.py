"""Shared fixtures: small random models and a pinned-probability stub composer."""
from __future__ import annotations

import math

import numpy as np
import pytest
import torch

from fastr2d2.composition import CompositionConfig, CompositionModel
from fastr2d2.config import RunConfig
from fastr2d2.parser import ParserConfig, TopDownParser
from fastr2d2.pipeline import FastR2D2

torch.set_num_threads(1)


class SpanStub:
    """Composer whose outputs are readable.

    A leaf ``i`` is embedded as ``[i, i]`` and composing ``[i, k]`` with
    ``[k+1, j]`` gives ``[i, j]``, so every representation names its span.
    The composition probability of split ``k`` of ``(i, j)`` is looked up in
    ``probs[(i, k, j)]`` (default 0.5).
    """

    def __init__(self, probs: dict[tuple[int, int, int], float] | None = None):
        self.probs = dict(probs or {})
        self.calls = 0

    @staticmethod
    def embed(n: int) -> torch.Tensor:
        return torch.tensor([[float(i), float(i)] for i in range(1, n + 1)])

    def compose_tensors(self, lefts, rights):
        self.calls += lefts.shape[0]
        c = torch.stack([lefts[:, 0], rights[:, 1]], dim=1)
        logs = []
        for l, r in zip(lefts.tolist(), rights.tolist()):
            i, k, j = int(round(l[0])), int(round(l[1])), int(round(r[1]))
            logs.append(math.log(self.probs.get((i, k, j), 0.5)))
        return c, torch.tensor(logs)


@pytest.fixture
def stub():
    return SpanStub()


def small_encoder(vocab=12, dim=8, layers=1, heads=2, seed=0) -> CompositionModel:
    torch.manual_seed(seed)
    return CompositionModel(CompositionConfig(vocab, dim=dim, layers=layers, heads=heads, ffn_dim=2 * dim))


def small_parser(vocab=12, seed=0) -> TopDownParser:
    torch.manual_seed(seed)
    return TopDownParser(ParserConfig(vocab, embed_dim=6, hidden_dim=5, layers=1, mlp_dim=7))


def small_config(**over) -> RunConfig:
    base = dict(
        dim=8, ffn_dim=16, heads=2, layers=1,
        parser_embed_dim=6, parser_hidden_dim=5, parser_layers=1, parser_mlp_dim=7,
        k=8, batch_tokens=32,
    )
    base.update(over)
    return RunConfig(**base)


def small_system(vocab=12, seed=0, **over) -> FastR2D2:
    torch.manual_seed(seed)
    return FastR2D2(vocab, small_config(**over))


@pytest.fixture
def encoder():
    return small_encoder()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
