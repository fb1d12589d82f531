"""The two-model system: chart encoder + top-down parser, with inference modes."""
from __future__ import annotations

import torch
from torch import nn

from fastr2d2.chart import best_tree
from fastr2d2.composition import CompositionConfig, CompositionModel
from fastr2d2.config import RunConfig
from fastr2d2.numerics import load_parameters, save_parameters
from fastr2d2.parser import ParserConfig, TopDownParser, apply_span_constraints, greedy_parse, sample_split_sequence
from fastr2d2.pruning import encode_pruned
from fastr2d2.trees import BinaryTree


class ClassifierHead(nn.Module):
    def __init__(self, dim: int, num_labels: int):
        super().__init__()
        self.hidden = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, num_labels)

    def forward(self, root: torch.Tensor) -> torch.Tensor:
        return torch.log_softmax(self.out(torch.tanh(self.hidden(root))), dim=-1)


class FastR2D2(nn.Module):
    def __init__(self, vocab_size: int, config: RunConfig):
        super().__init__()
        self.config = config
        self.encoder = CompositionModel(
            CompositionConfig(vocab_size, config.dim, config.layers, config.heads, config.ffn_dim)
        )
        self.parser = TopDownParser(
            ParserConfig(
                vocab_size, config.parser_embed_dim, config.parser_hidden_dim, config.parser_layers, config.parser_mlp_dim
            )
        )
        self.head = ClassifierHead(config.dim, config.num_labels)

    def encoder_parameters(self) -> list[nn.Parameter]:
        return list(self.encoder.parameters()) + list(self.head.parameters())

    def parser_parameters(self) -> list[nn.Parameter]:
        return list(self.parser.parameters())

    @torch.no_grad()
    def parser_tree(self, ids, constraints=None) -> BinaryTree:
        """Greedy top-down parse (noise-free)."""
        if len(ids) == 1:
            return BinaryTree.leaf(1)
        v = apply_span_constraints(self.parser.score_splits(ids), constraints or [], self.config.constraint_c)
        return greedy_parse(v)

    @torch.no_grad()
    def chart_tree(self, ids, constraints=None) -> BinaryTree:
        """Best tree of the chart pruned along the parser's greedy merge order."""
        n = len(ids)
        if n == 1:
            return BinaryTree.leaf(1)
        v = apply_span_constraints(self.parser.score_splits(ids), constraints or [], self.config.constraint_c)
        order = list(reversed(sample_split_sequence(v)))
        table, _ = encode_pruned(self.encoder, self.encoder.embed(ids), self.config.m, order)
        return best_tree(table)

    def parse(self, ids, mode: str = "parser", constraints=None) -> BinaryTree:
        if mode == "parser":
            return self.parser_tree(ids, constraints)
        if mode == "chart":
            return self.chart_tree(ids, constraints)
        raise ValueError(f"unknown parse mode {mode!r}")

    def save(self, path) -> None:
        save_parameters(path, self.state_dict(), {"config": self.config.to_text()})

    @classmethod
    def load(cls, path) -> "FastR2D2":
        params, meta = load_parameters(path)
        config = RunConfig.from_text(meta["config"])
        vocab_size = params["encoder.embedding.weight"].shape[0]
        model = cls(vocab_size, config)
        model.load_state_dict(params)
        return model
