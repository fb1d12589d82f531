"""Run configuration: a flat ``key = value`` text file, overridable by flags."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path


@dataclass
class RunConfig:
    # composition encoder
    dim: int = 64
    layers: int = 2
    heads: int = 4
    ffn_dim: int = 128
    # top-down parser
    parser_embed_dim: int = 64
    parser_hidden_dim: int = 64
    parser_layers: int = 2
    parser_mlp_dim: int = 64
    # pruning / sampling
    m: int = 4
    k: int = 256
    constraint_c: float = 1.0
    straight_through: bool = True
    # optimization
    lr_encoder: float = 5e-5
    lr_parser: float = 1e-2
    weight_decay: float = 0.01
    batch_tokens: int = 512
    epochs: int = 1
    seed: int = 0
    # data
    vocab_path: str = ""
    constraints_path: str = ""
    piece_table: str = ""
    min_freq: int = 1
    mode: str = "pretrain"
    num_labels: int = 2

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m must be at least 2")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.lr_encoder <= 0 or self.lr_parser <= 0:
            raise ValueError("learning rates must be positive")
        if self.mode not in ("pretrain", "finetune"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.dim % self.heads:
            raise ValueError("dim must be divisible by heads")

    def replace(self, **overrides) -> "RunConfig":
        return dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            values[key] = _coerce(value, types[key])
        return cls(**values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text())


def _coerce(value: str, type_name: str):
    if type_name == "bool":
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if type_name == "int":
        return int(value)
    if type_name == "float":
        return float(value)
    return value
