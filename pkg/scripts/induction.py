"""Grammar-induction experiment on the toy grammar.

Pretrains on generated sentences (bilm + KL only), then scores parser-mode
and chart-mode trees against the generating brackets next to random and
right-branching baselines.

    python3 scripts/induction.py --out runs/induction --epochs 8
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np
import torch

from fastr2d2.config import RunConfig
from fastr2d2.data import build_vocab_from_sentences
from fastr2d2.evaluation import corpus_f1
from fastr2d2.synthetic import ToyGrammar, random_tree
from fastr2d2.training import train
from fastr2d2.trees import right_branching

# Settings used for the desk-scale induction check.
INDUCTION_CONFIG = RunConfig(
    dim=32,
    ffn_dim=64,
    heads=4,
    layers=1,
    parser_embed_dim=32,
    parser_hidden_dim=32,
    parser_layers=1,
    parser_mlp_dim=32,
    k=64,
    lr_encoder=1e-3,
    lr_parser=1e-2,
    batch_tokens=64,
    epochs=6,
)


def baselines(golds, seed=0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    lengths = [len(g.leaves()) for g in golds]
    return {
        "random": corpus_f1([random_tree(n, rng) for n in lengths], golds)[0],
        "right_branching": corpus_f1([right_branching(n) for n in lengths], golds)[0],
    }


def run(config: RunConfig, out_dir, train_size=2000, test_size=500, seed=0) -> dict[str, float]:
    grammar = ToyGrammar()
    train_trees = grammar.corpus(train_size, seed=seed)
    test_trees = grammar.corpus(test_size, seed=seed + 1)
    dev_trees = grammar.corpus(200, seed=seed + 2)
    vocab = build_vocab_from_sentences(t.leaves() for t in train_trees)
    train_ids = [vocab.encode(t.leaves()) for t in train_trees]
    test_ids = [vocab.encode(t.leaves()) for t in test_trees]
    dev_ids = [vocab.encode(t.leaves()) for t in dev_trees]
    start = time.perf_counter()
    model = train(
        train_ids, config, len(vocab), out_dir, valid=dev_ids, valid_gold=dev_trees
    )
    elapsed = time.perf_counter() - start
    model.eval()
    result = {
        "parser_f1": corpus_f1([model.parse(s, "parser") for s in test_ids], test_trees)[0],
        "chart_f1": corpus_f1([model.parse(s, "chart") for s in test_ids], test_trees)[0],
        **baselines(test_trees, seed),
        "train_seconds": elapsed,
    }
    return result


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/induction")
    ap.add_argument("--epochs", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--lr-encoder", type=float)
    ap.add_argument("--lr-parser", type=float)
    ap.add_argument("--m", type=int)
    ap.add_argument("--k", type=int)
    ap.add_argument("--train-size", type=int, default=2000)
    args = ap.parse_args(argv)
    torch.set_num_threads(1)
    cfg = INDUCTION_CONFIG.replace(
        epochs=args.epochs, seed=args.seed, lr_encoder=args.lr_encoder, lr_parser=args.lr_parser, m=args.m, k=args.k
    )
    print(json.dumps(run(cfg, args.out, train_size=args.train_size, seed=cfg.seed), indent=2))


if __name__ == "__main__":
    main()
