"""Forced vs pruned encoding time on random sentences, bucketed by length.

    python3 scripts/bench.py --per-bucket 100 --m 4

Uses a freshly initialized model at the default dimensions; the parser's
greedy split order drives both encoders, so only encoding is timed.
"""
from __future__ import annotations

import argparse

import torch

from fastr2d2.cli import BUCKETS, bench_rows, format_bench
from fastr2d2.config import RunConfig
from fastr2d2.pipeline import FastR2D2
from fastr2d2.synthetic import random_sentences


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--per-bucket", type=int, default=50)
    ap.add_argument("--m", type=int, default=4)
    ap.add_argument("--vocab", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-length", type=int, default=500)
    args = ap.parse_args(argv)
    torch.set_num_threads(1)
    torch.manual_seed(args.seed)
    model = FastR2D2(args.vocab, RunConfig(m=args.m, seed=args.seed))
    model.eval()
    sentences = []
    for lo, hi in BUCKETS:
        if lo < args.max_length:
            sentences += random_sentences(args.per_bucket, lo + 1, min(hi, args.max_length), args.vocab, seed=args.seed + lo)
    print(format_bench(bench_rows(model, sentences)), end="")


if __name__ == "__main__":
    main()
