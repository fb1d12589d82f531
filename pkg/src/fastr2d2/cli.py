"""Command-line entry points: pretrain, finetune, parse, eval, bench.

A model directory holds ``model.npz``, ``vocab.txt`` and ``config.txt``.
Flags given on the command line override values from ``--config``.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from statistics import mean

import torch

from fastr2d2.config import RunConfig
from fastr2d2.data import (
    Vocabulary,
    build_vocab_from_sentences,
    derive_constraints,
    load_piece_table,
    read_constraints,
    read_corpus,
    read_lines,
    to_pieces,
)
from fastr2d2.evaluation import corpus_f1, corpus_recall, format_report, parse_ptb
from fastr2d2.parser import sample_split_sequence
from fastr2d2.pipeline import FastR2D2
from fastr2d2.pruning import encode_pruned
from fastr2d2.training import forced_encode, train
from fastr2d2.trees import BinaryTree, tree_from_split_sequence

log = logging.getLogger("fastr2d2")

BUCKETS = ((0, 50), (50, 100), (100, 200), (200, 500))


class CliError(Exception):
    pass


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    over = {name: getattr(args, name, None) for name in ("seed", "m", "k", "epochs")}
    return cfg.replace(**over)


def _load_model(model_dir, args=None) -> tuple[FastR2D2, Vocabulary]:
    d = Path(model_dir)
    for name in ("model.npz", "vocab.txt"):
        if not (d / name).is_file():
            raise CliError(f"missing {d / name}")
    model = FastR2D2.load(d / "model.npz")
    if args is not None:
        model.config = model.config.replace(m=getattr(args, "m", None), k=getattr(args, "k", None))
    model.eval()
    return model, Vocabulary.load(d / "vocab.txt")


def _pieces(sentences, cfg: RunConfig):
    """Apply the word-piece table if one is configured; returns (sentences, constraints or None)."""
    if not cfg.piece_table:
        return sentences, None
    table = load_piece_table(cfg.piece_table)
    out, cons = [], []
    for words in sentences:
        pieces, counts = to_pieces(words, table)
        out.append(pieces)
        cons.append(derive_constraints(counts))
    return out, cons


def _constraints(path, count):
    if not path:
        return None
    cons = read_constraints(path)
    if len(cons) != count:
        raise CliError(f"{path}: {len(cons)} constraint lines for {count} sentences")
    return cons


def cmd_train(args) -> int:
    cfg = _config(args).replace(mode=args.command if args.command == "finetune" else "pretrain")
    if args.constraints:
        cfg = cfg.replace(constraints_path=args.constraints)
    sentences, piece_cons = _pieces(read_corpus(args.corpus), cfg)
    if not sentences:
        raise CliError(f"{args.corpus}: empty corpus")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    init = None
    if args.init:
        init, vocab = _load_model(args.init)
    elif cfg.vocab_path:
        vocab = Vocabulary.load(cfg.vocab_path)
    else:
        vocab = build_vocab_from_sentences(sentences, cfg.min_freq)
    vocab.save(out / "vocab.txt")
    cfg.save(out / "config.txt")
    constraints = _constraints(cfg.constraints_path, len(sentences)) or piece_cons
    labels = None
    if args.command == "finetune":
        if not args.labels:
            raise CliError("finetune needs --labels")
        labels = [int(x) for x in read_lines(args.labels) if x.strip()]
        if len(labels) != len(sentences):
            raise CliError(f"{len(labels)} labels for {len(sentences)} sentences")
    valid = valid_gold = None
    if args.valid_gold:
        valid_gold = [parse_ptb(line) for line in read_lines(args.valid_gold) if line.strip()]
        valid = [vocab.encode(g.leaves()) for g in valid_gold]
    train(
        [vocab.encode(s) for s in sentences],
        cfg,
        len(vocab),
        out,
        labels=labels,
        constraints=constraints,
        valid=valid,
        valid_gold=valid_gold,
        model=init,
    )
    print(f"saved {out / 'model.npz'}")
    return 0


def cmd_parse(args) -> int:
    model, vocab = _load_model(args.model, args)
    sentences, piece_cons = _pieces(read_corpus(args.input), model.config)
    constraints = _constraints(args.constraints, len(sentences)) or piece_cons
    out = open(args.output, "w") if args.output else sys.stdout
    try:
        for idx, words in enumerate(sentences):
            tree = model.parse(vocab.encode(words), args.mode, constraints[idx] if constraints else None)
            out.write(tree.to_brackets(words) + "\n")
    finally:
        if args.output:
            out.close()
    return 0


def _read_pred(path) -> list[BinaryTree]:
    preds = []
    for lineno, line in enumerate(read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            preds.append(BinaryTree.from_brackets(line)[0])
        except ValueError as exc:
            raise CliError(f"{path}:{lineno}: malformed tree ({exc})") from exc
    return preds


def cmd_eval(args) -> int:
    preds = _read_pred(args.pred)
    golds = []
    for lineno, line in enumerate(read_lines(args.gold), start=1):
        if line.strip():
            try:
                golds.append(parse_ptb(line))
            except ValueError as exc:
                raise CliError(f"{args.gold}:{lineno}: malformed tree ({exc})") from exc
    _, scores = corpus_f1(preds, golds)
    recalls = {tag: corpus_recall(preds, golds, tag) for tag in args.tags.split(",") if tag}
    report = format_report(scores, [len(p) for p in preds], recalls)
    if args.output:
        Path(args.output).write_text(report)
    sys.stdout.write(report)
    return 0


@torch.no_grad()
def bench_rows(model: FastR2D2, sentences, buckets=BUCKETS) -> list[dict]:
    """Forced (parser tree) vs pruned (parser-guided chart) encoding per length bucket.

    Trees and merge orders come from the parser beforehand; only the encoding is timed.
    Single-token sentences need no composition and are left out.
    """
    rows = []
    for lo, hi in buckets:
        group = [s for s in sentences if lo < len(s) <= hi and len(s) > 1]
        if not group:
            log.info("bucket %d-%d: no sentences, skipped", lo, hi)
            continue
        jobs = []
        for ids in group:
            split_seq = sample_split_sequence(model.parser.score_splits(ids))
            jobs.append((model.encoder.embed(ids), split_seq))
        forced_count = pruned_count = 0
        t0 = time.perf_counter()
        for emb, split_seq in jobs:
            forced_count += forced_encode(model.encoder, tree_from_split_sequence(split_seq, emb.shape[0]), emb)[1]
        t1 = time.perf_counter()
        for emb, split_seq in jobs:
            table, _ = encode_pruned(model.encoder, emb, model.config.m, list(reversed(split_seq)))
            pruned_count += table.compositions
        t2 = time.perf_counter()
        rows.append(
            {
                "bucket": f"{lo}-{hi}",
                "sentences": len(group),
                "mean_length": mean(len(s) for s in group),
                "forced_compositions": forced_count / len(group),
                "pruned_compositions": pruned_count / len(group),
                "forced_seconds": t1 - t0,
                "pruned_seconds": t2 - t1,
            }
        )
    return rows


def format_bench(rows) -> str:
    head = ["bucket", "sentences", "mean_length", "forced_compositions", "pruned_compositions", "forced_seconds", "pruned_seconds", "speedup"]
    lines = ["\t".join(head)]
    for r in rows:
        speed = r["pruned_seconds"] / r["forced_seconds"] if r["forced_seconds"] > 0 else float("inf")
        lines.append(
            f"{r['bucket']}\t{r['sentences']}\t{r['mean_length']:.1f}\t{r['forced_compositions']:.1f}\t"
            f"{r['pruned_compositions']:.1f}\t{r['forced_seconds']:.3f}\t{r['pruned_seconds']:.3f}\t{speed:.2f}"
        )
    return "\n".join(lines) + "\n"


def cmd_bench(args) -> int:
    model, vocab = _load_model(args.model, args)
    sentences = [vocab.encode(s) for s in read_corpus(args.input)]
    sys.stdout.write(format_bench(bench_rows(model, sentences)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fastr2d2", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, model=True):
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--m", type=int)
        p.add_argument("--k", type=int)
        if model:
            p.add_argument("--model", required=True, help="model directory")

    for name in ("pretrain", "finetune"):
        p = sub.add_parser(name)
        common(p, model=False)
        p.add_argument("--corpus", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--epochs", type=int)
        p.add_argument("--constraints")
        p.add_argument("--valid-gold", help="bracketed gold trees for model selection by F1")
        p.add_argument("--init", help="model directory to start from")
        if name == "finetune":
            p.add_argument("--labels", help="one integer label per corpus line")
        p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.add_argument("--mode", choices=("parser", "chart"), default="parser")
    p.add_argument("--constraints")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("eval")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--tags", default="NP,VP,PP,SBAR,ADJP,ADVP,NNP")
    p.add_argument("--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench")
    common(p)
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    torch.set_num_threads(1)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
