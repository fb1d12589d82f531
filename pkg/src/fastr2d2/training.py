"""Objectives and the optimization loop.

The encoder learns from the bidirectional LM loss (and, when labels are
given, classification on forced-encoding and chart roots). The parser
learns only from the KL term: the log-likelihood, under its split scores,
of derivations sampled from the encoder's chart.
"""
from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from fastr2d2.chart import ChartTable
from fastr2d2.composition import CompositionModel
from fastr2d2.config import RunConfig
from fastr2d2.data import batch_by_tokens
from fastr2d2.evaluation import GoldTree, corpus_f1
from fastr2d2.numerics import cross_entropy
from fastr2d2.parser import apply_span_constraints, greedy_parse, sample_split_sequence
from fastr2d2.pipeline import ClassifierHead, FastR2D2
from fastr2d2.pruning import encode_pruned
from fastr2d2.sampler import SampledDerivation, sample_batch
from fastr2d2.trees import BinaryTree

log = logging.getLogger(__name__)


@dataclass
class LossReport:
    bilm: torch.Tensor
    kl: torch.Tensor
    forced: torch.Tensor
    cky: torch.Tensor
    covered: int

    @property
    def total(self) -> torch.Tensor:
        return self.bilm + self.kl + self.forced + self.cky

    def floats(self) -> dict[str, float]:
        parts = {"bilm": self.bilm, "kl": self.kl, "forced": self.forced, "cky": self.cky, "total": self.total}
        return {k: float(v.detach()) for k, v in parts.items()}


def _zero() -> torch.Tensor:
    return torch.zeros(())


def bilm_loss(model: CompositionModel, table: ChartTable, token_ids: Sequence[int]) -> tuple[torch.Tensor, int]:
    """Sum of -log p(s_i | e_{1,i-1}, e_{i+1,n}) over tokens whose context cells are live.

    Returns the loss and the number of tokens covered; tokens whose exact
    prefix or suffix cell was pruned away are skipped.
    """
    n = len(token_ids)
    if n != table.n:
        raise ValueError(f"sentence has {n} tokens but chart has {table.n}")
    if n == 1:
        return _zero(), 0
    lefts, rights, targets = [], [], []
    for i in range(1, n + 1):
        left = table.cells.get((1, i - 1)) if i > 1 else None
        right = table.cells.get((i + 1, n)) if i < n else None
        if (i > 1 and left is None) or (i < n and right is None):
            continue
        lefts.append(None if left is None else left.e)
        rights.append(None if right is None else right.e)
        targets.append(token_ids[i - 1])
    if not targets:
        return _zero(), 0
    logp = model.predict_tokens(lefts, rights)
    return -logp.gather(1, torch.as_tensor(targets)[:, None]).sum(), len(targets)


def parser_kl_loss(scores: torch.Tensor, samples: Sequence[SampledDerivation]) -> torch.Tensor:
    """-(1/K) sum_k sum_t log softmax_{i_t..j_t-1}(v)[a_t].

    ``scores`` must be the unconstrained split scores. Identical
    (split, span) events across samples are counted once and weighted.
    """
    if not samples:
        raise ValueError("no samples")
    counts: dict[tuple[int, int, int], int] = defaultdict(int)
    for s in samples:
        for k, i, j in s.triples:
            if not i <= k < j:
                raise ValueError(f"sampled split {k} outside span ({i}, {j})")
            counts[(k, i, j)] += 1
    if not counts:
        return scores.sum() * 0.0
    spans = sorted({(i, j) for _, i, j in counts})
    row_of = {s: r for r, s in enumerate(spans)}
    n_splits = scores.shape[0]
    mask = torch.full((len(spans), n_splits), float("-inf"))
    for r, (i, j) in enumerate(spans):
        if j - 1 > n_splits:
            raise ValueError(f"span ({i}, {j}) exceeds sentence of {n_splits + 1} tokens")
        mask[r, i - 1:j - 1] = 0.0
    logp = torch.log_softmax(scores.unsqueeze(0) + mask, dim=-1)
    keys = sorted(counts)
    rows = torch.tensor([row_of[(i, j)] for _, i, j in keys])
    cols = torch.tensor([k - 1 for k, _, _ in keys])
    weights = torch.tensor([float(counts[key]) for key in keys])
    return -(weights * logp[rows, cols]).sum() / len(samples)


def forced_encode(model: CompositionModel, tree: BinaryTree, embeddings: torch.Tensor) -> tuple[torch.Tensor, int]:
    """Compose bottom-up along ``tree`` only, one batched call per tree level.

    A node's level is its height (leaves are 0); all nodes at a level are
    independent, so they go through a single ``compose_tensors`` call.
    """
    n = embeddings.shape[0]
    if len(tree) != n or tree.start != 1:
        raise ValueError(f"tree covers {tree.span}, sentence has {n} tokens")
    if n == 1:
        return embeddings[0], 0
    levels: dict[int, list[BinaryTree]] = defaultdict(list)

    def height(t):
        if t.is_leaf:
            return 0
        h = 1 + max(height(t.left), height(t.right))
        levels[h].append(t)
        return h

    height(tree)
    reps = {(i, i): embeddings[i - 1] for i in range(1, n + 1)}
    count = 0
    for h in sorted(levels):
        nodes = levels[h]
        lefts = torch.stack([reps[t.left.span] for t in nodes])
        rights = torch.stack([reps[t.right.span] for t in nodes])
        c, _ = model.compose_tensors(lefts, rights)
        count += len(nodes)
        for r, t in enumerate(nodes):
            reps[t.span] = c[r]
    return reps[tree.span], count


def classification_loss(head: ClassifierHead, root: torch.Tensor, label: int) -> torch.Tensor:
    logp = head(root)
    if not 0 <= label < logp.shape[-1]:
        raise ValueError(f"label {label} out of range for {logp.shape[-1]} classes")
    return cross_entropy(logp, label)


def combined_loss(
    model: FastR2D2,
    token_ids: Sequence[int],
    label: int | None = None,
    rng: np.random.Generator | None = None,
    *,
    constraints=None,
    samples: Sequence[SampledDerivation] | None = None,
    sample: bool = True,
) -> LossReport:
    """One example through the whole pipeline.

    With ``sample=True`` the merge order comes from Gumbel-perturbed parser
    scores and the chart uses Gumbel selection; otherwise both are
    noise-free. ``samples`` freezes the KL-loss derivations.
    """
    cfg = model.config
    n = len(token_ids)
    emb = model.encoder.embed(token_ids)
    if n == 1:
        zero = _zero()
        forced = cky = zero
        if label is not None:
            forced = cky = classification_loss(model.head, emb[0], label)
        return LossReport(zero, zero, forced, cky, 0)

    v_raw = model.parser.score_splits(token_ids)
    v_adj = apply_span_constraints(v_raw, constraints or [], cfg.constraint_c)
    order = sample_split_sequence(v_adj, rng if sample else None)
    chart_rng = rng if sample else None
    table, _ = encode_pruned(
        model.encoder, emb, cfg.m, list(reversed(order)), chart_rng, straight_through=cfg.straight_through
    )
    bilm, covered = bilm_loss(model.encoder, table, token_ids)
    if samples is None:
        samples = sample_batch(table, cfg.k, rng if rng is not None else np.random.default_rng(0))
    kl = parser_kl_loss(v_raw, samples)
    forced = cky = _zero()
    if label is not None:
        root, _ = forced_encode(model.encoder, greedy_parse(v_adj), emb)
        forced = classification_loss(model.head, root, label)
        cky = classification_loss(model.head, table.root.e, label)
    return LossReport(bilm, kl, forced, cky, covered)


# ---------------------------------------------------------------------------
# training loop


def make_optimizer(model: FastR2D2, cfg: RunConfig) -> torch.optim.Optimizer:
    return torch.optim.AdamW(
        [
            {"params": model.encoder_parameters(), "lr": cfg.lr_encoder},
            {"params": model.parser_parameters(), "lr": cfg.lr_parser},
        ],
        weight_decay=cfg.weight_decay,
    )


@torch.no_grad()
def validate(
    model: FastR2D2,
    sentences: Sequence[Sequence[int]],
    gold: Sequence[GoldTree | BinaryTree] | None = None,
    constraints=None,
    labels: Sequence[int] | None = None,
) -> dict[str, float]:
    """Noise-free bilm loss per covered token, plus parser-mode F1 when gold is given.

    With ``labels``, also the accuracy of the head on forced encodings of the parser's trees.
    """
    total, covered = 0.0, 0
    for idx, ids in enumerate(sentences):
        cons = constraints[idx] if constraints else None
        if len(ids) < 2:
            continue
        v = apply_span_constraints(model.parser.score_splits(ids), cons or [], model.config.constraint_c)
        order = sample_split_sequence(v)
        table, _ = encode_pruned(model.encoder, model.encoder.embed(ids), model.config.m, list(reversed(order)))
        loss, cov = bilm_loss(model.encoder, table, ids)
        total += float(loss)
        covered += cov
    out = {"bilm": total / max(covered, 1)}
    if gold is not None:
        preds = [model.parser_tree(ids, constraints[i] if constraints else None) for i, ids in enumerate(sentences)]
        out["f1"] = corpus_f1(preds, gold)[0]
    if labels is not None:
        hits = 0
        for idx, (ids, y) in enumerate(zip(sentences, labels)):
            tree = model.parser_tree(ids, constraints[idx] if constraints else None)
            root, _ = forced_encode(model.encoder, tree, model.encoder.embed(ids))
            hits += int(model.head(root).argmax().item() == y)
        out["accuracy"] = 100.0 * hits / max(len(sentences), 1)
    return out


def _record(fh, **fields) -> None:
    fh.write(json.dumps(fields, sort_keys=False) + "\n")
    fh.flush()


def train(
    corpus: Sequence[Sequence[int]],
    config: RunConfig,
    vocab_size: int,
    out_dir,
    *,
    labels: Sequence[int] | None = None,
    constraints=None,
    valid: Sequence[Sequence[int]] | None = None,
    valid_gold: Sequence[GoldTree | BinaryTree] | None = None,
    valid_constraints=None,
    valid_labels: Sequence[int] | None = None,
    model: FastR2D2 | None = None,
) -> FastR2D2:
    """Train and keep the best checkpoint (by validation F1, else task accuracy, else validation bilm).

    The returned model holds the best checkpoint's weights. Writes ``metrics.jsonl`` and ``model.npz`` into ``out_dir``. With
    ``config.mode == 'pretrain'`` labels are ignored.
    """
    if not corpus:
        raise ValueError("training corpus is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = FastR2D2(vocab_size, config)
    model.config = config
    optimizer = make_optimizer(model, config)
    use_labels = config.mode == "finetune" and labels is not None
    lengths = [len(s) for s in corpus]
    best_key, best_state = None, None
    step = 0
    with open(out / "metrics.jsonl", "w") as fh:
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(corpus))
            for batch in batch_by_tokens(lengths, order, config.batch_tokens):
                model.train()
                optimizer.zero_grad()
                reports = [
                    combined_loss(
                        model,
                        corpus[i],
                        labels[i] if use_labels else None,
                        rng,
                        constraints=constraints[i] if constraints else None,
                    )
                    for i in batch
                ]
                loss = torch.stack([r.total for r in reports]).mean()
                if loss.requires_grad:
                    loss.backward()
                optimizer.step()
                step += 1
                avg = {k: float(np.mean([r.floats()[k] for r in reports])) for k in ("bilm", "kl", "forced", "cky")}
                _record(fh, split="train", epoch=epoch, step=step, **avg)
            model.eval()
            if valid:
                metrics = validate(model, valid, valid_gold, valid_constraints, valid_labels if use_labels else None)
            else:
                head = min(len(corpus), 200)
                metrics = validate(model, corpus[:head], None, constraints, labels[:head] if use_labels else None)
            _record(fh, split="valid", epoch=epoch, step=step, **metrics)
            key = metrics.get("f1", metrics.get("accuracy", -metrics["bilm"]))
            log.info("epoch %d: %s", epoch, metrics)
            if best_key is None or key > best_key:
                best_key = key
                best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
                model.save(out / "model.npz")
    model.load_state_dict(best_state)
    return model
