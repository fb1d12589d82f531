from collections import Counter

import numpy as np
import pytest

from conftest import SpanStub
from fastr2d2.chart import encode_full
from fastr2d2.pruning import encode_pruned
from fastr2d2.sampler import SampledDerivation, sample_batch, sample_derivation
from fastr2d2.trees import all_binary_trees, tree_from_split_sequence

N = 4
PROBS = {
    (1, 1, 2): 0.9, (2, 2, 3): 0.3, (3, 3, 4): 0.6,
    (1, 1, 3): 0.2, (1, 2, 3): 0.7, (2, 2, 4): 0.5, (2, 3, 4): 0.4,
    (1, 1, 4): 0.35, (1, 2, 4): 0.8, (1, 3, 4): 0.55,
}


def oracle_tree_probs(probs, n):
    """Exact sampler distribution computed from the pinned probabilities alone.

    Noise-free subtree probability of a span is the best split's
    p * pt(left) * pt(right); the sampler picks split k of a visited span
    with weight proportional to that product.
    """
    pt = {(i, i): 1.0 for i in range(1, n + 1)}
    split_w = {}
    for length in range(2, n + 1):
        for i in range(1, n - length + 2):
            j = i + length - 1
            w = {k: probs[(i, k, j)] * pt[(i, k)] * pt[(k + 1, j)] for k in range(i, j)}
            split_w[(i, j)] = w
            pt[(i, j)] = max(w.values())
    out = {}
    for tree in all_binary_trees(1, n):
        prob = 1.0
        for node in tree.nodes():
            if not node.is_leaf:
                w = split_w[node.span]
                prob *= w[node.split] / sum(w.values())
        out[tree] = prob
    return out


def test_oracle_is_a_distribution():
    probs = oracle_tree_probs(PROBS, N)
    assert len(probs) == 5
    assert sum(probs.values()) == pytest.approx(1.0)


def test_sampled_trees_match_enumeration():
    table = encode_full(SpanStub(PROBS), SpanStub.embed(N))
    draws = 200_000
    counts = Counter(s.to_tree() for s in sample_batch(table, draws, np.random.default_rng(0)))
    exact = oracle_tree_probs(PROBS, N)
    tv = 0.5 * sum(abs(counts.get(t, 0) / draws - p) for t, p in exact.items())
    assert set(counts) <= set(exact)
    assert tv < 0.02


def test_frozen_oracle_values():
    # by hand: root weights 0.105, 0.432, 0.3465; (1,3) weights 0.06, 0.63; (2,4) weights 0.3, 0.12
    exact = oracle_tree_probs(PROBS, N)
    left = tree_from_split_sequence([3, 2, 1])
    right = tree_from_split_sequence([1, 2, 3])
    assert exact[left] == pytest.approx(0.3465 / 0.8835 * 0.63 / 0.69, abs=1e-12)
    assert exact[right] == pytest.approx(0.105 / 0.8835 * 0.3 / 0.42, abs=1e-12)


def test_sampling_is_deterministic_under_seed():
    table = encode_full(SpanStub(PROBS), SpanStub.embed(N))
    a = sample_batch(table, 50, np.random.default_rng(3))
    b = sample_batch(table, 50, np.random.default_rng(3))
    assert a == b


def test_derivation_visits_each_internal_node_once():
    table = encode_full(SpanStub(PROBS), SpanStub.embed(6))
    for s in sample_batch(table, 100, np.random.default_rng(1)):
        assert len(s.triples) == 5
        assert all(i <= k < j for k, i, j in s.triples)
        assert len(s.to_tree()) == 6


def test_fully_pruned_chart_has_one_derivation():
    split_sequence = [2, 4, 3, 1]
    table, _ = encode_pruned(SpanStub(), SpanStub.embed(5), 2, list(reversed(split_sequence)))
    trees = {s.to_tree() for s in sample_batch(table, 200, np.random.default_rng(2))}
    assert trees == {tree_from_split_sequence(split_sequence)}


def test_edge_cases():
    one = encode_full(SpanStub(), SpanStub.embed(1))
    assert sample_derivation(one, np.random.default_rng(0)) == SampledDerivation(())
    with pytest.raises(ValueError):
        sample_batch(one, 0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        SampledDerivation(((1, 1, 3), (1, 1, 3))).to_tree()
