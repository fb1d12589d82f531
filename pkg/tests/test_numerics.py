import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from fastr2d2 import numerics as nx


def test_default_dtype_is_double():
    assert torch.get_default_dtype() == torch.float64
    assert nx.tensor([1, 2]).dtype == torch.float64


def test_shape_mismatches_are_rejected():
    with pytest.raises(nx.ShapeError):
        nx.matmul(torch.ones(2, 3), torch.ones(2, 3))
    with pytest.raises(nx.ShapeError):
        nx.add(torch.ones(2, 3), torch.ones(4))
    with pytest.raises(nx.ShapeError):
        nx.multiply(torch.ones(3), torch.ones(2))
    with pytest.raises(nx.ShapeError):
        nx.concatenate([torch.ones(2, 3), torch.ones(3, 3)], dim=1)
    with pytest.raises(nx.ShapeError):
        nx.gather(torch.ones(3, 2), [3])
    with pytest.raises(nx.ShapeError):
        nx.batched_linear(torch.ones(2, 3), torch.ones(4, 3))


def test_non_finite_inputs_are_rejected():
    with pytest.raises(nx.NonFiniteError):
        nx.tensor([1.0, float("nan")])
    with pytest.raises(nx.NonFiniteError):
        nx.sigmoid(torch.tensor([float("inf")]))
    with pytest.raises(nx.NonFiniteError):
        nx.softmax(torch.tensor([0.0, float("nan")]))


def test_softmax_accepts_minus_inf_mask():
    out = nx.softmax(torch.tensor([0.0, float("-inf"), 0.0]))
    assert out.tolist() == [0.5, 0.0, 0.5]


def test_cross_entropy_uniform():
    lp = nx.log_softmax(torch.zeros(2))
    assert nx.cross_entropy(lp, 1).item() == pytest.approx(math.log(2))
    with pytest.raises(nx.ShapeError):
        nx.cross_entropy(lp, 2)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4))
def test_batched_linear_is_batch_invariant(batch, rows):
    torch.manual_seed(batch * 10 + rows)
    w, b = torch.randn(7, 5), torch.randn(7)
    x = torch.randn(batch, rows, 5)
    full = nx.batched_linear(x, w, b)
    for r in range(batch):
        assert torch.equal(full[r], nx.batched_linear(x[r:r + 1], w, b)[0])
    assert torch.allclose(full, x @ w.t() + b)


def test_check_gradient_matches_analytic():
    w = torch.randn(3, 3, requires_grad=True)
    x = torch.randn(3)
    err = nx.check_gradient(lambda: torch.tanh(w @ x).pow(2).sum(), [w])
    assert err < 1e-7


def test_check_gradient_detects_wrong_gradient():
    w = torch.randn(3, requires_grad=True)

    class Wrong(torch.autograd.Function):
        @staticmethod
        def forward(ctx, a):
            return (a * a).sum()

        @staticmethod
        def backward(ctx, g):
            return g * torch.ones(3)

    assert nx.check_gradient(lambda: Wrong.apply(w), [w]) > 1e-2


def test_backward_rejects_non_scalar():
    with pytest.raises(nx.ShapeError):
        nx.backward(torch.ones(2, requires_grad=True) * 2)


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    torch.manual_seed(0)
    params = {"a": torch.randn(3, 4), "b.c": torch.randn(5)}
    path = tmp_path / "p.npz"
    nx.save_parameters(path, params, {"note": "x = 1"})
    loaded, meta = nx.load_parameters(path)
    assert meta == {"note": "x = 1"}
    for k, v in params.items():
        assert torch.equal(loaded[k], v)


def test_checkpoint_version_is_checked(tmp_path):
    path = tmp_path / "p.npz"
    np.savez(path, **{"__version__": np.array([99]), "param/a": np.zeros(2)})
    with pytest.raises(ValueError, match="version"):
        nx.load_parameters(path)
