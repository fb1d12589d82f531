"""Double-precision tensor plumbing on top of torch autograd.

torch supplies the reverse-mode machinery (the autograd graph is the
computation record); this module adds the checks and helpers the rest of
the package relies on: shape/finiteness validation, batch-invariant linear
maps, a finite-difference gradient checker and the checkpoint format.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import torch
import torch.nn.functional as F

DTYPE = torch.float64
LAYER_NORM_EPS = 1e-5
CHECKPOINT_VERSION = 1

torch.set_default_dtype(DTYPE)


class ShapeError(ValueError):
    pass


class NonFiniteError(ValueError):
    pass


def tensor(values, requires_grad: bool = False) -> torch.Tensor:
    t = torch.as_tensor(np.asarray(values, dtype=np.float64), dtype=DTYPE).clone()
    check_finite(t)
    return t.requires_grad_(requires_grad)


def check_finite(t: torch.Tensor, name: str = "input") -> torch.Tensor:
    if not bool(torch.isfinite(t).all()):
        raise NonFiniteError(f"{name} contains non-finite values")
    return t


def _require_last_dim(x: torch.Tensor, size: int, what: str) -> None:
    if x.shape[-1] != size:
        raise ShapeError(f"{what}: expected trailing dimension {size}, got shape {tuple(x.shape)}")


# ---------------------------------------------------------------------------
# forward ops

def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.dim() < 1 or b.dim() < 1 or a.shape[-1] != b.shape[0 if b.dim() == 1 else -2]:
        raise ShapeError(f"matmul: incompatible shapes {tuple(a.shape)} and {tuple(b.shape)}")
    check_finite(a), check_finite(b)
    return torch.matmul(a, b)


def add(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError:
        raise ShapeError(f"add: incompatible shapes {tuple(a.shape)} and {tuple(b.shape)}") from None
    check_finite(a), check_finite(b)
    return a + b


def multiply(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError:
        raise ShapeError(f"multiply: incompatible shapes {tuple(a.shape)} and {tuple(b.shape)}") from None
    check_finite(a), check_finite(b)
    return a * b


def concatenate(parts: Sequence[torch.Tensor], dim: int = -1) -> torch.Tensor:
    if not parts:
        raise ShapeError("concatenate: no inputs")
    ref = list(parts[0].shape)
    for p in parts[1:]:
        other = list(p.shape)
        if len(other) != len(ref) or any(
            a != b for k, (a, b) in enumerate(zip(ref, other)) if k != dim % len(ref)
        ):
            raise ShapeError(f"concatenate: incompatible shapes {tuple(ref)} and {tuple(other)}")
    return torch.cat(list(parts), dim=dim)


def gather(x: torch.Tensor, index: Sequence[int] | torch.Tensor, dim: int = 0) -> torch.Tensor:
    idx = torch.as_tensor(index, dtype=torch.long)
    if idx.numel() and (int(idx.min()) < 0 or int(idx.max()) >= x.shape[dim]):
        raise ShapeError(f"gather: index out of range for dimension of size {x.shape[dim]}")
    return torch.index_select(x, dim, idx)


def _check_logits(x: torch.Tensor, what: str) -> None:
    # -inf is a legitimate mask value; NaN and +inf are not
    if bool(torch.isnan(x).any() | torch.isposinf(x).any()):
        raise NonFiniteError(f"{what}: input contains NaN or +inf")


def softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    _check_logits(x, "softmax")
    return torch.softmax(x, dim=dim)


def log_softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    _check_logits(x, "log_softmax")
    return torch.log_softmax(x, dim=dim)


def sigmoid(x: torch.Tensor) -> torch.Tensor:
    check_finite(x)
    return torch.sigmoid(x)


def tanh(x: torch.Tensor) -> torch.Tensor:
    check_finite(x)
    return torch.tanh(x)


def layer_norm(
    x: torch.Tensor,
    weight: torch.Tensor | None = None,
    bias: torch.Tensor | None = None,
    eps: float = LAYER_NORM_EPS,
) -> torch.Tensor:
    check_finite(x)
    return F.layer_norm(x, (x.shape[-1],), weight, bias, eps)


def embedding(table: torch.Tensor, ids: Sequence[int] | torch.Tensor) -> torch.Tensor:
    return gather(table, ids, dim=0)


def cross_entropy(log_probs: torch.Tensor, target: int | Sequence[int] | torch.Tensor) -> torch.Tensor:
    """Mean negative log-likelihood of ``target`` under ``log_probs`` (rows are classes)."""
    lp = log_probs if log_probs.dim() == 2 else log_probs.unsqueeze(0)
    tgt = torch.as_tensor(target, dtype=torch.long).reshape(-1)
    if tgt.shape[0] != lp.shape[0]:
        raise ShapeError(f"cross_entropy: {lp.shape[0]} rows but {tgt.shape[0]} targets")
    if int(tgt.min()) < 0 or int(tgt.max()) >= lp.shape[1]:
        raise ShapeError(f"cross_entropy: target out of range for {lp.shape[1]} classes")
    return -lp.gather(1, tgt[:, None]).mean()


def reduce_sum(x: torch.Tensor) -> torch.Tensor:
    return x.sum()


def reduce_mean(x: torch.Tensor) -> torch.Tensor:
    return x.mean()


def batched_linear(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
    """``x @ weight.T + bias`` for ``x`` of shape (B, T, in).

    Routed through ``bmm`` with a broadcast weight so each batch row is
    computed by an identical kernel call: the result for a row does not
    depend on how many other rows share the batch (fused addmm does not
    give that guarantee).
    """
    if x.dim() != 3:
        raise ShapeError(f"batched_linear expects (B, T, in), got {tuple(x.shape)}")
    _require_last_dim(x, weight.shape[1], "batched_linear")
    out = torch.bmm(x, weight.t().expand(x.shape[0], -1, -1))
    if bias is not None:
        out = out + bias
    return out


# ---------------------------------------------------------------------------
# backward

def backward(loss: torch.Tensor) -> None:
    """Accumulate d loss / d parameter into every leaf's ``.grad``."""
    if loss.numel() != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {tuple(loss.shape)}")
    if not loss.requires_grad:
        return
    loss.backward()


def check_gradient(
    f: Callable[[], torch.Tensor],
    params: torch.Tensor | Iterable[torch.Tensor],
    step: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between autograd and central differences.

    ``f`` is re-evaluated with each coordinate of ``params`` nudged in place,
    so every stochastic choice inside it must be frozen. When ``max_coords``
    is set, a fixed random subset of coordinates per tensor is probed.
    Relative error uses max(|a|, |b|, 1e-6) in the denominator so that
    exactly-zero gradients compare on an absolute scale.
    """
    plist = [params] if isinstance(params, torch.Tensor) else list(params)
    for p in plist:
        p.grad = None
    with torch.enable_grad():
        loss = f()
        grads = torch.autograd.grad(loss, plist, allow_unused=True)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, g in zip(plist, grads):
        analytic = torch.zeros_like(p) if g is None else g.detach()
        flat = p.data.view(-1)
        coords = np.arange(flat.numel())
        if max_coords is not None and coords.size > max_coords:
            coords = rng.choice(coords, size=max_coords, replace=False)
        for c in coords:
            orig = flat[c].item()
            with torch.no_grad():
                flat[c] = orig + step
                up = f().item()
                flat[c] = orig - step
                down = f().item()
                flat[c] = orig
            numeric = (up - down) / (2 * step)
            a = analytic.reshape(-1)[c].item()
            if not (math.isfinite(numeric) and math.isfinite(a)):
                return math.inf
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# checkpoint file

def save_parameters(path, params: Mapping[str, torch.Tensor], meta: Mapping[str, str] | None = None) -> None:
    """Write ``{name -> array}`` as an .npz archive with a format version.

    Values are stored as little-endian float64 in row-major order, so a
    save/load round trip is bit-exact.
    """
    arrays = {f"param/{k}": v.detach().cpu().numpy().astype("<f8", copy=True) for k, v in params.items()}
    arrays["__version__"] = np.array([CHECKPOINT_VERSION], dtype="<i8")
    for k, v in (meta or {}).items():
        arrays[f"meta/{k}"] = np.array(str(v))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_parameters(path) -> tuple[dict[str, torch.Tensor], dict[str, str]]:
    with np.load(path, allow_pickle=False) as z:
        version = int(z["__version__"][0])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        params = {k[len("param/"):]: torch.from_numpy(z[k].copy()) for k in z.files if k.startswith("param/")}
        meta = {k[len("meta/"):]: str(z[k]) for k in z.files if k.startswith("meta/")}
    return params, meta
