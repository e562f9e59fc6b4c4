"""Dense float64 tensors with taped reverse-mode differentiation.

Deliberately minimal: only the primitives the attention classifier and its
explainers need. Every differentiable op validates shapes eagerly and, when a
tape is supplied, registers an exact vector-Jacobian product for each parent
that requires gradients. Replaying the tape in reverse visits each recorded
node exactly once, so gradients are bitwise deterministic for a fixed tape.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeMismatch(ValueError):
    pass


class UnsortedSegments(ValueError):
    pass


class EmptyMask(ValueError):
    pass


class Tensor:
    """A dense array plus a requires-grad flag. Data is row-major numpy."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float64):
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


# A pull is (parent, vjp) where vjp maps the output gradient to the parent's.
Pull = tuple[Tensor, Callable[[np.ndarray], np.ndarray]]


class Tape:
    """Execution-ordered op record; execution order is a topological order."""

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Pull, ...]]] = []

    def __len__(self) -> int:
        return len(self._records)


def _finish(out: Tensor, tape: Tape | None, pulls: Sequence[Pull]) -> Tensor:
    live = tuple((p, fn) for p, fn in pulls if p.requires_grad)
    if live:
        out.requires_grad = True
        if tape is not None:
            tape._records.append((out, live))
    return out


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Accumulate gradients of a scalar loss w.r.t. every tensor on the tape.

    Returns a map keyed by tensor identity; leaves (tensors created with
    requires_grad=True) keep their entries, intermediate entries are popped
    once consumed so each node is traversed exactly once.
    """
    if loss.data.size != 1:
        raise ShapeMismatch(f"loss must be scalar, got shape {loss.data.shape}")
    grads: dict[Tensor, np.ndarray] = {loss: np.ones_like(loss.data)}
    for out, pulls in reversed(tape._records):
        g = grads.get(out)
        if g is None:
            continue
        for parent, vjp in pulls:
            pg = vjp(g)
            acc = grads.get(parent)
            grads[parent] = pg if acc is None else acc + pg
        if out is not loss:
            del grads[out]
    return grads


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """2-D @ 2-D or 2-D @ 1-D product. Grads: dA = g·Bᵀ, dB = Aᵀ·g."""
    if a.ndim != 2 or b.ndim not in (1, 2):
        raise ShapeMismatch(f"matmul supports (n,k)@(k,m) or (n,k)@(k,); got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"inner dimensions differ: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    if b.ndim == 2:
        pulls = (
            (a, lambda g: g @ b.data.T),
            (b, lambda g: a.data.T @ g),
        )
    else:
        pulls = (
            (a, lambda g: np.outer(g, b.data)),
            (b, lambda g: a.data.T @ g),
        )
    return _finish(out, tape, pulls)


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Elementwise sum; also accepts (n,d) + (d,) row-bias broadcast."""
    if a.shape == b.shape:
        out = Tensor(a.data + b.data)
        pulls = ((a, lambda g: g), (b, lambda g: g))
    elif a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        out = Tensor(a.data + b.data)
        pulls = ((a, lambda g: g), (b, lambda g: g.sum(axis=0)))
    else:
        raise ShapeMismatch(f"cannot add {a.shape} and {b.shape}")
    return _finish(out, tape, pulls)


def mul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"cannot multiply {a.shape} and {b.shape}")
    out = Tensor(a.data * b.data)
    pulls = ((a, lambda g: g * b.data), (b, lambda g: g * a.data))
    return _finish(out, tape, pulls)


def scale_rows(x: Tensor, s: Tensor, tape: Tape | None = None) -> Tensor:
    """Multiply row i of x (m,d) by s[i] (m,)."""
    if x.ndim != 2 or s.ndim != 1 or x.shape[0] != s.shape[0]:
        raise ShapeMismatch(f"scale_rows needs (m,d) and (m,); got {x.shape}, {s.shape}")
    out = Tensor(x.data * s.data[:, None])
    pulls = (
        (x, lambda g: g * s.data[:, None]),
        (s, lambda g: (g * x.data).sum(axis=1)),
    )
    return _finish(out, tape, pulls)


def concat(tensors: Sequence[Tensor], axis: int = 0, tape: Tape | None = None) -> Tensor:
    if not tensors:
        raise ShapeMismatch("concat of zero tensors")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    offsets = np.cumsum([0] + [t.data.shape[axis] for t in tensors])

    def make_pull(lo, hi):
        def pull(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return g[tuple(sl)]
        return pull

    pulls = tuple((t, make_pull(offsets[i], offsets[i + 1])) for i, t in enumerate(tensors))
    return _finish(out, tape, pulls)


def leaky_relu(x: Tensor, slope: float = 0.2, tape: Tape | None = None) -> Tensor:
    """y = x if x > 0 else slope·x. Subgradient at 0 takes the negative branch."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f"slope must be in (0,1), got {slope}")
    out = Tensor(np.where(x.data > 0, x.data, slope * x.data))
    pulls = ((x, lambda g: g * np.where(x.data > 0, 1.0, slope)),)
    return _finish(out, tape, pulls)


def elu(x: Tensor, tape: Tape | None = None) -> Tensor:
    neg = np.expm1(np.minimum(x.data, 0.0))
    out = Tensor(np.where(x.data > 0, x.data, neg))
    # d/dx = 1 on the positive branch, e^x on the negative one
    pulls = ((x, lambda g: g * np.where(x.data > 0, 1.0, neg + 1.0)),)
    return _finish(out, tape, pulls)


def sigmoid(x: Tensor, tape: Tape | None = None) -> Tensor:
    d = x.data
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor(y)
    pulls = ((x, lambda g: g * y * (1.0 - y)),)
    return _finish(out, tape, pulls)


def gather_rows(x: Tensor, indices: np.ndarray, tape: Tape | None = None) -> Tensor:
    """Pick rows x[indices]; gradient scatter-adds back."""
    idx = np.asarray(indices, dtype=np.int64)
    out = Tensor(x.data[idx])

    def pull(g):
        gz = np.zeros_like(x.data)
        np.add.at(gz, idx, g)
        return gz

    return _finish(out, tape, ((x, pull),))


def embed_row(vec: Tensor, row: int, n_rows: int, tape: Tape | None = None) -> Tensor:
    """Place a (d,) vector as row `row` of an otherwise-zero (n_rows, d) matrix."""
    if vec.ndim != 1:
        raise ShapeMismatch(f"embed_row needs a vector, got {vec.shape}")
    data = np.zeros((n_rows, vec.shape[0]), dtype=vec.data.dtype)
    data[row] = vec.data
    out = Tensor(data)
    return _finish(out, tape, ((vec, lambda g: g[row].copy()),))


def segment_sum(x: Tensor, segments: np.ndarray, n_segments: int, tape: Tape | None = None) -> Tensor:
    """Sum rows of x (m,d) into their segment slot; segments need not be dense."""
    seg = np.asarray(segments, dtype=np.int64)
    if x.shape[0] != seg.shape[0]:
        raise ShapeMismatch(f"segment ids ({seg.shape[0]}) must match rows ({x.shape[0]})")
    data = np.zeros((n_segments,) + x.shape[1:], dtype=x.data.dtype)
    np.add.at(data, seg, x.data)
    out = Tensor(data)
    return _finish(out, tape, ((x, lambda g: g[seg]),))


def segment_softmax(logits: Tensor, segments: np.ndarray, tape: Tape | None = None) -> Tensor:
    """Softmax within each contiguous segment of a sorted segment-id vector."""
    seg = np.asarray(segments, dtype=np.int64)
    if logits.ndim != 1 or logits.shape[0] != seg.shape[0]:
        raise ShapeMismatch(f"logits {logits.shape} vs segments {seg.shape}")
    if seg.size and np.any(np.diff(seg) < 0):
        raise UnsortedSegments("segment ids must be sorted nondecreasing")
    if seg.size == 0:
        return _finish(Tensor(np.zeros(0)), tape, ((logits, lambda g: g),))
    starts = np.flatnonzero(np.diff(seg, prepend=seg[0] - 1))
    sizes = np.diff(np.append(starts, seg.size))
    # max-subtraction keeps exp in range regardless of logit scale
    seg_max = np.maximum.reduceat(logits.data, starts)
    shifted = np.exp(logits.data - np.repeat(seg_max, sizes))
    denom = np.add.reduceat(shifted, starts)
    y = shifted / np.repeat(denom, sizes)
    out = Tensor(y)

    def pull(g):
        dot = np.add.reduceat(g * y, starts)
        return y * (g - np.repeat(dot, sizes))

    return _finish(out, tape, ((logits, pull),))


def mean_rows(x: Tensor, tape: Tape | None = None) -> Tensor:
    """Arithmetic mean over rows of (t,d) -> (d,)."""
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeMismatch(f"mean_rows needs a nonempty (t,d) matrix, got {x.shape}")
    t = x.shape[0]
    out = Tensor(x.data.mean(axis=0))
    return _finish(out, tape, ((x, lambda g: np.tile(g / t, (t, 1))),))


def flatten(x: Tensor, tape: Tape | None = None) -> Tensor:
    shape = x.shape
    out = Tensor(x.data.reshape(-1))
    return _finish(out, tape, ((x, lambda g: g.reshape(shape)),))


def select(x: Tensor, index: int, tape: Tape | None = None) -> Tensor:
    """Pick a single entry of a vector as a scalar tensor."""
    if x.ndim != 1:
        raise ShapeMismatch(f"select needs a vector, got {x.shape}")
    out = Tensor(x.data[index])

    def pull(g):
        gz = np.zeros_like(x.data)
        gz[index] = g
        return gz

    return _finish(out, tape, ((x, pull),))


def one_minus(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(1.0 - x.data)
    return _finish(out, tape, ((x, lambda g: -g),))


_P_LO, _P_HI = 1e-7, 1.0 - 1e-7


def bce_loss(p: Tensor, targets, mask, tape: Tape | None = None) -> Tensor:
    """Mean binary cross-entropy over masked entries; p clamped to [1e-7, 1-1e-7]."""
    t = np.asarray(targets, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    if p.shape != t.shape or t.shape != m.shape:
        raise ShapeMismatch(f"p {p.shape}, targets {t.shape}, mask {m.shape} must match")
    k = int(m.sum())
    if k == 0:
        raise EmptyMask("no entries selected by mask")
    pc = np.clip(p.data, _P_LO, _P_HI)
    per = -(t * np.log(pc) + (1.0 - t) * np.log1p(-pc))
    out = Tensor(per[m].mean())

    def pull(g):
        grad = np.zeros_like(p.data)
        live = m & (p.data > _P_LO) & (p.data < _P_HI)
        grad[live] = (pc[live] - t[live]) / (pc[live] * (1.0 - pc[live])) / k
        return grad * g

    return _finish(out, tape, ((p, pull),))


# ---------------------------------------------------------------------------
# verification


def grad_check(f, inputs: Sequence[np.ndarray], eps: float = 1e-5) -> float:
    """Max relative error between taped gradients and central differences.

    `f(tape, *tensors)` must return a scalar Tensor and be re-runnable with
    tape=None. Components where |analytic| + |numeric| < 1e-8 are compared
    absolutely instead of relatively.
    """
    tensors = [Tensor(np.array(x, dtype=np.float64), requires_grad=True) for x in inputs]
    tape = Tape()
    loss = f(tape, *tensors)
    grads = backward(tape, loss)

    worst = 0.0
    for t in tensors:
        analytic = grads.get(t)
        if analytic is None:
            analytic = np.zeros_like(t.data)
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        num_flat = numeric.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            fp = float(f(None, *tensors).data)
            flat[j] = orig - eps
            fm = float(f(None, *tensors).data)
            flat[j] = orig
            num_flat[j] = (fp - fm) / (2.0 * eps)
        scale = np.abs(analytic) + np.abs(numeric)
        diff = np.abs(analytic - numeric)
        rel = np.where(scale < 1e-8, diff, diff / np.maximum(scale, 1e-300))
        if rel.size:
            worst = max(worst, float(rel.max()))
    return worst
