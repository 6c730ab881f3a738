"""Dense tensor with reverse-mode automatic differentiation.

Float32 by default, float64 for gradient verification.  The graph is
recorded implicitly through parent links; ``backward`` linearizes it into
a :class:`ComputationTape` (topological order) and replays it once.
"""

from __future__ import annotations

import numpy as np

from . import kernels

# When enabled, every forward op asserts its output is finite.
_debug_checks = False


def set_debug_checks(enabled: bool) -> None:
    global _debug_checks
    _debug_checks = bool(enabled)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, dtype=None, _parents=(), _backward=None, op=""):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = tuple(_parents)
        self._backward = _backward
        self.op = op
        if _debug_checks and not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite values after op {op or 'leaf'}")

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, op={self.op!r})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad = self.grad + np.asarray(g, dtype=self.data.dtype)

    def backward(self) -> "ComputationTape":
        return backward(self)


class ComputationTape:
    """Topologically ordered record of the ops reaching a loss node."""

    def __init__(self, nodes):
        self.nodes = nodes  # inputs always precede consumers

    def __len__(self):
        return len(self.nodes)

    def replay_backward(self) -> None:
        for node in reversed(self.nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _trace(root: Tensor) -> ComputationTape:
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    return ComputationTape(order)


def backward(loss: Tensor) -> ComputationTape:
    """Populate ``grad`` on every tensor the scalar ``loss`` depends on."""
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    tape = _trace(loss)
    loss.grad = np.ones_like(loss.data)
    tape.replay_backward()
    return tape


def _needs_grad(*ts: Tensor) -> bool:
    return any(t.requires_grad or t._parents for t in ts)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"{op} shape mismatch: {a.data.shape} vs {b.data.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} x {b.data.shape}")
    out_data = kernels.matmul(a.data, b.data)

    def bwd(g):
        a._accumulate(kernels.matmul(g, b.data.T))
        b._accumulate(kernels.matmul(a.data.T, g))

    return Tensor(out_data, _parents=(a, b) if _needs_grad(a, b) else (),
                  _backward=bwd if _needs_grad(a, b) else None, op="matmul")


def transpose(x: Tensor) -> Tensor:
    def bwd(g):
        x._accumulate(g.T)

    return Tensor(x.data.T.copy(), _parents=(x,) if _needs_grad(x) else (),
                  _backward=bwd if _needs_grad(x) else None, op="transpose")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")

    def bwd(g):
        a._accumulate(g)
        b._accumulate(g)

    return Tensor(a.data + b.data, _parents=(a, b) if _needs_grad(a, b) else (),
                  _backward=bwd if _needs_grad(a, b) else None, op="add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")

    def bwd(g):
        a._accumulate(g * b.data)
        b._accumulate(g * a.data)

    return Tensor(a.data * b.data, _parents=(a, b) if _needs_grad(a, b) else (),
                  _backward=bwd if _needs_grad(a, b) else None, op="mul")


def scale(x: Tensor, c: float) -> Tensor:
    c = x.data.dtype.type(c)

    def bwd(g):
        x._accumulate(g * c)

    return Tensor(x.data * c, _parents=(x,) if _needs_grad(x) else (),
                  _backward=bwd if _needs_grad(x) else None, op="scale")


def add_rowvec(x: Tensor, v: Tensor) -> Tensor:
    """Add a length-n vector to every row of an m-by-n matrix."""
    if x.data.ndim != 2 or v.data.ndim != 1 or x.data.shape[1] != v.data.shape[0]:
        raise ValueError(f"add_rowvec shape mismatch: {x.data.shape} + {v.data.shape}")

    def bwd(g):
        x._accumulate(g)
        v._accumulate(g.sum(axis=0))

    return Tensor(x.data + v.data[None, :], _parents=(x, v) if _needs_grad(x, v) else (),
                  _backward=bwd if _needs_grad(x, v) else None, op="add_rowvec")


def mul_colvec(x: Tensor, v: Tensor) -> Tensor:
    """Scale row i of an m-by-n matrix by v[i]."""
    if x.data.ndim != 2 or v.data.ndim != 1 or x.data.shape[0] != v.data.shape[0]:
        raise ValueError(f"mul_colvec shape mismatch: {x.data.shape} * {v.data.shape}")

    def bwd(g):
        x._accumulate(g * v.data[:, None])
        v._accumulate((g * x.data).sum(axis=1))

    return Tensor(x.data * v.data[:, None], _parents=(x, v) if _needs_grad(x, v) else (),
                  _backward=bwd if _needs_grad(x, v) else None, op="mul_colvec")


def select_column(x: Tensor, j: int) -> Tensor:
    if x.data.ndim != 2:
        raise ValueError(f"select_column expects 2-d input, got {x.data.shape}")

    def bwd(g):
        full = np.zeros_like(x.data)
        full[:, j] = g
        x._accumulate(full)

    return Tensor(x.data[:, j].copy(), _parents=(x,) if _needs_grad(x) else (),
                  _backward=bwd if _needs_grad(x) else None, op="select_column")


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                   np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d)))).astype(d.dtype)

    def bwd(g):
        x._accumulate(g * out * (1.0 - out))

    return Tensor(out, _parents=(x,) if _needs_grad(x) else (),
                  _backward=bwd if _needs_grad(x) else None, op="sigmoid")


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def bwd(g):
        # subgradient at 0 is 0
        x._accumulate(g * (x.data > 0))

    return Tensor(out, _parents=(x,) if _needs_grad(x) else (),
                  _backward=bwd if _needs_grad(x) else None, op="relu")


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by row-max subtraction.

    The denominator is an exactly rounded sum, so permuting entries
    within a row permutes the output bitwise.
    """
    if x.data.ndim != 2:
        raise ValueError(f"softmax_rows expects 2-d input, got {x.data.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    denom = kernels.exact_row_sums(e)
    out = e / denom[:, None]

    def bwd(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        x._accumulate(out * (g - dot))

    return Tensor(out, _parents=(x,) if _needs_grad(x) else (),
                  _backward=bwd if _needs_grad(x) else None, op="softmax_rows")


def mean_rows(x: Tensor) -> Tensor:
    """Column-wise mean over the sequence axis of an n-by-d matrix."""
    if x.data.ndim != 2 or x.data.shape[0] == 0:
        raise ValueError(f"mean_rows expects a non-empty 2-d input, got {x.data.shape}")
    n = x.data.shape[0]

    def bwd(g):
        x._accumulate(np.broadcast_to(g / n, x.data.shape))

    return Tensor(x.data.mean(axis=0), _parents=(x,) if _needs_grad(x) else (),
                  _backward=bwd if _needs_grad(x) else None, op="mean_rows")


def sum_all(x: Tensor) -> Tensor:
    def bwd(g):
        x._accumulate(np.broadcast_to(g, x.data.shape))

    return Tensor(x.data.sum(), _parents=(x,) if _needs_grad(x) else (),
                  _backward=bwd if _needs_grad(x) else None, op="sum_all")


def append_one(v: Tensor) -> Tensor:
    """Append the constant 1 as the last element of a vector."""
    if v.data.ndim != 1:
        raise ValueError(f"append_one expects 1-d input, got {v.data.shape}")
    out = np.concatenate([v.data, np.ones(1, dtype=v.data.dtype)])

    def bwd(g):
        v._accumulate(g[:-1])

    return Tensor(out, _parents=(v,) if _needs_grad(v) else (),
                  _backward=bwd if _needs_grad(v) else None, op="append_one")


def outer2(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ValueError("outer2 expects 1-d inputs")
    out = a.data[:, None] * b.data[None, :]

    def bwd(g):
        a._accumulate(g @ b.data)
        b._accumulate(a.data @ g)

    return Tensor(out, _parents=(a, b) if _needs_grad(a, b) else (),
                  _backward=bwd if _needs_grad(a, b) else None, op="outer2")


def outer3(a: Tensor, b: Tensor, c: Tensor) -> Tensor:
    if a.data.ndim != 1 or b.data.ndim != 1 or c.data.ndim != 1:
        raise ValueError("outer3 expects 1-d inputs")
    ab = a.data[:, None] * b.data[None, :]
    out = ab[:, :, None] * c.data[None, None, :]

    def bwd(g):
        bc = b.data[:, None] * c.data[None, :]
        a._accumulate(np.tensordot(g, bc, axes=([1, 2], [0, 1])))
        ac = a.data[:, None] * c.data[None, :]
        b._accumulate(np.tensordot(g, ac, axes=([0, 2], [0, 1])))
        c._accumulate(np.tensordot(g, ab, axes=([0, 1], [0, 1])))

    return Tensor(out, _parents=(a, b, c) if _needs_grad(a, b, c) else (),
                  _backward=bwd if _needs_grad(a, b, c) else None, op="outer3")


def flatten(x: Tensor) -> Tensor:
    shape = x.data.shape

    def bwd(g):
        x._accumulate(g.reshape(shape))

    return Tensor(x.data.reshape(-1).copy(), _parents=(x,) if _needs_grad(x) else (),
                  _backward=bwd if _needs_grad(x) else None, op="flatten")


def grad_check(forward, params, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``forward`` must be a deterministic closure over ``params`` returning a
    scalar Tensor.  Parameters should be float64 for tight tolerances.
    """
    for p in params:
        p.zero_grad()
    loss = forward()
    base = loss.item()
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    # determinism probe: identical loss on replay
    if forward().item() != base:
        raise RuntimeError("forward is not deterministic between probes")

    max_rel = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = forward().item()
            flat[i] = orig - eps
            fm = forward().item()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * eps)
            rel = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]))
            if rel > max_rel:
                max_rel = rel
    return max_rel
