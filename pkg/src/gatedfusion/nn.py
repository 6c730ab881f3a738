"""Generic neural building blocks: dense layers, dropout, positional
encodings, pooling, cross-entropy, Adam, and the two plateau-based
state machines (learning-rate reduction and early stopping)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


class DenseLayer:
    """Affine map over the trailing dimension: y = x W + b."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, dtype=np.float32):
        self.weight = Tensor(xavier_uniform(rng, in_dim, out_dim, dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True)

    @property
    def in_dim(self) -> int:
        return self.weight.data.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.data.shape[1]

    def parameters(self):
        return [self.weight, self.bias]

    def __call__(self, x: Tensor) -> Tensor:
        return dense_forward(self, x)


def dense_forward(layer: DenseLayer, x: Tensor) -> Tensor:
    if x.data.ndim == 1:
        row = Tensor(x.data[None, :], _parents=(x,) if (x.requires_grad or x._parents) else (),
                     _backward=(lambda g: x._accumulate(g[0])) if (x.requires_grad or x._parents) else None,
                     op="as_row")
        out = T.add_rowvec(T.matmul(row, layer.weight), layer.bias)
        y = Tensor(out.data[0].copy(), _parents=(out,), _backward=lambda g: out._accumulate(g[None, :]),
                   op="as_vec")
        return y
    if x.data.shape[-1] != layer.in_dim:
        raise ValueError(f"dense_forward: trailing dim {x.data.shape[-1]} != {layer.in_dim}")
    return T.add_rowvec(T.matmul(x, layer.weight), layer.bias)


def dropout_apply(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    mask = Tensor(keep / x.data.dtype.type(1.0 - rate))
    return T.mul(x, mask)


def positional_encoding(n: int, d: int, dtype=np.float32) -> Tensor:
    """Sinusoidal position signal; odd d computed at d+1 with the last
    column dropped."""
    d_eff = d + 1 if d % 2 else d
    pos = np.arange(n, dtype=np.float64)[:, None]
    i = np.arange(d_eff // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * i / d_eff)
    pe = np.empty((n, d_eff), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return Tensor(pe[:, :d].astype(dtype))


def average_pool(z: Tensor) -> Tensor:
    return T.mean_rows(z)


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """-log softmax(logits)[label], stabilized by max subtraction."""
    n = logits.data.shape[0]
    if logits.data.ndim != 1:
        raise ValueError(f"cross_entropy expects 1-d logits, got {logits.data.shape}")
    if not 0 <= label < n:
        raise ValueError(f"label {label} out of range for {n} classes")
    x = logits.data.astype(np.float64)
    m = x.max()
    lse = m + np.log(np.exp(x - m).sum())
    loss = lse - x[label]
    probs = np.exp(x - lse)

    def bwd(g):
        grad = probs.copy()
        grad[label] -= 1.0
        logits._accumulate(g * grad.astype(logits.data.dtype))

    track = logits.requires_grad or logits._parents
    return Tensor(np.asarray(loss, dtype=logits.data.dtype),
                  _parents=(logits,) if track else (),
                  _backward=bwd if track else None, op="cross_entropy")


class AdamState:
    """Standard Adam with bias correction; one state per parameter list."""

    def __init__(self, params, lr: float = 1e-5, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]


def adam_step(state: AdamState) -> None:
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p, m, v in zip(state.params, state.m, state.v):
        g = p.grad
        if g is None:
            continue
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= (state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)).astype(p.data.dtype)


@dataclass
class PlateauSchedulerState:
    current_lr: float
    factor: float = 0.1
    patience: int = 3
    min_delta: float = 0.0
    best_val_loss: float = float("inf")
    epochs_since_improvement: int = 0


def plateau_step(state: PlateauSchedulerState, val_loss: float) -> PlateauSchedulerState:
    if val_loss < state.best_val_loss - state.min_delta:
        state.best_val_loss = val_loss
        state.epochs_since_improvement = 0
    else:
        state.epochs_since_improvement += 1
        if state.epochs_since_improvement >= state.patience:
            state.current_lr *= state.factor
            state.epochs_since_improvement = 0
    return state


@dataclass
class EarlyStopState:
    patience: int = 6
    best_val_loss: float = float("inf")
    epochs_since_improvement: int = 0
    stopped: bool = False


def early_stop_step(state: EarlyStopState, val_loss: float) -> EarlyStopState:
    if val_loss < state.best_val_loss:
        state.best_val_loss = val_loss
        state.epochs_since_improvement = 0
    else:
        state.epochs_since_improvement += 1
        if state.epochs_since_improvement >= state.patience:
            state.stopped = True
    return state
