"""Gated self-attention.

Q, K, V are the input sequence itself (no learned projections).  Three
fully-connected gating layers produce two sigmoid masks that scale Q and
K row-wise before the scaled dot-product attention map is formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import DenseLayer
from .tensor import Tensor


class GatedAttentionParams:
    def __init__(self, d: int, rng: np.random.Generator, d_g: int = 64, dtype=np.float32):
        self.d = d
        self.d_g = d_g
        self.fc_q = DenseLayer(d, d_g, rng, dtype)
        self.fc_k = DenseLayer(d, d_g, rng, dtype)
        self.fc_g = DenseLayer(d_g, 2, rng, dtype)

    def parameters(self):
        return self.fc_q.parameters() + self.fc_k.parameters() + self.fc_g.parameters()


@dataclass
class AttentionTrace:
    q: Tensor
    k: Tensor
    v: Tensor
    masks_m: Tensor       # N x 2 sigmoid gate output
    mask_q: Tensor        # column 0
    mask_k: Tensor        # column 1
    attention_map: Tensor  # N x N, row-stochastic
    output_h: Tensor      # N x d


def compute_gating_masks(params: GatedAttentionParams, q: Tensor, k: Tensor):
    """Sigmoid gate over the elementwise product of the two projections;
    returns (mask_q, mask_k, full N-by-2 mask matrix)."""
    if q.data.shape != k.data.shape:
        raise ValueError(f"gating inputs differ in shape: {q.data.shape} vs {k.data.shape}")
    gated = T.mul(params.fc_q(q), params.fc_k(k))
    m = T.sigmoid(params.fc_g(gated))
    return T.select_column(m, 0), T.select_column(m, 1), m


def gated_attention_map(q: Tensor, k: Tensor, mask_q: Tensor, mask_k: Tensor) -> Tensor:
    """Row-stochastic attention map from mask-scaled Q and K."""
    d = q.data.shape[1]
    qm = T.mul_colvec(q, mask_q)
    km = T.mul_colvec(k, mask_k)
    scores = T.scale(T.matmul(qm, T.transpose(km)), 1.0 / np.sqrt(d))
    return T.softmax_rows(scores)


def gated_self_attention_forward(params: GatedAttentionParams, z: Tensor):
    """Full layer: masks from Z, attention map, weighted values.

    Returns (h, AttentionTrace) with h the same shape as z.
    """
    if z.data.ndim != 2 or z.data.shape[0] < 1:
        raise ValueError(f"expected a non-empty N x d input, got {z.data.shape}")
    if z.data.shape[1] != params.d:
        raise ValueError(f"input width {z.data.shape[1]} != configured d {params.d}")
    q = k = v = z
    mask_q, mask_k, m = compute_gating_masks(params, q, k)
    a = gated_attention_map(q, k, mask_q, mask_k)
    h = T.matmul(a, v)
    trace = AttentionTrace(q=q, k=k, v=v, masks_m=m, mask_q=mask_q,
                           mask_k=mask_k, attention_map=a, output_h=h)
    return h, trace
