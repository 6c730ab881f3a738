"""Tensor fusion: outer product of 1-augmented branch vectors.

The appended constant embeds every unimodal and bimodal interaction term
inside the full product tensor, so a 3-way fusion of 128/32/32 vectors
yields a 129 x 33 x 33 tensor whose last-index slices recover the
lower-order fusions.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from .tensor import Tensor

augment_one = T.append_one


@dataclass
class BranchVectors:
    z_t: Tensor
    z_v: Tensor | None = None
    z_a: Tensor | None = None

    def __post_init__(self):
        if self.z_v is None and self.z_a is None:
            raise ValueError("fusion needs the text branch plus at least one other modality")


@dataclass
class FusedTensor:
    data: Tensor   # (d_t+1) x (d_v+1) x (d_a+1), or 2-d for bimodal
    flat: Tensor   # row-major flattened view for the output head


def tensor_fusion(branches: BranchVectors) -> FusedTensor:
    zt = augment_one(branches.z_t)
    if branches.z_v is not None and branches.z_a is not None:
        out = T.outer3(zt, augment_one(branches.z_v), augment_one(branches.z_a))
    elif branches.z_a is not None:
        out = T.outer2(zt, augment_one(branches.z_a))
    else:
        out = T.outer2(zt, augment_one(branches.z_v))
    return FusedTensor(data=out, flat=T.flatten(out))
