"""Training objectives for the joint embedding.

Both losses sum over the batch (not mean). The contrastive hinge acts on
the unsquared pair distance; the triplet hinge acts on squared distances
with an m^2 margin. Hinge subgradients at the kink are 0.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from .tensor import Tensor


@dataclass
class PairExemplar:
    """(first-person embedding, third-person embedding, correct? 0/1)."""

    x_e: Tensor
    x_p: Tensor
    y: int


@dataclass
class TripletExemplar:
    """(first-person, correct third-person, incorrect third-person)."""

    x_e: Tensor
    x_1: Tensor
    x_0: Tensor


def contrastive_loss(batch, m: float) -> Tensor:
    """sum_i [ y_i * d_i^2 + (1 - y_i) * max(m - d_i, 0)^2 ]

    where d_i is the Euclidean distance between the pair embeddings.
    """
    if not batch:
        raise ValueError("contrastive_loss: empty batch")
    if m <= 0:
        raise ValueError(f"contrastive_loss: margin must be positive, got {m}")
    total = None
    m_t = T.const(m)
    for ex in batch:
        d2 = T.l2_sq(ex.x_e, ex.x_p)
        if ex.y == 1:
            term = d2
        else:
            hinge = T.relu(T.sub(m_t, T.sqrt(d2)))
            term = T.mul(hinge, hinge)
        total = term if total is None else T.add(total, term)
    return total


def triplet_loss(batch, m: float) -> Tensor:
    """sum_i [ ||x_e - x_1||^2 + max(0, m^2 - (||x_e - x_0||^2 - ||x_e - x_1||^2)) ]"""
    if not batch:
        raise ValueError("triplet_loss: empty batch")
    if m <= 0:
        raise ValueError(f"triplet_loss: margin must be positive, got {m}")
    total = None
    m2 = T.const(m * m)
    for ex in batch:
        d_pos = T.l2_sq(ex.x_e, ex.x_1)
        d_neg = T.l2_sq(ex.x_e, ex.x_0)
        hinge = T.relu(T.sub(m2, T.sub(d_neg, d_pos)))
        term = T.add(d_pos, hinge)
        total = term if total is None else T.add(total, term)
    return total
