"""Gated linear projection of the look-back window to node features."""

from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import Rng, Tensor
from .params import glorot


@dataclass
class ProjectionParams:
    w0: Tensor   # tau x d, gate path
    w1: Tensor   # tau x d, value path
    w2: Tensor   # d x d

    @classmethod
    def init(cls, tau: int, d: int, rng: Rng) -> "ProjectionParams":
        return cls(glorot(rng, tau, d), glorot(rng, tau, d), glorot(rng, d, d))


def glu_project(x, params: ProjectionParams) -> Tensor:
    """(sigmoid(X W0) * (X W1)) W2 for X of shape (..., n, tau)."""
    x = ad.const(x)
    if x.shape[-1] != params.w0.shape[0]:
        raise ValueError(f"window length {x.shape[-1]} != projection tau {params.w0.shape[0]}")
    gate = ad.sigmoid(x @ params.w0)
    return (gate * (x @ params.w1)) @ params.w2
