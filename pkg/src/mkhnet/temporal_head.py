"""Mixture-of-experts fusion of the spatial branches and the forecast heads."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import autodiff as ad
from .autodiff import Rng, Tensor
from .params import glorot

VARIANCE_FLOOR = 1e-6


@dataclass
class MoeGateParams:
    f_s: Tensor
    f_g: Tensor

    @classmethod
    def init(cls, d: int, rng: Rng) -> "MoeGateParams":
        return cls(glorot(rng, d, d), glorot(rng, d, d))


@dataclass
class TemporalParams:
    conv1: Tensor              # d x d
    head: Tensor               # d x horizon (point) or d x 2*horizon (uncertainty)
    uncertainty: bool = field(default=False, metadata={"static": True})

    @classmethod
    def init(cls, d: int, horizon: int, rng: Rng, uncertainty: bool = False) -> "TemporalParams":
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        width = 2 * horizon if uncertainty else horizon
        return cls(glorot(rng, d, d), glorot(rng, d, width), uncertainty)


def moe_gate(h_imp, h_sub, h_dht, gate: MoeGateParams) -> Tensor:
    return ad.sigmoid((ad.const(h_imp) + h_sub) @ gate.f_s + ad.const(h_dht) @ gate.f_g)


def moe_fuse(h_imp, h_sub, h_dht, gate: MoeGateParams) -> Tensor:
    """sigmoid(g (h_imp + h_sub) + (1 - g) h_dht)."""
    g = moe_gate(h_imp, h_sub, h_dht, gate)
    return ad.sigmoid(g * (ad.const(h_imp) + h_sub) + (1.0 - g) * h_dht)


def temporal_conv_stack(h, params: TemporalParams) -> Tensor:
    """Per-node shared dense layer (a 1x1 convolution) with a residual."""
    h = ad.const(h)
    return ad.relu(h @ params.conv1) + h


def point_forecast(features, params: TemporalParams) -> Tensor:
    return ad.const(features) @ params.head


def uncertainty_forecast(features, params: TemporalParams) -> tuple[Tensor, Tensor]:
    """Mean and variance (softplus + floor) from a 2*horizon readout."""
    out = ad.const(features) @ params.head
    horizon = out.shape[-1] // 2
    mu = out[..., :horizon]
    var = ad.softplus(out[..., horizon:]) + VARIANCE_FLOOR
    return mu, var
