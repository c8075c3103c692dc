"""Parameter containers: initialisers and name-addressed traversal."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .autodiff import Rng, Tensor


def glorot(rng: Rng, fan_in: int, fan_out: int, shape=None) -> Tensor:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    shape = (fan_in, fan_out) if shape is None else shape
    return Tensor(rng.uniform(shape, -limit, limit), requires_grad=True)


def zeros(*shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones(*shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


def named_parameters(obj, prefix: str = "") -> list[tuple[str, Tensor]]:
    """Depth-first (name, tensor) pairs over nested dataclasses, lists and dicts."""
    out: list[tuple[str, Tensor]] = []
    join = lambda k: f"{prefix}.{k}" if prefix else str(k)
    if isinstance(obj, Tensor):
        if obj.requires_grad:
            out.append((prefix, obj))
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            out.extend(named_parameters(getattr(obj, f.name), join(f.name)))
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            out.extend(named_parameters(v, join(i)))
    elif isinstance(obj, dict):
        for k, v in obj.items():
            out.extend(named_parameters(v, join(k)))
    return out
