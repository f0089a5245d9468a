"""Parameter containers for the conv and fully connected layers."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import ops
from .init import derive_seed, he_init
from .tensor import Parameter, Tensor


class Module:
    """Base for anything that owns parameters or sub-modules.

    Parameters are discovered from attributes in definition order and keyed
    by their own ``name`` (``flow.update1.weight``), which must be unique.
    """

    def named_parameters(self) -> Iterator[tuple[str, Parameter]]:
        for val in vars(self).values():
            if isinstance(val, Parameter):
                yield val.name, val
            elif isinstance(val, Module):
                yield from val.named_parameters()
            elif isinstance(val, (list, tuple)):
                for item in val:
                    if isinstance(item, Module):
                        yield from item.named_parameters()

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            if missing or extra:
                raise KeyError(f"state mismatch: missing={missing} unexpected={extra}")
        for name, p in own.items():
            if name in state:
                arr = np.asarray(state[name])
                if arr.shape != p.shape:
                    raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
                p.data = arr.astype(p.data.dtype).copy()


class Conv2d(Module):
    def __init__(self, name: str, cin: int, cout: int, k: int = 3, stride: int = 1, seed: int = 0,
                 dtype=np.float32, zero: bool = False, trainable: bool = True):
        self.stride = stride
        w = np.zeros((cout, cin, k, k), dtype) if zero else he_init((cout, cin, k, k), derive_seed(seed, name), dtype=dtype)
        self.weight = Parameter(f"{name}.weight", w, trainable)
        self.bias = Parameter(f"{name}.bias", he_init((cout,), 0, bias=True, dtype=dtype), trainable)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride)


class Linear(Module):
    def __init__(self, name: str, fin: int, fout: int, seed: int = 0, dtype=np.float32):
        self.weight = Parameter(f"{name}.weight", he_init((fout, fin), derive_seed(seed, name), dtype=dtype))
        self.bias = Parameter(f"{name}.bias", he_init((fout,), 0, bias=True, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)
