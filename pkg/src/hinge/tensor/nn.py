"""Parameters, a flat parameter registry and initialisers."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..errors import ShapeMismatch
from .core import DTYPE, Tensor


class Parameter(Tensor):
    """A trainable leaf tensor with a registry name and an init descriptor."""

    __slots__ = ("init",)

    def __init__(self, data, name: str, init: str = "given"):
        super().__init__(data, requires_grad=True, name=name)
        self.init = init

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.shape}, init={self.init})"


def xavier_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    fan_in, fan_out = (shape[0], shape[0]) if len(shape) == 1 else (shape[-2], shape[-1])
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


class ParamStore:
    """Ordered name -> Parameter map; each name may be registered once."""

    def __init__(self, seed: int = 0):
        self.params: OrderedDict[str, Parameter] = OrderedDict()
        self.rng = np.random.default_rng(seed)

    def add(self, name: str, shape, init: str = "xavier") -> Parameter:
        if name in self.params:
            raise ValueError(f"parameter {name!r} already registered")
        shape = tuple(int(s) for s in shape)
        if init == "xavier":
            data = xavier_uniform(self.rng, shape)
        elif init == "zeros":
            data = np.zeros(shape, dtype=DTYPE)
        else:
            raise ValueError(f"unknown init {init!r}")
        p = Parameter(data, name=name, init=init)
        self.params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self.params[name]

    def __iter__(self):
        return iter(self.params.values())

    def __len__(self):
        return len(self.params)

    def names(self) -> list[str]:
        return list(self.params)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            if k not in state:
                raise KeyError(f"missing parameter {k!r}")
            arr = np.asarray(state[k], dtype=DTYPE)
            if arr.shape != p.shape:
                raise ShapeMismatch(f"{k}: expected {p.shape}, got {arr.shape}")
            p.data = arr.copy()
