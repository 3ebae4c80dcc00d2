"""Tiny parameter-registration base for the learnable components."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

__all__ = ["Module"]


class Module:
    """Registers parameters and child modules under dotted names."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, "Module"] = {}

    def param(self, name: str, array) -> Tensor:
        t = Tensor(np.array(array, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, p in self._params.items():
            out[name] = p
        for cname, child in self._children.items():
            for name, p in child.parameters().items():
                out[f"{cname}.{name}"] = p
        return out

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def load_state(self, values: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        for name, value in values.items():
            if name not in params:
                raise KeyError(f"unknown parameter {name!r}")
            p = params[name]
            value = np.asarray(value, dtype=np.float64)
            if value.shape != p.data.shape:
                raise ValueError(
                    f"shape mismatch for parameter {name!r}: checkpoint {value.shape}, model {p.data.shape}"
                )
            p.data[...] = value

    def zero_grads(self) -> None:
        for p in self.parameters().values():
            p.grad = None
