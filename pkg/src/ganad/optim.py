"""First-order optimizers over lists of leaf tensors."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import ContractError, Tensor


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


@dataclass
class Optimizer:
    """SGD or Adam.

    Parameters without a gradient are skipped; a step where no parameter has
    one is a caller error. Updates rebind ``p.data`` instead of writing in
    place, so graphs recorded before the step keep their saved values.
    """

    params: list[Tensor]
    kind: str = "adam"
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = list(self.params)
        if self.kind == "adam" and not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
            self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        zero_grad(self.params)

    def step(self) -> None:
        if all(p.grad is None for p in self.params):
            raise ContractError("optimizer step with no populated gradients")
        if self.kind == "sgd":
            for p in self.params:
                if p.grad is not None:
                    p.data = p.data - self.lr * p.grad
            return
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def sgd(params, lr: float) -> Optimizer:
    return Optimizer(list(params), kind="sgd", lr=lr)


def adam(params, lr: float = 2e-4, beta1: float = 0.9, beta2: float = 0.999,
         eps: float = 1e-8) -> Optimizer:
    return Optimizer(list(params), kind="adam", lr=lr, beta1=beta1, beta2=beta2, eps=eps)
