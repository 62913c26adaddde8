"""Parameter update rules: SGD with classical momentum, and AdamW.

Both operate on named parameter dicts so that moment buffers survive
checkpointing and shape mismatches are caught by name.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class OptimState:
    """Optimizer kind, hyperparameters, and per-parameter moment buffers."""

    kind: str  # "sgd" | "adamw"
    lr: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    step_count: int = 0
    slots: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adamw"):
            raise ValueError(f"unknown optimizer kind: {self.kind!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.step_count < 0:
            raise ValueError("step_count must be >= 0")


def _check_shapes(params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> None:
    for name, p in params.items():
        g = grads.get(name)
        if g is not None and g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.data.shape} for {name!r}")


def sgd_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
             state: OptimState) -> None:
    """Classical momentum: v <- mu*v + g; p <- p - lr*v. Updates in place."""
    if state.kind != "sgd":
        raise ValueError("sgd_step called with non-SGD state")
    _check_shapes(params, grads)
    state.step_count += 1
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        slot = state.slots.setdefault(name, {})
        v = slot.get("v")
        if v is None:
            v = np.zeros_like(p.data)
        v = state.momentum * v + g
        slot["v"] = v
        p.data -= (state.lr * v).astype(p.data.dtype, copy=False)


def adamw_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
               state: OptimState) -> None:
    """Decoupled weight decay plus bias-corrected adaptive step. In place."""
    if state.kind != "adamw":
        raise ValueError("adamw_step called with non-AdamW state")
    _check_shapes(params, grads)
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - ADAM_BETA1 ** t
    bc2 = 1.0 - ADAM_BETA2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        slot = state.slots.setdefault(name, {})
        m = slot.get("m")
        v = slot.get("v")
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * (g * g)
        slot["m"], slot["v"] = m, v
        step = (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        if state.weight_decay:
            p.data -= (state.lr * state.weight_decay * p.data).astype(p.data.dtype, copy=False)
        p.data -= (state.lr * step).astype(p.data.dtype, copy=False)


class Optimizer:
    """Convenience wrapper binding an OptimState to a parameter dict."""

    def __init__(self, params: dict[str, Tensor], state: OptimState):
        self.params = params
        self.state = state
        self._step_fn = sgd_step if state.kind == "sgd" else adamw_step

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        grads = {name: p.grad for name, p in self.params.items() if p.grad is not None}
        self._step_fn(self.params, grads, self.state)


def sgd(params: dict[str, Tensor], lr: float, momentum: float = 0.9) -> Optimizer:
    return Optimizer(params, OptimState(kind="sgd", lr=lr, momentum=momentum))


def adamw(params: dict[str, Tensor], lr: float, weight_decay: float = 0.01) -> Optimizer:
    return Optimizer(params, OptimState(kind="adamw", lr=lr, weight_decay=weight_decay))
