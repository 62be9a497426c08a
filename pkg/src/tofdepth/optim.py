"""RMSProp with classical momentum on the update buffer.

Update rule per parameter:

    acc  <- rho * acc + (1 - rho) * g^2
    step <- lr * g / (sqrt(acc) + eps)
    buf  <- momentum * buf + step
    p    <- p - buf

With zero gradients and zero buffers this is the identity on parameters.
State mutation is single-writer; one optimizer instance per training loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TrainingError


@dataclass
class OptimizerState:
    lr: float
    rho: float = 0.9
    momentum: float = 0.5
    eps: float = 1e-8
    acc: dict = field(default_factory=dict)
    buf: dict = field(default_factory=dict)
    step_count: int = 0

    @classmethod
    def for_params(cls, params: dict, lr: float, rho: float = 0.9,
                   momentum: float = 0.5, eps: float = 1e-8) -> "OptimizerState":
        state = cls(lr=lr, rho=rho, momentum=momentum, eps=eps)
        for name, p in params.items():
            state.acc[name] = np.zeros_like(p)
            state.buf[name] = np.zeros_like(p)
        return state

    def to_arrays(self) -> dict:
        """Flat name -> array view for checkpointing (acc.* then buf.*)."""
        out = {}
        for name, a in self.acc.items():
            out[f"acc.{name}"] = a
        for name, b in self.buf.items():
            out[f"buf.{name}"] = b
        return out


def rmsprop_step(params: dict, grads: dict, state: OptimizerState) -> None:
    """Apply one in-place update to every parameter.

    Raises TrainingError (with the step index) on non-finite gradients.
    """
    if set(params) != set(grads):
        raise ConfigError(
            f"parameter/gradient name mismatch: {sorted(set(params) ^ set(grads))}"
        )
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ConfigError(
                f"gradient shape {g.shape} != parameter shape {p.shape} for '{name}'"
            )
        if not np.isfinite(g).all():
            raise TrainingError(
                f"non-finite gradient for '{name}' at step {state.step_count}"
            )
        acc = state.acc[name]
        buf = state.buf[name]
        acc *= state.rho
        acc += (1.0 - state.rho) * g * g
        step = state.lr * g / (np.sqrt(acc) + state.eps)
        buf *= state.momentum
        buf += step
        p -= buf
    state.step_count += 1
