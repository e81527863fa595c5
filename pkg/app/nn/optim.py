"""Adam with bias correction."""

from dataclasses import dataclass, field

import numpy as np

from app.errors import InvalidArgumentError, ShapeError


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState, lr: float
) -> tuple[dict[str, np.ndarray], AdamState]:
    """Update every parameter in place; the step counter advances once per call."""
    if lr <= 0:
        raise InvalidArgumentError("learning rate must be positive")
    for name, param in params.items():
        if name not in grads:
            raise ShapeError(f"no gradient for {name}")
        if grads[name].shape != param.shape:
            raise ShapeError(f"gradient for {name} has shape {grads[name].shape}, expected {param.shape}")

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, param in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        param -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
