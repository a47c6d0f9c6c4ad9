"""SGD and Adam parameter updates over named parameter dicts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError

Array = np.ndarray


@dataclass
class OptimizerState:
    """Optimizer kind, hyperparameters, and Adam moment accumulators.

    Moment arrays are allocated lazily, keyed by parameter name, and always
    shape-match their parameters. ``step`` counts completed update calls.
    """

    kind: str
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: dict[str, Array] = field(default_factory=dict)
    second_moment: dict[str, Array] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ContractError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ContractError("learning_rate must be positive")

    @classmethod
    def sgd(cls, learning_rate: float) -> "OptimizerState":
        return cls(kind="sgd", learning_rate=learning_rate)

    @classmethod
    def adam(cls, learning_rate: float = 1e-3, beta1: float = 0.9,
             beta2: float = 0.999, epsilon: float = 1e-8) -> "OptimizerState":
        return cls(kind="adam", learning_rate=learning_rate, beta1=beta1,
                   beta2=beta2, epsilon=epsilon)


def optimizer_step(state: OptimizerState, params: dict[str, Array],
                   grads: dict[str, Array]) -> dict[str, Array]:
    """Apply one update; returns fresh parameter arrays, mutates ``state``.

    SGD: w <- w - lr * g. Adam: bias-corrected first/second moment update.
    """
    missing = set(params) - set(grads)
    if missing:
        raise ContractError(f"gradients missing for parameters: {sorted(missing)}")
    for name, p in params.items():
        if grads[name].shape != p.shape:
            raise DimensionError(f"gradient shape {grads[name].shape} does not match "
                                 f"parameter {name!r} shape {p.shape}")
    state.step += 1
    updated: dict[str, Array] = {}
    if state.kind == "sgd":
        for name, p in params.items():
            updated[name] = p - state.learning_rate * grads[name]
        return updated
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        updated[name] = p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return updated
