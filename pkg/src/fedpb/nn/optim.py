from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LengthMismatch


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **hyper) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), **hyper)


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState, lr: float = 1e-4):
    """One bias-corrected Adam update. Returns (new params, state); state is updated in place."""
    if params.shape != grad.shape or state.m.shape != params.shape:
        raise LengthMismatch(
            f"params {params.shape}, grad {grad.shape}, state {state.m.shape}"
        )
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (grad * grad)
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps), state


def clip_by_global_norm(grad: np.ndarray, max_norm: float | None) -> np.ndarray:
    if max_norm is None:
        return grad
    norm = float(np.linalg.norm(grad))
    if norm <= max_norm or norm == 0.0:
        return grad
    return grad * (max_norm / norm)
