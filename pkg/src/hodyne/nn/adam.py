"""Adam optimizer with bias correction, operating on lists of arrays.

The update is computed fully in place with one scratch buffer per parameter
(allocations per step would dominate training cost for the dense layers).
The bias-corrected step lr * m_hat / (sqrt(v_hat) + eps) is evaluated as
(lr * sqrt(c2) / c1) * m / (sqrt(v) + eps * sqrt(c2)), which is the same
expression with one fewer pass over v.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    scratch: list = field(default_factory=list, repr=False)


def init_adam(params: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, epsilon=1e-8) -> AdamState:
    return AdamState(
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        scratch=[np.empty_like(p) for p in params],
    )


def adam_update(
    state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam step; parameters and state update in place."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("params/grads do not match the optimizer state")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    lr_t = state.lr * math.sqrt(c2) / c1
    eps_t = state.epsilon * math.sqrt(c2)
    for p, g, m, v, s in zip(params, grads, state.m, state.v, state.scratch):
        m *= state.beta1
        np.multiply(g, 1.0 - state.beta1, out=s)
        m += s
        v *= state.beta2
        np.multiply(g, g, out=s)
        s *= 1.0 - state.beta2
        v += s
        np.sqrt(v, out=s)
        s += eps_t
        np.divide(m, s, out=s)
        s *= lr_t
        p -= s
    return params, state
