"""Gradient-descent update rules over named parameter dictionaries.

Every optimizer exposes the same contract: ``step(params, grads)`` takes
two name-keyed dictionaries of equally-shaped numpy arrays and returns
the updated parameter dictionary, mutating only the optimizer's own
moment state. A zero learning rate turns every rule into an exact no-op
on the parameters (moments still evolve), which the tests rely on.
"""

from __future__ import annotations

import numpy as np

from .tensor import ContractError

__all__ = [
    "Adam",
    "Sgd",
    "RmsProp",
    "Adagrad",
    "OPTIMIZERS",
    "make_optimizer",
    "adam_step",
]


def _check_aligned(params, grads):
    if set(params) != set(grads):
        missing = sorted(set(params) ^ set(grads))
        raise ContractError(f"params and grads disagree on names: {missing}")
    for name, value in params.items():
        if np.shape(value) != np.shape(grads[name]):
            raise ContractError(
                f"shape mismatch for {name!r}: param {np.shape(value)} "
                f"vs grad {np.shape(grads[name])}"
            )


def adam_step(params, grads, m, v, t, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns (new_params, m, v).

    ``m`` and ``v`` are the running first/second moment dictionaries
    (pass empty dicts before the first call); ``t`` is the 1-based step.
    """
    if t < 1:
        raise ContractError(f"step index must be >= 1, got {t}")
    _check_aligned(params, grads)
    out = {}
    for name, value in params.items():
        g = grads[name]
        m[name] = beta1 * m.get(name, 0.0) + (1.0 - beta1) * g
        v[name] = beta2 * v.get(name, 0.0) + (1.0 - beta2) * np.square(g)
        if lr == 0.0:  # subtracting a signed zero would flip -0.0 params
            out[name] = value
            continue
        m_hat = m[name] / (1.0 - beta1**t)
        v_hat = v[name] / (1.0 - beta2**t)
        out[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out, m, v


class Adam:
    def __init__(self, learning_rate=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params, grads):
        self.t += 1
        out, self.m, self.v = adam_step(
            params, grads, self.m, self.v, self.t,
            self.learning_rate, self.beta1, self.beta2, self.eps,
        )
        return out


class Sgd:
    def __init__(self, learning_rate=0.001):
        self.learning_rate = float(learning_rate)

    def step(self, params, grads):
        _check_aligned(params, grads)
        if self.learning_rate == 0.0:
            return dict(params)
        return {
            name: value - self.learning_rate * grads[name]
            for name, value in params.items()
        }


class RmsProp:
    def __init__(self, learning_rate=0.001, rho=0.9, eps=1e-8):
        self.learning_rate = float(learning_rate)
        self.rho = float(rho)
        self.eps = float(eps)
        self.v: dict = {}

    def step(self, params, grads):
        _check_aligned(params, grads)
        out = {}
        for name, value in params.items():
            g = grads[name]
            self.v[name] = self.rho * self.v.get(name, 0.0) + (1.0 - self.rho) * np.square(g)
            if self.learning_rate == 0.0:
                out[name] = value
                continue
            out[name] = value - self.learning_rate * g / (np.sqrt(self.v[name]) + self.eps)
        return out


class Adagrad:
    def __init__(self, learning_rate=0.001, eps=1e-8):
        self.learning_rate = float(learning_rate)
        self.eps = float(eps)
        self.acc: dict = {}

    def step(self, params, grads):
        _check_aligned(params, grads)
        out = {}
        for name, value in params.items():
            g = grads[name]
            self.acc[name] = self.acc.get(name, 0.0) + np.square(g)
            if self.learning_rate == 0.0:
                out[name] = value
                continue
            out[name] = value - self.learning_rate * g / (np.sqrt(self.acc[name]) + self.eps)
        return out


OPTIMIZERS = {
    "adam": Adam,
    "sgd": Sgd,
    "rmsprop": RmsProp,
    "adagrad": Adagrad,
}


def make_optimizer(name: str, learning_rate: float, **kwargs):
    try:
        cls = OPTIMIZERS[name]
    except KeyError:
        raise ValueError(
            f"unknown optimizer {name!r}; expected one of {sorted(OPTIMIZERS)}"
        ) from None
    return cls(learning_rate=learning_rate, **kwargs)
