"""Adam optimizer and plateau learning-rate schedule, both hand-rolled."""

from __future__ import annotations

import math

import numpy as np


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max-logit subtraction)."""
    shifted = logits - logits.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def log_softmax_pick(logits: np.ndarray, index: int) -> float:
    """log softmax(logits)[index] via log-sum-exp, for a 1-D logit vector."""
    m = float(logits.max())
    lse = m + math.log(float(np.exp(logits - m).sum()))
    return float(logits[index]) - lse


class AdamOptimizer:
    """Standard Adam with bias correction over a fixed set of named tensors.

    Moments start at zero and the step counter is shared by all tensors in the
    group, so two optimizers (for example head vs. extractor parameter groups)
    can advance on independent schedules.
    """

    def __init__(self, names, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.names = tuple(names)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        """Update ``params`` in place from ``grads`` for this group's tensors."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name in self.names:
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            params[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {f"{prefix}t": np.array(float(self.t))}
        for name in self.names:
            if name in self.m:
                out[f"{prefix}m.{name}"] = self.m[name]
                out[f"{prefix}v.{name}"] = self.v[name]
        return out


def adam_step(params, grads, state: AdamOptimizer, lr: float):
    """Apply one Adam update; returns the mutated (params, state) pair."""
    state.step(params, grads, lr)
    return params, state


class PlateauScheduler:
    """Multiply learning rates by ``factor`` after ``patience`` stale epochs.

    An epoch is stale when the observed loss fails to improve on the best seen
    so far by more than ``min_improvement`` (absolute). The stale counter
    resets after each reduction, so a continuing plateau triggers again only
    after another full patience window.
    """

    def __init__(self, patience: int, factor: float, min_improvement: float = 1e-4):
        if not (0.0 < factor < 1.0):
            raise ValueError(f"factor must lie in (0, 1), got {factor}")
        self.patience = int(patience)
        self.factor = float(factor)
        self.min_improvement = float(min_improvement)
        self.best = math.inf
        self.stale = 0

    def observe(self, loss: float) -> bool:
        """Record an epoch loss; True when a reduction should be applied now."""
        if loss < self.best - self.min_improvement:
            self.best = loss
            self.stale = 0
            return False
        self.stale += 1
        if self.stale >= self.patience:
            self.stale = 0
            return True
        return False
