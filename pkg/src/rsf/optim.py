"""Adam with bias correction and a cosine learning-rate schedule.

Operates on flat dicts of named numpy arrays so the fitter can mix
scalars (thetas, sigmas) with mask-logit grids in one optimizer state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Params = dict[str, np.ndarray]


def cosine_lr(base_lr: float, step: int, period: int) -> float:
    """Cosine decay restarting every ``period`` steps; step 0 gives base_lr."""
    if period <= 0:
        return base_lr
    phase = (step % period) / period
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * phase))


@dataclass
class Adam:
    """Standard Adam: bias-corrected first/second moments.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
    p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)

    ``schedule_period`` of 0 disables the cosine schedule (constant lr).
    """

    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule_period: int = 0
    t: int = field(default=0, init=False)
    m: Params = field(default_factory=dict, init=False)
    v: Params = field(default_factory=dict, init=False)

    def __post_init__(self) -> None:
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError(f"betas must lie in (0, 1), got {self.beta1}, {self.beta2}")

    @property
    def current_lr(self) -> float:
        return cosine_lr(self.lr, self.t, self.schedule_period)

    def step(self, params: Params, grads: Params) -> Params:
        """Return updated parameters; moments update in place."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        lr_t = self.current_lr
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        out: Params = {}
        for name, p in params.items():
            g = grads[name]
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(p)
                self.m[name] = m
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            out[name] = p - lr_t * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        return out
