"""
Adam optimiser and a multi-step (halving) learning-rate schedule.
"""
import logging
from typing import Dict, Sequence, Tuple

import numpy as np

from matir.tensor.core import Tensor

logger = logging.getLogger(__name__)


class Adam:
    """Bias-corrected Adam over an ordered list of named parameters."""

    def __init__(
        self,
        params: Sequence[Tuple[str, Tensor]],
        lr: float = 2e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in self.params}
        self._v: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in self.params}

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - self.beta1 ** t
        correction2 = 1.0 - self.beta2 ** t
        for name, p in self.params:
            if p.grad is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.data -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.zero_grad()


class MultiStepSchedule:
    """lr = base * gamma^(number of milestones already reached)."""

    def __init__(self, base_lr: float, milestones: Sequence[int], gamma: float = 0.5):
        self.base_lr = base_lr
        self.milestones = sorted(milestones)
        self.gamma = gamma

    def lr_at(self, step: int) -> float:
        passed = sum(1 for m in self.milestones if step >= m)
        return self.base_lr * self.gamma ** passed


def default_milestones(max_steps: int, fractions: Sequence[float] = (0.5, 0.75, 0.9)):
    return [int(max_steps * f) for f in fractions if int(max_steps * f) > 0]
