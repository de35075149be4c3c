from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class EpsilonSchedule:
    """Multiplicative per-episode decay clamped at ``floor``."""

    epsilon: float = 1.0
    decay: float = 0.9995
    floor: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.floor <= self.epsilon <= 1.0:
            raise ValueError("need 0 <= floor <= epsilon <= 1")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must lie in (0, 1]")

    def step(self) -> float:
        self.epsilon = max(self.floor, self.epsilon * self.decay)
        return self.epsilon

    def after(self, episodes: int) -> float:
        """Closed form of ``step`` applied ``episodes`` times from the current value."""
        return max(self.floor, self.epsilon * self.decay ** episodes)


def epsilon_greedy(values: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform action with probability ``epsilon``, else a uniformly chosen argmax."""
    # floor(u * n) draws are cheaper than Generator.integers for scalars
    if epsilon > 0.0 and rng.random() < epsilon:
        return min(int(rng.random() * len(values)), len(values) - 1)
    vals = values.tolist() if isinstance(values, np.ndarray) else list(values)
    top = max(vals)
    if vals.count(top) == 1:
        return vals.index(top)
    best = [i for i, v in enumerate(vals) if v == top]
    return best[min(int(rng.random() * len(best)), len(best) - 1)]
