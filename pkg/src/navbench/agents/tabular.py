from __future__ import annotations

import math

import numpy as np

from navbench.agents.schedule import EpsilonSchedule, epsilon_greedy
from navbench.nn import TrainingError


def init_qtable(n_states: int, n_actions: int = 4) -> np.ndarray:
    if n_states < 1 or n_actions < 1:
        raise ValueError("state and action counts must be positive")
    return np.zeros((n_states, n_actions))


def q_update(q: np.ndarray, s: int, a: int, reward: float, s_next: int, terminal: bool,
             alpha: float, gamma: float) -> float:
    """One-step Q-learning backup of ``q[s, a]`` in place; returns the new entry.

    ``q`` is a 2-D table or a sequence of row views into one.
    """
    if not math.isfinite(reward):
        raise TrainingError(f"non-finite reward {reward}")
    target = reward if terminal else reward + gamma * max(q[s_next].tolist())
    row = q[s]
    old = row.item(a)
    row[a] = new = old + alpha * (target - old)
    return new


class QLearningAgent:
    observation = "discrete"

    def __init__(self, n_states: int, n_actions: int = 4, alpha: float = 0.1, gamma: float = 0.99,
                 epsilon: float = 1.0, epsilon_decay: float = 0.9995, epsilon_floor: float = 0.05):
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0.0 <= gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        self.q = init_qtable(n_states, n_actions)
        # row views share memory with the table and skip per-step view creation
        self._rows = list(self.q)
        self.alpha = alpha
        self.gamma = gamma
        self.schedule = EpsilonSchedule(epsilon, epsilon_decay, epsilon_floor)

    @property
    def exploration(self) -> float:
        return self.schedule.epsilon

    def act(self, state: int, rng: np.random.Generator) -> int:
        return epsilon_greedy(self._rows[state], self.schedule.epsilon, rng)

    def greedy(self, state: int) -> int:
        return int(np.argmax(self.q[state]))

    def observe(self, state, action, reward, next_state, terminal, truncated=False) -> None:
        # truncated episodes still bootstrap; only true terminals cut the target
        q_update(self._rows, state, action, reward, next_state, terminal, self.alpha, self.gamma)

    def end_episode(self) -> float:
        """Decay epsilon; returns the value that was in force during the episode."""
        used = self.schedule.epsilon
        self.schedule.step()
        return used

    def state_dict(self) -> dict:
        return {"q": self.q.copy(), "epsilon": self.schedule.epsilon}

    def load_state_dict(self, state: dict) -> None:
        q = np.asarray(state["q"], dtype=np.float64)
        if q.shape != self.q.shape:
            raise ValueError(f"Q-table shape {q.shape} != {self.q.shape}")
        self.q[...] = q
        self.schedule.epsilon = float(state["epsilon"])
