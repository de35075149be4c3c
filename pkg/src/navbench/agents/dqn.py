"""Deep Q-network with uniform experience replay and a periodically synced target network."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from navbench.agents.schedule import EpsilonSchedule, epsilon_greedy
from navbench.nn import Adam, Mlp, TrainingError, huber, init_network, mse


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray


class BufferNotReady(LookupError):
    pass


class ReplayBuffer:
    """Fixed-capacity ring of transitions; once full the oldest entry is overwritten."""

    def __init__(self, capacity: int, n_features: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.n_features = n_features
        self.states = np.zeros((capacity, n_features))
        self.next_states = np.zeros((capacity, n_features))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminals = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        state = np.asarray(t.state, dtype=np.float64)
        if state.shape != (self.n_features,):
            raise ValueError(f"state has shape {state.shape}, buffer holds {self.n_features} features")
        i = self.cursor
        self.states[i] = state
        self.next_states[i] = t.next_state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.terminals[i] = float(t.terminal)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ready(self, batch_size: int) -> bool:
        return self.size >= batch_size

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if not self.ready(batch_size):
            raise BufferNotReady(f"buffer holds {self.size} < {batch_size} transitions")
        return rng.integers(self.size, size=batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform draw with replacement over the current contents."""
        idx = self.sample_indices(batch_size, rng)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.terminals[idx])

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        start = self.cursor if self.size == self.capacity else 0
        order = [(start + k) % self.capacity for k in range(self.size)]
        return [Transition(self.states[i].copy(), int(self.actions[i]), float(self.rewards[i]),
                           self.next_states[i].copy(), bool(self.terminals[i])) for i in order]


def td_targets(rewards: np.ndarray, next_q: np.ndarray, terminals: np.ndarray, gamma: float) -> np.ndarray:
    """``r + gamma * max_a' Q_target(s', a')``, with the bootstrap masked on terminal rows."""
    return rewards + gamma * next_q.max(axis=-1) * (1.0 - terminals)


class DqnAgent:
    observation = "features"

    def __init__(self, n_features: int, n_actions: int = 4, hidden: tuple[int, ...] = (256, 256, 256),
                 gamma: float = 0.99, lr: float = 1e-3, batch_size: int = 64,
                 buffer_size: int = 50_000, sync_every: int = 500, learn_start: int | None = None,
                 train_every: int = 1, loss: str = "huber", huber_delta: float = 1.0,
                 max_grad_norm: float | None = None, reward_scale: float = 1.0,
                 epsilon: float = 1.0, epsilon_decay: float = 0.9995, epsilon_floor: float = 0.05,
                 seed: int | np.random.Generator = 0):
        if loss not in ("huber", "mse"):
            raise ValueError(f"loss must be 'huber' or 'mse', got {loss!r}")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.online = init_network([n_features, *hidden, n_actions], rng)
        self.target = self.online.copy()
        self.optimizer = Adam(self.online.parameters(), lr=lr, max_grad_norm=max_grad_norm)
        self.buffer = ReplayBuffer(buffer_size, n_features)
        self.schedule = EpsilonSchedule(epsilon, epsilon_decay, epsilon_floor)
        self.rng = rng
        self.gamma = gamma
        self.batch_size = batch_size
        self.sync_every = sync_every
        self.learn_start = batch_size if learn_start is None else max(learn_start, batch_size)
        self.train_every = train_every
        self.loss = loss
        self.huber_delta = huber_delta
        self.reward_scale = reward_scale
        self.env_steps = 0
        self.learn_steps = 0
        self.last_loss: float | None = None

    @property
    def exploration(self) -> float:
        return self.schedule.epsilon

    def q_values(self, features: np.ndarray) -> np.ndarray:
        q = self.online(features)
        if not np.all(np.isfinite(q)):
            raise TrainingError("non-finite Q-values from the online network")
        return q

    def act(self, features: np.ndarray, rng: np.random.Generator) -> int:
        return epsilon_greedy(self.q_values(features), self.schedule.epsilon, rng)

    def observe(self, state, action, reward, next_state, terminal, truncated=False) -> None:
        self.buffer.push(Transition(state, action, reward * self.reward_scale, next_state, terminal))
        self.env_steps += 1
        if self.env_steps % self.train_every == 0 and len(self.buffer) >= self.learn_start:
            self.learn()
            if self.learn_steps % self.sync_every == 0:
                self.sync_target()

    def learn(self, batch: Batch | None = None) -> float | None:
        """One gradient step on a replay minibatch; ``None`` if the buffer is not ready.

        Only the online network changes.
        """
        if batch is None:
            if not self.buffer.ready(self.batch_size):
                return None
            batch = self.buffer.sample(self.batch_size, self.rng)
        y = td_targets(batch.rewards, self.target(batch.next_states), batch.terminals, self.gamma)
        q, cache = self.online.forward(batch.states)
        rows = np.arange(len(batch.actions))
        pred = q[rows, batch.actions]
        if self.loss == "huber":
            loss, g = huber(pred, y, self.huber_delta)
        else:
            loss, g = mse(pred, y)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite DQN loss at learner step {self.learn_steps}")
        grad_out = np.zeros_like(q)
        grad_out[rows, batch.actions] = g
        grads, _ = self.online.backward(cache, grad_out)
        self.optimizer.step(grads)
        self.learn_steps += 1
        self.last_loss = loss
        return loss

    def sync_target(self) -> None:
        self.target.copy_from(self.online)

    def end_episode(self) -> float:
        """Decay epsilon; returns the value that was in force during the episode."""
        used = self.schedule.epsilon
        self.schedule.step()
        return used

    def state_dict(self) -> dict:
        return {"online": self.online.state_dict(), "target": self.target.state_dict(),
                "optimizer": self.optimizer.state_dict(), "epsilon": self.schedule.epsilon,
                "env_steps": self.env_steps, "learn_steps": self.learn_steps,
                "rng": self.rng.bit_generator.state}

    def load_state_dict(self, state: dict) -> None:
        self.online.copy_from(Mlp.from_state_dict(state["online"]))
        self.target.copy_from(Mlp.from_state_dict(state["target"]))
        self.optimizer.load_state_dict(state["optimizer"])
        self.schedule.epsilon = float(state["epsilon"])
        self.env_steps = int(state["env_steps"])
        self.learn_steps = int(state["learn_steps"])
        self.rng.bit_generator.state = state["rng"]
