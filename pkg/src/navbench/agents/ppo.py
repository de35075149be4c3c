"""Actor-critic PPO: shared trunk, policy and value heads, GAE, clipped surrogate."""

from __future__ import annotations

import numpy as np

from navbench.nn import (RELU, Adam, Mlp, TrainingError, categorical_sample, entropy,
                         init_network, log_softmax)


def compute_gae(rewards, values, terminals, bootstrap_value: float | None,
                gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalised advantage estimates and returns (un-normalised).

    ``bootstrap_value`` is V of the state following the last step; it may only
    be omitted when the last step is terminal.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    terminals = np.asarray(terminals, dtype=bool)
    n = len(rewards)
    if n == 0:
        raise ValueError("empty rollout")
    if bootstrap_value is None:
        if not terminals[-1]:
            raise ValueError("bootstrap value required when the rollout ends mid-episode")
        bootstrap_value = 0.0
    adv = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        next_value = bootstrap_value if t == n - 1 else values[t + 1]
        live = 0.0 if terminals[t] else 1.0
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
    return adv, adv + values


def probability_ratio(logp_new, logp_old):
    return np.exp(np.asarray(logp_new) - np.asarray(logp_old))


def clipped_surrogate(ratio, advantages, clip: float):
    """Per-sample ``min(r*A, clip(r, 1-eps, 1+eps)*A)``."""
    ratio = np.asarray(ratio, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    return np.minimum(ratio * advantages, np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantages)


class RolloutBuffer:
    def __init__(self):
        self.clear()

    def clear(self) -> None:
        self.states: list[np.ndarray] = []
        self.actions: list[int] = []
        self.log_probs: list[float] = []
        self.rewards: list[float] = []
        self.values: list[float] = []
        self.terminals: list[bool] = []
        self.advantages: np.ndarray | None = None
        self.returns: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.rewards)

    def add(self, state, action, log_prob, reward, value, terminal) -> None:
        self.states.append(np.asarray(state, dtype=np.float64))
        self.actions.append(int(action))
        self.log_probs.append(float(log_prob))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.terminals.append(bool(terminal))

    def finish(self, bootstrap_value: float | None, gamma: float, lam: float) -> None:
        self.advantages, self.returns = compute_gae(self.rewards, self.values, self.terminals,
                                                    bootstrap_value, gamma, lam)


class PpoAgent:
    observation = "features"

    def __init__(self, n_features: int, n_actions: int = 4, trunk: tuple[int, ...] = (256, 256),
                 head_hidden: int | None = 256, gamma: float = 0.99, lam: float = 0.95,
                 clip: float = 0.2, ent_coef: float = 0.01, vf_coef: float = 0.5,
                 epochs: int = 4, minibatch_size: int = 256, horizon: int = 2048,
                 lr: float = 3e-4, max_grad_norm: float | None = 0.5, normalize_advantages: bool = True,
                 reward_scale: float = 0.01, seed: int | np.random.Generator = 0):
        if not 0.0 < clip < 1.0:
            raise ValueError("clip must lie in (0, 1)")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.trunk = init_network([n_features, *trunk], rng, output_activation=RELU)
        width = trunk[-1]
        head = [head_hidden] if head_hidden else []
        self.actor = init_network([width, *head, n_actions], rng, output_scale=0.01)
        self.critic = init_network([width, *head, 1], rng)
        self.optimizer = Adam(self.parameters(), lr=lr, max_grad_norm=max_grad_norm)
        self.rollout = RolloutBuffer()
        self.rng = rng
        self.n_actions = n_actions
        self.gamma, self.lam, self.clip = gamma, lam, clip
        self.ent_coef, self.vf_coef = ent_coef, vf_coef
        self.epochs, self.minibatch_size, self.horizon = epochs, minibatch_size, horizon
        self.normalize_advantages = normalize_advantages
        self.reward_scale = reward_scale
        self.updates = 0
        self.history: list[dict] = []
        self._pending: tuple[int, float, float] | None = None
        self._episode_entropy: list[float] = []
        self._exploration = float(np.log(n_actions))

    @property
    def param_count(self) -> int:
        return self.trunk.param_count + self.actor.param_count + self.critic.param_count

    def parameters(self) -> list[np.ndarray]:
        return self.trunk.parameters() + self.actor.parameters() + self.critic.parameters()

    @property
    def exploration(self) -> float:
        return self._exploration

    def evaluate(self, states: np.ndarray):
        h, c_trunk = self.trunk.forward(states)
        logits, c_actor = self.actor.forward(h)
        values, c_critic = self.critic.forward(h)
        return logits, values[..., 0], (c_trunk, c_actor, c_critic)

    def policy_step(self, features: np.ndarray, rng: np.random.Generator) -> tuple[int, float, float]:
        """Sample an action; returns ``(action, log-probability, value estimate)``."""
        logits, value, _ = self.evaluate(features)
        if not np.all(np.isfinite(logits)) or not np.isfinite(value):
            raise TrainingError("non-finite policy output")
        logp = log_softmax(logits)
        probs = np.exp(logp)
        action = categorical_sample(probs, rng)
        self._episode_entropy.append(entropy(probs))
        return action, float(logp[action]), float(value)

    def value(self, features: np.ndarray) -> float:
        return float(self.critic(self.trunk(features))[0])

    def act(self, features: np.ndarray, rng: np.random.Generator) -> int:
        self._pending = self.policy_step(features, rng)
        return self._pending[0]

    def observe(self, state, action, reward, next_state, terminal, truncated=False) -> dict | None:
        if self._pending is None or self._pending[0] != action:
            # action chosen outside act(): score it under the current policy
            logits, value, _ = self.evaluate(state)
            self._pending = (action, float(log_softmax(logits)[action]), float(value))
        _, logp, value = self._pending
        self._pending = None
        reward = reward * self.reward_scale
        if truncated and not terminal:
            # time-limit cut: fold the bootstrap into the reward and end the trace
            reward += self.gamma * self.value(next_state)
        self.rollout.add(state, action, logp, reward, value, terminal or truncated)
        if len(self.rollout) < self.horizon:
            return None
        done = terminal or truncated
        self.rollout.finish(None if done else self.value(next_state), self.gamma, self.lam)
        return self.update()

    def end_episode(self) -> float:
        """Close the episode; returns its mean policy entropy."""
        if self._episode_entropy:
            self._exploration = float(np.mean(self._episode_entropy))
        self._episode_entropy = []
        return self._exploration

    def minibatch_loss(self, states, actions, old_logp, advantages, returns):
        """Loss terms and gradients for one minibatch (no optimizer step)."""
        n = len(actions)
        rows = np.arange(n)
        logits, values, (c_trunk, c_actor, c_critic) = self.evaluate(states)
        logp_all = log_softmax(logits)
        probs = np.exp(logp_all)
        logp = logp_all[rows, actions]
        ratio = probability_ratio(logp, old_logp)
        objective = clipped_surrogate(ratio, advantages, self.clip)
        policy_loss = -float(objective.mean())
        value_err = values - returns
        value_loss = float(np.mean(value_err ** 2))
        ent = entropy(probs)
        mean_entropy = float(ent.mean())
        total = policy_loss + self.vf_coef * value_loss - self.ent_coef * mean_entropy
        if not np.isfinite(total):
            raise TrainingError(f"non-finite PPO loss at update {self.updates}")

        unclipped = ratio * advantages <= np.clip(ratio, 1 - self.clip, 1 + self.clip) * advantages
        d_logp = -np.where(unclipped, ratio * advantages, 0.0) / n
        onehot = np.zeros_like(probs)
        onehot[rows, actions] = 1.0
        g_logits = d_logp[:, None] * (onehot - probs)
        g_logits += (self.ent_coef / n) * probs * (logp_all + ent[:, None])
        g_values = (self.vf_coef * 2.0 / n) * value_err

        g_actor, g_h1 = self.actor.backward(c_actor, g_logits)
        g_critic, g_h2 = self.critic.backward(c_critic, g_values[:, None])
        g_trunk, _ = self.trunk.backward(c_trunk, g_h1 + g_h2)
        stats = {"policy_loss": policy_loss, "value_loss": value_loss, "entropy": mean_entropy,
                 "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > self.clip)), "total_loss": total}
        return stats, g_trunk + g_actor + g_critic

    def update(self) -> dict:
        """Run ``epochs`` passes of shuffled minibatch steps over the rollout, then clear it."""
        ro = self.rollout
        if ro.advantages is None:
            raise ValueError("advantages not computed; call rollout.finish() first")
        states = np.stack(ro.states)
        actions = np.asarray(ro.actions)
        old_logp = np.asarray(ro.log_probs)
        returns = ro.returns
        adv = ro.advantages
        if self.normalize_advantages and len(adv) > 1:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        n = len(actions)
        steps = []
        for _ in range(self.epochs):
            order = self.rng.permutation(n)
            for start in range(0, n, self.minibatch_size):
                idx = order[start:start + self.minibatch_size]
                stats, grads = self.minibatch_loss(states[idx], actions[idx], old_logp[idx],
                                                   adv[idx], returns[idx])
                self.optimizer.step(grads)
                steps.append(stats)
        ro.clear()
        self.updates += 1
        diag = {k: float(np.mean([s[k] for s in steps])) for k in steps[0]}
        diag["first_minibatch"] = steps[0]
        diag["update"] = self.updates
        self.history.append(diag)
        return diag

    def state_dict(self) -> dict:
        return {"trunk": self.trunk.state_dict(), "actor": self.actor.state_dict(),
                "critic": self.critic.state_dict(), "optimizer": self.optimizer.state_dict(),
                "updates": self.updates, "rng": self.rng.bit_generator.state}

    def load_state_dict(self, state: dict) -> None:
        for name in ("trunk", "actor", "critic"):
            getattr(self, name).copy_from(Mlp.from_state_dict(state[name]))
        self.optimizer.load_state_dict(state["optimizer"])
        self.updates = int(state["updates"])
        self.rng.bit_generator.state = state["rng"]
