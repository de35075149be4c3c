"""Reference computations the learners are checked against.

Each oracle takes the slow, obvious route: value iteration over an
enumerated transition table, central finite differences, and GAE as an
explicit double sum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from navbench.agents.ppo import compute_gae
from navbench.agents.tabular import QLearningAgent
from navbench.env import N_ACTIONS, GridEnv, GridMap, Heading, Occupancy, Pose, load_map
from navbench.nn import Mlp, init_network

OPEN_4X4 = """grid 4 4 0.5
S...
....
....
...G
"""


@dataclass
class TransitionTable:
    states: list[int]            # discrete indices of non-terminal states
    next_state: np.ndarray       # (n, 4) index into ``states``, -1 if terminal
    reward: np.ndarray           # (n, 4)


def transition_table(grid: GridMap) -> TransitionTable:
    """Enumerate one step from every free (cell, heading) pair, ignoring falls and timeouts."""
    if grid.obstacles:
        raise ValueError("transition table needs a static map")
    env = GridEnv(grid, max_steps=10**9, p_fall=0.0)
    poses = [Pose((x, y), h) for y in range(grid.height) for x in range(grid.width) for h in Heading
             if grid.cells[y, x] != Occupancy.FULL and (x, y) != grid.goal_cell]
    index = {env.observe_discrete(p): i for i, p in enumerate(poses)}
    nxt = np.full((len(poses), N_ACTIONS), -1, dtype=np.int64)
    rew = np.zeros((len(poses), N_ACTIONS))
    for i, pose in enumerate(poses):
        for a in range(N_ACTIONS):
            env.reset()
            env.set_pose(pose)
            out = env.step(a)
            rew[i, a] = out.reward
            if not out.reached_goal:
                nxt[i, a] = index[env.observe_discrete(out.next_pose)]
    return TransitionTable([env.observe_discrete(p) for p in poses], nxt, rew)


def value_iteration(table: TransitionTable, gamma: float, tol: float = 1e-10,
                    max_iter: int = 1_000_000) -> np.ndarray:
    """Optimal action values ``Q*`` (rows follow ``table.states``)."""
    n = len(table.states)
    v = np.zeros(n)
    live = table.next_state >= 0
    safe_next = np.where(live, table.next_state, 0)
    for _ in range(max_iter):
        q = table.reward + gamma * np.where(live, v[safe_next], 0.0)
        v_new = q.max(axis=1)
        if np.max(np.abs(v_new - v)) < tol:
            v = v_new
            break
        v = v_new
    else:
        raise RuntimeError("value iteration did not converge")
    return table.reward + gamma * np.where(live, v[safe_next], 0.0)


def unique_optimal_actions(q_star: np.ndarray, gap: float = 1e-6) -> dict[int, int]:
    """Row -> optimal action for rows whose best action beats the runner-up by ``gap``."""
    out = {}
    for i, row in enumerate(q_star):
        top2 = np.sort(row)[-2:]
        if top2[1] - top2[0] > gap:
            out[i] = int(np.argmax(row))
    return out


def policy_mismatches(q_table: np.ndarray, table: TransitionTable, q_star: np.ndarray,
                      gap: float = 1e-6) -> list[int]:
    """Discrete states where the greedy action of ``q_table`` differs from the unique optimum."""
    bad = []
    for row, best in unique_optimal_actions(q_star, gap).items():
        s = table.states[row]
        learned = q_table[s]
        if not (learned[best] > np.delete(learned, best).max()):
            bad.append(s)
    return bad


def train_tabular(grid: GridMap, episodes: int, seed: int, max_steps: int = 200,
                  **hyperparameters) -> QLearningAgent:
    from navbench.harness import run_episode, seed_streams

    streams = seed_streams(seed)
    env = GridEnv(grid, max_steps=max_steps, p_fall=0.0, rng=streams["env"])
    agent = QLearningAgent(env.n_states, N_ACTIONS, **hyperparameters)
    for ep in range(episodes):
        run_episode(env, agent, streams["act"], ep + 1)
    return agent


# -- gradients -------------------------------------------------------------------

def finite_difference_grads(net: Mlp, x: np.ndarray, g: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``L = g . net(x)`` with respect to every parameter (flattened)."""
    theta = net.flat()
    out = np.empty_like(theta)
    probe = net.copy()
    for i in range(theta.size):
        t = theta.copy()
        t[i] += h
        probe.load_flat(t)
        plus = float(np.dot(g, probe(x)))
        t[i] -= 2 * h
        probe.load_flat(t)
        minus = float(np.dot(g, probe(x)))
        out[i] = (plus - minus) / (2 * h)
    return out


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def analytic_grads(net: Mlp, x: np.ndarray, g: np.ndarray) -> np.ndarray:
    _, cache = net.forward(x)
    grads, _ = net.backward(cache, g)
    return np.concatenate([p.ravel() for p in grads])


def gradient_check(n_nets: int = 100, seed: int = 0, max_hidden_layers: int = 3, max_width: int = 32,
                   grad_fn: Callable[[Mlp, np.ndarray, np.ndarray], np.ndarray] = analytic_grads) -> float:
    """Largest relative error between ``grad_fn`` and finite differences over random networks."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_nets):
        depth = int(rng.integers(0, max_hidden_layers + 1))
        sizes = [int(v) for v in rng.integers(1, max_width + 1, size=depth + 2)]
        sizes[-1] = int(rng.integers(1, 5))
        sizes[0] = int(rng.integers(1, 9))
        net = init_network(sizes, rng)
        for b in [l.biases for l in net.layers]:
            b[...] = rng.normal(0.0, 0.1, size=b.shape)
        x = rng.normal(size=sizes[0])
        g = rng.normal(size=sizes[-1])
        worst = max(worst, relative_error(grad_fn(net, x, g), finite_difference_grads(net, x, g)))
    return worst


# -- GAE ---------------------------------------------------------------------------

def brute_force_gae(rewards, values, terminals, bootstrap_value, gamma, lam) -> np.ndarray:
    """``A_t = sum_k (gamma*lam)^k delta_{t+k}`` summed until the first terminal step."""
    n = len(rewards)
    nxt = [values[t + 1] if t + 1 < n else bootstrap_value for t in range(n)]
    deltas = [rewards[t] + (0.0 if terminals[t] else gamma * nxt[t]) - values[t] for t in range(n)]
    adv = np.zeros(n)
    for t in range(n):
        total, weight = 0.0, 1.0
        for k in range(t, n):
            total += weight * deltas[k]
            if terminals[k]:
                break
            weight *= gamma * lam
        adv[t] = total
    return adv


def gae_check(n_rollouts: int = 100, length: int = 20, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_rollouts):
        lam = (0.0, 1.0, float(rng.uniform()))[i % 3]
        gamma = float(rng.uniform(0.8, 1.0))
        r = rng.normal(0.0, 10.0, length)
        v = rng.normal(0.0, 10.0, length)
        term = rng.random(length) < 0.15
        boot = float(rng.normal(0.0, 10.0))
        adv, _ = compute_gae(r, v, term, boot, gamma, lam)
        worst = max(worst, float(np.max(np.abs(adv - brute_force_gae(r, v, term, boot, gamma, lam)))))
    return worst


def tabular_smoke(seed: int = 0, episodes: int = 5000) -> list[int]:
    """Mismatched states after Q-learning on the open 4x4 grid (empty list means pass)."""
    grid = load_map(OPEN_4X4, "open4x4")
    agent = train_tabular(grid, episodes, seed)
    table = transition_table(grid)
    q_star = value_iteration(table, agent.gamma)
    return policy_mismatches(agent.q, table, q_star)
