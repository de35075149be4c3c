"""Learning agents.

All agents share the small protocol the harness drives:

* ``observation`` -- ``"discrete"`` (state index) or ``"features"`` (vector)
* ``act(obs, rng) -> int``
* ``observe(obs, action, reward, next_obs, terminal, truncated)``
* ``end_episode()``
* ``exploration`` -- epsilon, or mean policy entropy over the last episode
* ``state_dict()`` / ``load_state_dict()`` for checkpoints
"""

from navbench.agents.schedule import EpsilonSchedule, epsilon_greedy
from navbench.agents.tabular import QLearningAgent
from navbench.agents.dqn import DqnAgent, ReplayBuffer, Transition
from navbench.agents.ppo import PpoAgent, RolloutBuffer

__all__ = ["EpsilonSchedule", "epsilon_greedy", "QLearningAgent", "DqnAgent", "ReplayBuffer",
           "Transition", "PpoAgent", "RolloutBuffer"]
