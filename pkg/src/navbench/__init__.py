"""Grid-world navigation benchmark: tabular Q-learning, DQN and PPO on an occupancy grid."""

__version__ = "0.1.0"
