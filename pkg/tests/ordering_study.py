"""Long-budget comparison of the three learners on the bundled ``simple`` map.

Run directories are kept under ``NAVBENCH_STUDY_DIR`` (default ``study_runs`` next
to this file) and reused when a complete run with the same configuration exists,
so the hours-long study can be launched once and checked later::

    python3 tests/ordering_study.py          # train whatever is missing
    NAVBENCH_SLOW=1 pytest tests/test_acceptance.py -k ordering
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import numpy as np

from navbench.harness import ExperimentConfig, load_run, run_experiment
from navbench.stats import steps_to_goal_aggregate

EPISODES = 15_000
SEEDS = (0, 1, 2, 3, 4)
# cheapest first so partial results show up early
ORDER = ("q", "ppo", "dqn")


def study_dir() -> Path:
    return Path(os.environ.get("NAVBENCH_STUDY_DIR", Path(__file__).resolve().parent / "study_runs"))


def study_config(algorithm: str, seed: int, root: Path) -> ExperimentConfig:
    return ExperimentConfig(algorithm=algorithm, map="simple", episodes=EPISODES, seed=seed,
                            out_dir=str(root), checkpoint_every=1000)


def ensure_run(algorithm: str, seed: int, root: Path | None = None):
    """Return ``(manifest, records)`` for one study run, training it if needed."""
    root = study_dir() if root is None else root
    config = study_config(algorithm, seed, root)
    run_dir = root / f"{algorithm}_seed{seed}"
    manifest_path = run_dir / "manifest.json"
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        if manifest.get("status") == "complete" and manifest.get("config") == config.to_dict():
            return load_run(run_dir)
        # stale or interrupted: start over
        for f in run_dir.iterdir():
            f.unlink()
        run_dir.rmdir()
    run_experiment(config, run_dir=run_dir)
    return load_run(run_dir)


def collect(root: Path | None = None) -> dict[str, list]:
    return {algo: [ensure_run(algo, s, root)[1] for s in SEEDS] for algo in ORDER}


def verdict(runs: dict[str, list]) -> dict:
    """Per-seed median steps-to-goal ordering and pooled median reward ordering."""
    medians = {algo: [steps_to_goal_aggregate(recs).median for recs in runs[algo]] for algo in ORDER}
    triples = 0
    for p, d, q in zip(medians["ppo"], medians["dqn"], medians["q"]):
        # a learner that never reached the goal has no median and cannot satisfy the ordering
        if None not in (p, d, q) and p <= d < q:
            triples += 1
    reward = {algo: float(np.median([r.total_reward for recs in runs[algo] for r in recs])) for algo in ORDER}
    success = {algo: float(np.mean([r.reached_goal for recs in runs[algo] for r in recs])) for algo in ORDER}
    return {"median_steps": medians, "ordered_triples": triples, "median_reward": reward,
            "success_rate": success,
            "reward_ordered": reward["ppo"] >= reward["dqn"] >= reward["q"]}


if __name__ == "__main__":
    root = study_dir()
    root.mkdir(parents=True, exist_ok=True)
    for algo in ORDER:
        for seed in SEEDS:
            manifest, _ = ensure_run(algo, seed, root)
            print(algo, seed, manifest["summary"], flush=True)
    json.dump(verdict(collect(root)), sys.stdout, indent=2)
    print()
