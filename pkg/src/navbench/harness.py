"""Training runs: episode loop, metrics stream, event log, manifest, checkpoints."""

from __future__ import annotations

import csv
import dataclasses
import inspect
import json
import logging
import math
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from navbench import __version__
from navbench.agents import DqnAgent, PpoAgent, QLearningAgent
from navbench.checkpoint import save_checkpoint
from navbench.env import N_ACTIONS, N_FEATURES, EpisodeEvent, GridEnv, read_map
from navbench.nn import TrainingError

log = logging.getLogger(__name__)

ALGORITHMS = ("q", "dqn", "ppo")
AGENT_CLASSES = {"q": QLearningAgent, "dqn": DqnAgent, "ppo": PpoAgent}
METRICS_COLUMNS = ("episode", "total_reward", "steps", "collisions", "reached_goal", "fell",
                   "timed_out", "exploration", "wall_time_ms")
METRICS_FILE = "metrics.csv"
EVENTS_FILE = "events.jsonl"
MANIFEST_FILE = "manifest.json"
CHECKPOINT_FILE = "checkpoint.npz"
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class MetricsError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class RunAborted(RuntimeError):
    def __init__(self, episode: int, cause: Exception, run_dir: Path | None = None):
        self.episode = episode
        self.cause = cause
        self.run_dir = run_dir
        super().__init__(f"training aborted in episode {episode}: {cause}")


@dataclass
class ExperimentConfig:
    algorithm: str
    map: str = "simple"
    episodes: int = 20_000
    max_steps: int = 200
    seed: int = 0
    p_fall: float = 0.01
    hyperparameters: dict = field(default_factory=dict)
    out_dir: str = "runs"
    checkpoint_every: int = 1000
    timing: bool = False

    def validate(self) -> "ExperimentConfig":
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {{{','.join(ALGORITHMS)}}}, got {self.algorithm!r}")
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if not 0.0 <= self.p_fall <= 1.0:
            raise ConfigError("p_fall must lie in [0, 1]")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")
        allowed = set(inspect.signature(AGENT_CLASSES[self.algorithm]).parameters) - {
            "n_states", "n_features", "n_actions", "seed"}
        unknown = set(self.hyperparameters) - allowed
        if unknown:
            raise ConfigError(f"unknown {self.algorithm} hyperparameters: {sorted(unknown)}; "
                              f"allowed: {sorted(allowed)}")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class EpisodeRecord:
    episode: int
    total_reward: float
    steps: int
    collisions: int
    reached_goal: bool
    fell: bool
    timed_out: bool
    exploration: float
    wall_time_ms: float = 0.0


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for the environment, action choice and agent internals."""
    env_ss, act_ss, agent_ss = np.random.SeedSequence(seed).spawn(3)
    return {"env": np.random.default_rng(env_ss), "act": np.random.default_rng(act_ss),
            "agent": np.random.default_rng(agent_ss)}


def make_agent(algorithm: str, env: GridEnv, hyperparameters: dict, rng: np.random.Generator):
    hp = dict(hyperparameters)
    for key in ("hidden", "trunk"):
        if key in hp:
            widths = hp[key] if isinstance(hp[key], (list, tuple)) else [hp[key]]
            hp[key] = tuple(int(v) for v in widths)
    if algorithm == "q":
        return QLearningAgent(env.n_states, N_ACTIONS, **hp)
    if algorithm == "dqn":
        return DqnAgent(N_FEATURES, N_ACTIONS, seed=rng, **hp)
    if algorithm == "ppo":
        return PpoAgent(N_FEATURES, N_ACTIONS, seed=rng, **hp)
    raise ConfigError(f"unknown algorithm {algorithm!r}")


def run_episode(env: GridEnv, agent, rng: np.random.Generator, episode: int = 0,
                timing: bool = False) -> tuple[EpisodeRecord, EpisodeEvent]:
    """Play one episode from the start cell, letting the agent learn as it goes."""
    t0 = time.perf_counter()
    env.reset()
    observe = env.observe_discrete if agent.observation == "discrete" else env.observe_features
    act, learn, step = agent.act, agent.observe, env.step
    obs = observe()
    total = 0.0
    collisions = 0
    while True:
        action = act(obs, rng)
        out = step(action)
        _, reward, collided, fell, goal, timed_out = out
        next_obs = observe()
        ended = goal or fell
        learn(obs, action, reward, next_obs, ended, timed_out)
        total += reward
        collisions += collided
        obs = next_obs
        if ended or timed_out:
            break
    exploration = agent.end_episode()
    wall = (time.perf_counter() - t0) * 1000.0 if timing else 0.0
    record = EpisodeRecord(episode, total, env.t, collisions, out.reached_goal, out.fell,
                           out.timed_out and not (out.reached_goal or out.fell), exploration, wall)
    return record, EpisodeEvent.from_outcome(out)


# -- metrics CSV ---------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class MetricsWriter:
    def __init__(self, path: str | Path):
        self.fh = open(path, "w", newline="", encoding="utf-8")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(METRICS_COLUMNS)

    def write(self, record: EpisodeRecord) -> None:
        self.writer.writerow([_fmt(getattr(record, c)) for c in METRICS_COLUMNS])

    def close(self) -> None:
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_metrics(path: str | Path, records) -> None:
    with MetricsWriter(path) as w:
        for r in records:
            w.write(r)


def _parse_bool(text: str) -> bool:
    if text not in ("0", "1"):
        raise ValueError(f"expected 0 or 1, got {text!r}")
    return text == "1"


_PARSERS = {"episode": int, "total_reward": float, "steps": int, "collisions": int,
            "reached_goal": _parse_bool, "fell": _parse_bool, "timed_out": _parse_bool,
            "exploration": float, "wall_time_ms": float}


def read_metrics(path: str | Path) -> list[EpisodeRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != METRICS_COLUMNS:
            raise MetricsError(f"{path}: header {header} does not match {list(METRICS_COLUMNS)}", 1)
        records = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(METRICS_COLUMNS):
                raise MetricsError(f"{path}: expected {len(METRICS_COLUMNS)} fields, got {len(row)}", lineno)
            try:
                values = {c: _PARSERS[c](v) for c, v in zip(METRICS_COLUMNS, row)}
            except ValueError as exc:
                raise MetricsError(f"{path}: {exc}", lineno) from None
            records.append(EpisodeRecord(**values))
    return records


# -- experiment driver -----------------------------------------------------------

def run_dir_name(config: ExperimentConfig, map_name: str) -> str:
    stamp = datetime.now().strftime("%Y%m%dT%H%M%S%f")
    return f"{config.algorithm}_{map_name}_{config.seed}_{stamp}"


def summarize(records: list[EpisodeRecord]) -> dict:
    n = len(records)
    if n == 0:
        return {"episodes": 0, "success_rate": 0.0, "mean_reward": None}
    return {"episodes": n,
            "success_rate": sum(r.reached_goal for r in records) / n,
            "mean_reward": math.fsum(r.total_reward for r in records) / n}


def _write_manifest(run_dir: Path, manifest: dict) -> None:
    (run_dir / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")


def run_experiment(config: ExperimentConfig, run_dir: str | Path | None = None,
                   progress=None) -> Path:
    """Train one agent for ``config.episodes`` episodes and return the run directory.

    ``progress`` is an optional callable receiving each :class:`EpisodeRecord`.
    """
    config.validate()
    grid = read_map(config.map)
    streams = seed_streams(config.seed)
    env = GridEnv(grid, max_steps=config.max_steps, p_fall=config.p_fall, rng=streams["env"])
    try:
        agent = make_agent(config.algorithm, env, config.hyperparameters, streams["agent"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad hyperparameters: {exc}") from None

    if run_dir is None:
        run_dir = Path(config.out_dir) / run_dir_name(config, grid.name)
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=False)
    manifest = {"schema_version": SCHEMA_VERSION, "version": __version__, "config": config.to_dict(),
                "seed": config.seed, "algorithm": config.algorithm, "map_name": grid.name,
                "status": "running", "episodes_completed": 0}
    if config.algorithm in ("dqn", "ppo"):
        nets = {"dqn": lambda a: a.online.param_count * 2, "ppo": lambda a: a.param_count}
        manifest["param_count"] = nets[config.algorithm](agent)
    _write_manifest(run_dir, manifest)

    def checkpoint(episode: int) -> None:
        save_checkpoint(run_dir / CHECKPOINT_FILE, {
            "episode": episode, "algorithm": config.algorithm, "agent": agent.state_dict(),
            "rng": {k: g.bit_generator.state for k, g in streams.items()}})

    records: list[EpisodeRecord] = []
    started = time.perf_counter()
    with MetricsWriter(run_dir / METRICS_FILE) as metrics, \
            open(run_dir / EVENTS_FILE, "w", encoding="utf-8") as events:
        for ep in range(1, config.episodes + 1):
            try:
                record, event = run_episode(env, agent, streams["act"], ep, config.timing)
            except TrainingError as exc:
                manifest.update(status="aborted", abort_episode=ep, error=str(exc),
                                episodes_completed=ep - 1, summary=summarize(records))
                _write_manifest(run_dir, manifest)
                raise RunAborted(ep, exc, run_dir) from exc
            metrics.write(record)
            events.write(json.dumps(event.to_dict()) + "\n")
            records.append(record)
            if progress is not None:
                progress(record)
            if config.checkpoint_every and ep % config.checkpoint_every == 0:
                metrics.fh.flush()
                checkpoint(ep)
    checkpoint(config.episodes)
    manifest.update(status="complete", episodes_completed=config.episodes, summary=summarize(records))
    if config.timing:
        manifest["runtime_s"] = time.perf_counter() - started
    _write_manifest(run_dir, manifest)
    log.info("run %s complete: %s", run_dir, manifest["summary"])
    return run_dir


def load_run(run_dir: str | Path) -> tuple[dict, list[EpisodeRecord]]:
    run_dir = Path(run_dir)
    manifest_path = run_dir / MANIFEST_FILE
    if not manifest_path.is_file():
        raise FileNotFoundError(f"{run_dir}: no {MANIFEST_FILE}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise MetricsError(f"{run_dir}: schema version {manifest.get('schema_version')} "
                           f"is not supported (expected {SCHEMA_VERSION})")
    return manifest, read_metrics(run_dir / METRICS_FILE)
