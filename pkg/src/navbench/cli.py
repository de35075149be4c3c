"""``navbench`` command line: ``train``, ``compare`` and ``validate``.

Exit status: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from navbench.harness import ALGORITHMS, ConfigError, ExperimentConfig, RunAborted, load_run, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

DEFAULTS = ExperimentConfig(algorithm="q")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_hp(items: list[str]) -> dict:
    """``key=value`` pairs; values are JSON when they parse, comma lists become lists."""
    out = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--hp expects key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            if "," in raw:
                value = [json.loads(v) if v.strip().lstrip("-").replace(".", "", 1).isdigit() else v
                         for v in raw.split(",")]
            else:
                value = raw
        out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="navbench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    d = DEFAULTS

    t = sub.add_parser("train", help="train one agent (or one per seed) and write a run directory")
    sup = argparse.SUPPRESS
    t.add_argument("--algo", choices=ALGORITHMS, default=sup,
                   help="learner: q, dqn or ppo (required unless given in --config)")
    t.add_argument("--map", default=sup, help=f"map file or bundled map name (default: {d.map})")
    t.add_argument("--episodes", type=int, default=sup, help=f"episodes to run (default: {d.episodes})")
    t.add_argument("--seed", type=int, default=sup, help=f"RNG seed (default: {d.seed})")
    t.add_argument("--seeds", default=None,
                   help="comma-separated seed list; one run per seed, overrides --seed (default: none)")
    t.add_argument("--workers", type=int, default=1,
                   help="parallel worker processes for --seeds (default: 1)")
    t.add_argument("--out", default=sup, help=f"parent directory for run directories (default: {d.out_dir})")
    t.add_argument("--config", default=None, help="JSON config file; flags override it (default: none)")
    t.add_argument("--p-fall", type=float, default=sup,
                   help=f"fall probability per successful forward move (default: {d.p_fall})")
    t.add_argument("--max-steps", type=int, default=sup, help=f"episode step cap (default: {d.max_steps})")
    t.add_argument("--checkpoint-every", type=int, default=sup,
                   help=f"episodes between checkpoints, 0 = only at the end (default: {d.checkpoint_every})")
    t.add_argument("--timing", action="store_true", default=sup,
                   help="record wall_time_ms per episode; makes metrics non-reproducible (default: off)")
    t.add_argument("--hp", action="append", default=[], metavar="KEY=VALUE",
                   help="algorithm hyperparameter override, repeatable (default: agent defaults)")
    t.add_argument("--quiet", action="store_true", help="no progress output (default: off)")

    c = sub.add_parser("compare", help="compare run directories and write figure-data CSVs")
    c.add_argument("runs", nargs="+", help="run directories (at least two)")
    c.add_argument("--out", default="comparison", help="output directory (default: comparison)")
    c.add_argument("--group-by", choices=("algorithm", "run"), default="algorithm",
                   help="pool runs per algorithm or keep each run separate (default: algorithm)")
    c.add_argument("--window", type=int, default=100, help="smoothing window in episodes (default: 100)")
    c.add_argument("--bins", type=int, default=20, help="histogram bins (default: 20)")

    v = sub.add_parser("validate", help="run the built-in oracle checks")
    v.add_argument("--seed", type=int, default=0, help="seed for the randomized checks (default: 0)")
    return p


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    data: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
    flags = {"algo": "algorithm", "map": "map", "episodes": "episodes", "seed": "seed", "out": "out_dir",
             "p_fall": "p_fall", "max_steps": "max_steps", "checkpoint_every": "checkpoint_every",
             "timing": "timing"}
    for flag, key in flags.items():
        if hasattr(args, flag):
            data[key] = getattr(args, flag)
    hp = dict(data.get("hyperparameters", {}))
    hp.update(parse_hp(args.hp))
    data["hyperparameters"] = hp
    if "algorithm" not in data:
        raise UsageError(f"--algo is required (one of {{{','.join(ALGORITHMS)}}})")
    try:
        return ExperimentConfig.from_dict(data).validate()
    except (ConfigError, TypeError) as exc:
        raise UsageError(str(exc)) from None


def _train_one(config: ExperimentConfig, quiet: bool) -> tuple[str, dict]:
    progress = None
    if not quiet:
        every = max(config.episodes // 20, 1)

        def progress(rec):
            if rec.episode % every == 0:
                print(f"[{config.algorithm} seed={config.seed}] episode {rec.episode}/{config.episodes} "
                      f"reward={rec.total_reward:.1f} steps={rec.steps} goal={int(rec.reached_goal)}",
                      file=sys.stderr, flush=True)
    run_dir = run_experiment(config, progress=progress)
    manifest, _ = load_run(run_dir)
    return str(run_dir), manifest["summary"]


def cmd_train(args) -> int:
    config = resolve_config(args)
    configs = [config]
    if args.seeds:
        try:
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise UsageError(f"--seeds expects integers, got {args.seeds!r}") from None
        configs = [ExperimentConfig.from_dict({**config.to_dict(), "seed": s}) for s in seeds]
    if args.workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_train_one, configs, [True] * len(configs)))
    else:
        results = [_train_one(c, args.quiet) for c in configs]
    for run_dir, summary in results:
        print(run_dir)
        print(f"episodes={summary['episodes']} success_rate={summary['success_rate']:.4f} "
              f"mean_reward={summary['mean_reward']:.4f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    from navbench.compare import compare_runs

    if len(args.runs) < 2:
        raise UsageError("compare needs at least two run directories")
    if args.window < 1 or args.bins < 1:
        raise UsageError("--window and --bins must be >= 1")
    analysis = compare_runs(args.runs, args.out, args.group_by, args.window, args.bins)
    print(args.out)
    for label, agg in analysis["steps_to_goal"].items():
        pooled = agg["pooled"]
        med = "absent" if pooled["median"] is None else f"{pooled['median']:.1f}"
        reward_med = analysis["metrics"]["reward"]["summaries"][label]["median"]
        print(f"{label}: success_rate={pooled['success_rate']:.4f} median_steps_to_goal={med} "
              f"median_reward={reward_med:.2f}")
    return EXIT_OK


def run_checks(seed: int = 0, grad_fn=None) -> list[tuple[str, bool, str]]:
    """Named oracle checks as ``(name, passed, detail)``."""
    from navbench import oracles

    results = []
    kwargs = {} if grad_fn is None else {"grad_fn": grad_fn}
    err = oracles.gradient_check(100, seed=seed, **kwargs)
    results.append(("gradient_check", err < 1e-4, f"max relative error {err:.3e} (limit 1e-4)"))
    err = oracles.gae_check(100, 20, seed=seed)
    results.append(("gae_oracle", err < 1e-10, f"max abs error {err:.3e} (limit 1e-10)"))
    bad = oracles.tabular_smoke(seed=seed)
    results.append(("value_iteration_smoke", not bad, f"{len(bad)} mismatched states"))
    return results


def cmd_validate(args) -> int:
    failed = False
    for name, ok, detail in run_checks(args.seed):
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failed |= not ok
    return EXIT_RUNTIME if failed else EXIT_OK


COMMANDS = {"train": cmd_train, "compare": cmd_compare, "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"navbench {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RunAborted as exc:
        print(f"navbench {args.command}: {exc} (run directory {exc.run_dir})", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"navbench {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
