"""Cross-run comparison: figure-data CSVs plus an ``analysis.json`` bundle.

Files written into the output directory:

=========================  ====================================================
``fig4_reward.csv``        per-episode reward (mean over the group's runs), raw and smoothed
``fig5_exploration.csv``   epsilon (Q, DQN) or mean policy entropy (PPO) per episode
``fig6_steps.csv``         steps per episode for every run, with goal markers
``fig7_steps_to_goal.csv`` mean/median steps of goal episodes and success rate
``fig8_collisions.csv``    per-episode collisions, raw and smoothed
``fig9_reward_box.csv``    boxplot summary of episode reward per group
``fig9_reward_tests.csv``  pairwise Welch t and rank-sum tests on episode reward
``fig10_steps_box.csv``    boxplot summary of episode steps per group
``fig10_steps_tests.csv``  pairwise tests on episode steps
``analysis.json``          all of the above summaries, tests and histograms
=========================  ====================================================
"""

from __future__ import annotations

import csv
import itertools
import json
from pathlib import Path

import numpy as np

from navbench.harness import EpisodeRecord, MetricsError, load_run
from navbench.stats import (boxplot_summary, histogram, moving_average, steps_to_goal_aggregate,
                            welch_t_test, wilcoxon_rank_sum)

GROUPINGS = ("algorithm", "run")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def load_groups(run_dirs, group_by: str = "algorithm") -> dict[str, list[tuple[str, list[EpisodeRecord]]]]:
    """Read runs and bucket them by algorithm or keep each run separate."""
    if group_by not in GROUPINGS:
        raise ValueError(f"group_by must be one of {GROUPINGS}")
    run_dirs = [Path(d) for d in run_dirs]
    if len(run_dirs) < 2:
        raise ValueError("need at least two runs to compare")
    groups: dict[str, list] = {}
    for d in run_dirs:
        manifest, records = load_run(d)
        if not records:
            raise MetricsError(f"{d}: no episodes recorded")
        if group_by == "algorithm":
            label = manifest["algorithm"]
        else:
            label = d.name
            k = 2
            while label in groups:
                label = f"{d.name}#{k}"
                k += 1
        groups.setdefault(label, []).append((d.name, records))
    return groups


def _mean_curve(runs, field: str) -> np.ndarray:
    n = min(len(r) for _, r in runs)
    return np.mean([[getattr(rec, field) for rec in r[:n]] for _, r in runs], axis=0)


def _pooled(runs, field: str) -> np.ndarray:
    return np.array([float(getattr(rec, field)) for _, r in runs for rec in r])


def compare_runs(run_dirs, out_dir: str | Path, group_by: str = "algorithm", window: int = 100,
                 bins: int = 20) -> dict:
    groups = load_groups(run_dirs, group_by)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = list(groups)

    def curve_rows(field):
        for label in labels:
            raw = _mean_curve(groups[label], field)
            smooth = moving_average(raw, window)
            for i, (a, b) in enumerate(zip(raw, smooth), start=1):
                yield label, i, float(a), float(b)

    _write_csv(out / "fig4_reward.csv", ["label", "episode", "reward", "smoothed"], curve_rows("total_reward"))
    _write_csv(out / "fig5_exploration.csv", ["label", "episode", "exploration"],
               ((label, i, float(v)) for label in labels
                for i, v in enumerate(_mean_curve(groups[label], "exploration"), start=1)))
    _write_csv(out / "fig6_steps.csv", ["label", "run", "episode", "steps", "reached_goal"],
               ((label, run, rec.episode, rec.steps, int(rec.reached_goal))
                for label in labels for run, recs in groups[label] for rec in recs))

    steps_rows, steps_json = [], {}
    for label in labels:
        per_run = {run: steps_to_goal_aggregate(recs) for run, recs in groups[label]}
        pooled = steps_to_goal_aggregate([rec for _, recs in groups[label] for rec in recs])
        for run, agg in [*per_run.items(), ("pooled", pooled)]:
            steps_rows.append((label, run, agg.mean, agg.median, agg.success_rate, agg.successes, agg.episodes))
        steps_json[label] = {"pooled": vars(pooled), "runs": {k: vars(v) for k, v in per_run.items()}}
    _write_csv(out / "fig7_steps_to_goal.csv",
               ["label", "run", "mean_steps", "median_steps", "success_rate", "successes", "episodes"], steps_rows)
    _write_csv(out / "fig8_collisions.csv", ["label", "episode", "collisions", "smoothed"], curve_rows("collisions"))

    analysis = {"groups": {label: [run for run, _ in groups[label]] for label in labels},
                "group_by": group_by, "window": window, "steps_to_goal": steps_json, "metrics": {}}
    for fig, field, name in (("fig9", "total_reward", "reward"), ("fig10", "steps", "steps")):
        summaries = {label: boxplot_summary(_pooled(groups[label], field),
                                            _pooled(groups[label], "reached_goal") > 0)
                     for label in labels}
        _write_csv(out / f"{fig}_{name}_box.csv",
                   ["label", "count", "mean", "median", "min", "q1", "q3", "max", "iqr", "n_outliers",
                    "success_rate"],
                   ((label, s.count, s.mean, s.median, s.min, s.q1, s.q3, s.max, s.iqr, len(s.outliers),
                     s.success_rate) for label, s in summaries.items()))
        tests = []
        for a, b in itertools.combinations(labels, 2):
            xa, xb = _pooled(groups[a], field), _pooled(groups[b], field)
            for res in (welch_t_test(xa, xb), wilcoxon_rank_sum(xa, xb)):
                tests.append({"a": a, "b": b, **res.to_dict()})
        _write_csv(out / f"{fig}_{name}_tests.csv", ["a", "b", "test", "statistic", "df", "p_value", "error"],
                   ((t["a"], t["b"], t["test"], t["statistic"], t["df"], t["p_value"], t["error"]) for t in tests))
        hists = {}
        for label in labels:
            edges, counts = histogram(_pooled(groups[label], field), bins)
            hists[label] = {"edges": edges.tolist(), "counts": counts.tolist()}
        analysis["metrics"][name] = {
            "figure": fig,
            "summaries": {label: s.to_dict() for label, s in summaries.items()},
            "tests": tests, "histograms": hists}
    (out / "analysis.json").write_text(json.dumps(analysis, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return analysis
