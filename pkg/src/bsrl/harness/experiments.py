"""Sweeps over config fields, the reward-set growth study and the controller-discount study.

Every cell writes only inside its own subdirectory and derives all randomness
from its own config, so cells give identical artifacts in any order or in
parallel. ``BSRL_THREADS`` caps the number of worker processes (default 1).
"""

from __future__ import annotations

import csv
import json
import os
import re
from concurrent.futures import ProcessPoolExecutor
from itertools import product
from pathlib import Path

from .config import DUNGEON_CHANNEL_SCALES, parse_config, set_path
from .plotting import plot_learning_curves, plot_milestones, plot_series_table, read_jsonl
from .stats import mean_se, milestone_report  # noqa: F401  (re-exported)
from .train import METRICS_FILE, train

# channel order for the growth study: task and depth first, then food, armour, experience
GROWTH_ORDER = ("scout", "dlvl", "food", "ac", "xp")
GAMMA_CONTROLLER_SWEEP = (0.99, 0.999, 0.9995, 0.9999)


def worker_count(deterministic: bool = False) -> int:
    if deterministic:
        return 1
    try:
        return max(1, int(os.environ.get("BSRL_THREADS", "1")))
    except ValueError:
        return 1


def cell_name(index: int, assignment: dict) -> str:
    parts = [f"{k.split('.')[-1]}={v}" for k, v in assignment.items()]
    text = "__".join(parts)
    text = re.sub(r"[^A-Za-z0-9_.=-]+", "-", text)
    return f"cell{index:03d}__{text}"


def _run_cell(job):
    name, data, out = job
    cfg = parse_config(data)
    result = train(cfg, out)
    return name, result.final_eval


def run_cells(jobs, workers: int = 1) -> dict:
    """Run (name, config dict, out dir) jobs; returns {name: final eval record} in job order."""
    jobs = list(jobs)
    for _, data, _ in jobs:
        parse_config(data)  # fail fast before any process starts
    if workers <= 1 or len(jobs) <= 1:
        results = [_run_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_run_cell, jobs))
    return dict(results)


def sweep(base: dict, grid: dict, out_dir, workers: int = 1) -> list[dict]:
    """Cartesian grid over dot-path config keys; one subdirectory per cell."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    keys = list(grid)
    jobs, manifest = [], []
    for i, values in enumerate(product(*(grid[k] for k in keys))):
        assignment = dict(zip(keys, values))
        data = base
        for k, v in assignment.items():
            data = set_path(data, k, v)
        name = cell_name(i, assignment)
        jobs.append((name, data, str(out / name)))
        manifest.append({"cell": name, "assignment": assignment})
    (out / "sweep.json").write_text(json.dumps({"base": base, "cells": manifest}, indent=2, sort_keys=True) + "\n")
    finals = run_cells(jobs, workers)
    rows = []
    for m in manifest:
        ev = finals[m["cell"]]
        rows.append({**m, "final_return": ev["return_mean"], "final_return_se": ev["return_se"]})
    _write_csv(out / "results.csv", [{"cell": r["cell"], **{k: json.dumps(v) for k, v in r["assignment"].items()},
                                      "final_return": r["final_return"], "final_return_se": r["final_return_se"]}
                                     for r in rows])
    return rows


def _write_csv(path, rows):
    path = Path(path)
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _fmt(x: float) -> str:
    return repr(float(x))


# --------------------------------------------------------------------------- #
# reward-set growth
# --------------------------------------------------------------------------- #


def growth_config(base: dict, method: str, channels, seed: int) -> dict:
    data = set_path(base, "env.channels", list(channels))
    data = set_path(data, "channel_scales", [DUNGEON_CHANNEL_SCALES[c] for c in channels])
    data = set_path(data, "mode", method)
    data = set_path(data, "seed", seed)
    data.pop("static_rho", None)
    return data


def non_decreasing_fraction(values_by_n: dict) -> dict:
    """Per seed: is the final return non-decreasing in n? ``values_by_n`` maps n -> list over seeds."""
    ns = sorted(values_by_n)
    seeds = len(values_by_n[ns[0]])
    flags = [all(values_by_n[b][s] >= values_by_n[a][s] for a, b in zip(ns, ns[1:])) for s in range(seeds)]
    return {"per_seed": flags, "count": int(sum(flags))}


def reward_set_growth(base: dict, out_dir, channels=GROWTH_ORDER, prefixes=(2, 3, 4, 5),
                      seeds=(0, 1, 2, 3, 4), methods=("hbs", "sol"), workers: int = 1) -> dict:
    """Train each method on every channel prefix with matched seeds and budgets.

    Writes growth.csv (one row per method x prefix x seed), growth_summary.csv,
    growth.svg and growth_report.json. The directional claim (HBS improves
    with more channels more often than SOL) is recorded, not asserted.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    missing = [c for c in channels if c not in DUNGEON_CHANNEL_SCALES]
    if missing:
        raise ValueError(f"unknown channels {missing}")
    jobs, index = [], []
    for method in methods:
        for n in prefixes:
            for seed in seeds:
                name = f"{method}_n{n}_seed{seed}"
                jobs.append((name, growth_config(base, method, channels[:n], seed), str(out / name)))
                index.append((name, method, n, seed))
    finals = run_cells(jobs, workers)
    rows = [{"method": m, "n": n, "channels": "+".join(channels[:n]), "seed": s,
             "final_return": _fmt(finals[name]["return_mean"])} for name, m, n, s in index]
    _write_csv(out / "growth.csv", rows)

    summary, trend = [], {}
    for method in methods:
        by_n = {}
        for n in prefixes:
            vals = [float(r["final_return"]) for r in rows if r["method"] == method and r["n"] == n]
            by_n[n] = vals
            m, se = mean_se(vals)
            summary.append({"method": method, "n": n, "mean": _fmt(m), "se": _fmt(se), "seeds": len(vals)})
        trend[method] = non_decreasing_fraction(by_n)
    _write_csv(out / "growth_summary.csv", summary)
    plot_series_table(rows, out / "growth.svg", x="n", y="final_return", group="method",
                      title="final return as the reward set grows", xlabel="number of reward channels")
    observed = None
    if "hbs" in trend and "sol" in trend:
        observed = trend["hbs"]["count"] > trend["sol"]["count"]
    report = {"channels": list(channels), "prefixes": list(prefixes), "seeds": list(seeds),
              "non_decreasing": trend, "hbs_gains_more_often_than_sol": observed, "summary": summary}
    (out / "growth_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


# --------------------------------------------------------------------------- #
# controller discount sweep
# --------------------------------------------------------------------------- #


def gamma_sweep(base: dict, out_dir, gammas=GAMMA_CONTROLLER_SWEEP, gamma_option: float = 0.999,
                seeds=(0, 1, 2, 3, 4), flat_gamma: float | None = 0.9995, flat_rho=None, workers: int = 1) -> dict:
    """HBS over controller discounts with the intra-option discount fixed, plus an optional flat baseline.

    Writes gamma_sweep.csv, gamma_curves.svg and gamma_final.svg.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs, index = [], []
    for g in gammas:
        for seed in seeds:
            data = set_path(set_path(set_path(base, "mode", "hbs"), "gamma_controller", g), "gamma_option", gamma_option)
            data = set_path(data, "seed", seed)
            data.pop("static_rho", None)
            name = f"hbs_gc{g}_seed{seed}"
            jobs.append((name, data, str(out / name)))
            index.append((name, f"hbs gamma_ctrl={g}", g, seed))
    if flat_gamma is not None:
        for seed in seeds:
            data = set_path(set_path(base, "mode", "flat"), "gamma_flat", flat_gamma)
            if flat_rho is not None:
                data = set_path(data, "static_rho", list(flat_rho))
            elif data.get("static_rho") is None:
                raise ValueError("flat baseline needs static_rho in the base config or flat_rho")
            data = set_path(data, "seed", seed)
            name = f"flat_g{flat_gamma}_seed{seed}"
            jobs.append((name, data, str(out / name)))
            index.append((name, f"flat gamma={flat_gamma}", flat_gamma, seed))
    finals = run_cells(jobs, workers)
    rows = [{"label": label, "gamma": g, "seed": s, "final_return": _fmt(finals[name]["return_mean"])}
            for name, label, g, s in index]
    _write_csv(out / "gamma_sweep.csv", rows)
    groups: dict = {}
    for name, label, _, _ in index:
        groups.setdefault(label, []).append(out / name / METRICS_FILE)
    plot_learning_curves(groups, out / "gamma_curves.svg", title="controller discount sweep")
    hbs_rows = [r for r in rows if r["label"].startswith("hbs")]
    plot_series_table(hbs_rows, out / "gamma_final.svg", x="gamma", y="final_return", group="label",
                      title="final return by controller discount", xlabel="controller discount")
    summary = {}
    for label in groups:
        vals = [float(r["final_return"]) for r in rows if r["label"] == label]
        m, se = mean_se(vals)
        summary[label] = {"mean": float(m), "se": float(se)}
    report = {"gamma_option": gamma_option, "gammas": list(gammas), "summary": summary}
    (out / "gamma_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def milestone_study(run_dirs: dict, out) -> dict:
    """Milestone rates from each run's final eval block; ``run_dirs`` maps label -> per-seed dirs."""
    reports = {}
    for label, dirs in run_dirs.items():
        groups = []
        for d in dirs:
            final = [r for r in read_jsonl(Path(d) / METRICS_FILE) if r["kind"] == "eval"][-1]
            groups.append(final["milestones"])
        names = sorted(set().union(*(g.keys() for g in groups)))
        rep = {}
        for m in names:
            per_seed = [g.get(m, 0.0) for g in groups]
            mean, se = mean_se(per_seed)
            rep[m] = {"rate": float(mean), "se": float(se), "per_seed": per_seed}
        reports[label] = rep
    plot_milestones(reports, out, title="milestone visitation")
    return reports

