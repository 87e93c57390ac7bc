"""SVG plots: learning curves and bar charts with standard-error shading.

Output is deterministic: fixed SVG hash salt and no date metadata, so the
same inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import glob
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .stats import mean_se  # noqa: E402

plt.rcParams["svg.hashsalt"] = "bsrl"
plt.rcParams["svg.fonttype"] = "none"


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def curve(records, kind: str = "update", key: str = "return_mean"):
    rows = [r for r in records if r.get("kind") == kind and key in r]
    return np.array([r["step"] for r in rows], dtype=np.float64), np.array([r[key] for r in rows], dtype=np.float64)


def aggregate_curves(runs):
    """Align seed runs by record index (truncated to the shortest) and return (steps, mean, se)."""
    if not runs:
        raise ValueError("no runs to aggregate")
    k = min(len(x) for x, _ in runs)
    steps = np.mean([x[:k] for x, _ in runs], axis=0)
    mean, se = mean_se([y[:k] for _, y in runs])
    return steps, mean, se


def _save(fig, out) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out


def plot_learning_curves(groups: dict, out, kind: str = "update", key: str = "return_mean",
                         title: str | None = None, ylabel: str = "episode return") -> Path:
    """``groups`` maps a label to a list of per-seed record lists (or metrics.jsonl paths)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, seeds in groups.items():
        records = [read_jsonl(s) if isinstance(s, (str, Path)) else s for s in seeds]
        steps, mean, se = aggregate_curves([curve(r, kind, key) for r in records])
        ax.plot(steps, mean, label=f"{label} (n={len(records)})")
        ax.fill_between(steps, mean - se, mean + se, alpha=0.25)
    ax.set_xlabel("environment steps")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, out)


def plot_milestones(reports: dict, out, title: str | None = None) -> Path:
    """Grouped bars of visitation rate ± SE; ``reports`` maps label -> milestone_report output."""
    names = sorted(set().union(*(r.keys() for r in reports.values())), key=_milestone_key)
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(names) * len(reports)), 4))
    width = 0.8 / max(len(reports), 1)
    x = np.arange(len(names))
    for i, (label, rep) in enumerate(reports.items()):
        rates = [rep.get(m, {}).get("rate", 0.0) for m in names]
        errs = [rep.get(m, {}).get("se", 0.0) for m in names]
        ax.bar(x + i * width, rates, width, yerr=errs, capsize=2, label=label)
    ax.set_xticks(x + width * (len(reports) - 1) / 2)
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("visitation rate")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, out)


def _milestone_key(name: str):
    head, _, tail = name.rpartition("-")
    return (head, int(tail)) if tail.isdigit() else (name, -1)


def plot_series_table(rows, out, x: str, y: str, group: str, title: str | None = None,
                      xlabel: str | None = None, ylabel: str | None = None, log_x: bool = False) -> Path:
    """Mean ± SE of ``y`` against ``x`` for each ``group``, aggregating repeated rows (seeds)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = sorted({r[group] for r in rows})
    for label in labels:
        sub = [r for r in rows if r[group] == label]
        xs = sorted({float(r[x]) for r in sub})
        mean = np.array([mean_se([float(r[y]) for r in sub if float(r[x]) == v])[0] for v in xs])
        se = np.array([mean_se([float(r[y]) for r in sub if float(r[x]) == v])[1] for v in xs])
        ax.plot(xs, mean, marker="o", label=str(label))
        ax.fill_between(xs, mean - se, mean + se, alpha=0.25)
    if log_x:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel or x)
    ax.set_ylabel(ylabel or y)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, out)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def expand(pattern: str) -> list[str]:
    paths = sorted(glob.glob(pattern, recursive=True))
    if not paths:
        raise FileNotFoundError(f"no files match {pattern!r}")
    return paths
