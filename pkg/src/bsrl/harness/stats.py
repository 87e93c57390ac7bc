"""Mean / standard-error summaries and milestone visitation rates."""

from __future__ import annotations

import numpy as np


def mean_se(values, axis: int = 0):
    """Mean and standard error (sample std / sqrt(k)) along ``axis``; SE is 0 for a single sample."""
    x = np.asarray(values, dtype=np.float64)
    k = x.shape[axis]
    mean = x.mean(axis=axis)
    if k < 2:
        return mean, np.zeros_like(mean)
    return mean, x.std(axis=axis, ddof=1) / np.sqrt(k)


def milestone_report(groups, names=None) -> dict:
    """Per-milestone visitation rate with SE over groups (one group of episodes per seed).

    ``groups`` is a list of lists of milestone sets. A flat list of sets is
    treated as a single group. Returns {milestone: {"rate", "se", "per_seed"}}.
    """
    groups = list(groups)
    if groups and isinstance(groups[0], (set, frozenset)):
        groups = [groups]
    if names is None:
        names = sorted(set().union(*(s for g in groups for s in g))) if groups else []
    report = {}
    for m in names:
        per_seed = [sum(m in s for s in g) / len(g) for g in groups if len(g)]
        mean, se = mean_se(per_seed) if per_seed else (0.0, 0.0)
        report[m] = {"rate": float(mean), "se": float(se), "per_seed": per_seed}
    return report
