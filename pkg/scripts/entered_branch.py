"""Entered-branch rate of untrained (zero-init) HBS versus the trained HBS runs of a growth study.

usage: python scripts/entered_branch.py RUNS_DIR [--prefix 5] [--seeds 5] [--episodes 100] [--out FILE]
"""
import argparse
import json
from pathlib import Path

import numpy as np

from bsrl.harness import parse_config
from bsrl.harness.stats import mean_se
from bsrl.harness.train import build_env, evaluate, net_dims
from bsrl.net import init_params, load_checkpoint


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("runs")
    p.add_argument("--prefix", type=int, default=5)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--out")
    args = p.parse_args(argv)
    out = {}
    for label in ("random", "trained"):
        rates, rets = [], []
        for s in range(args.seeds):
            d = Path(args.runs) / f"hbs_n{args.prefix}_seed{s}"
            cfg = parse_config(json.loads((d / "config.json").read_text()))
            dims = net_dims(cfg, build_env(cfg, 0))
            params = init_params(cfg.seed, dims) if label == "random" else load_checkpoint(d / "checkpoint.npz", dims)
            r, ms = evaluate(cfg, params, args.episodes, seed_name="branch-cmp")
            rates.append(float(np.mean(["entered-branch" in m for m in ms])))
            rets.append(float(np.mean(r)))
        out[label] = {"entered_branch": rates, "return": rets}
        print(label, "entered-branch %.3f +- %.3f" % mean_se(rates), "return %.1f +- %.1f" % mean_se(rets))
    if args.out:
        Path(args.out).write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    main()
