"""Training and evaluation runs driven by a RunConfig."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import derive_seed, make_rng, quantize_bins
from ..envs import DungeonConfig, DungeonEnv, TabularEnv, build_chain
from ..hierarchy import ActingSpec, episode_loop, one_hot_support
from ..learner import PPOSettings, ppo_update
from ..net import NetDims, adam_init, init_params, load_checkpoint, save_checkpoint
from .config import ChainSpec, RunConfig
from .stats import mean_se, milestone_report

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.jsonl"
CHECKPOINT_FILE = "checkpoint.npz"


def build_env(cfg: RunConfig, seed: int):
    spec = cfg.env
    if isinstance(spec, ChainSpec):
        mdp = build_chain(spec.n_states, spec.n_channels, seed=spec.layout_seed, slip=spec.slip)
        return TabularEnv(mdp, max_steps=spec.max_steps, seed=seed)
    params = spec.model_dump(exclude={"kind"})
    return DungeonEnv(DungeonConfig(**params), seed=seed)


def net_dims(cfg: RunConfig, env) -> NetDims:
    return NetDims(env.obs_dim, cfg.channel_count, cfg.bin_count, len(cfg.option_lengths), env.n_actions,
                   cfg.hidden, cfg.option_hidden)


def acting_spec(cfg: RunConfig, temperature: float = 1.0) -> ActingSpec:
    return ActingSpec(
        mode=cfg.mode,
        bins=quantize_bins(cfg.bin_count, cfg.bin_spacing),
        lengths=cfg.option_lengths,
        gamma_controller=cfg.gamma_controller,
        controller_reward_scale=cfg.controller_reward_scale,
        static_rho=cfg.static_rho,
        temperature=temperature,
    )


def ppo_settings(cfg: RunConfig) -> PPOSettings:
    return PPOSettings(
        gamma_option=cfg.gamma_flat if cfg.mode == "flat" else cfg.gamma_option,
        gamma_controller=cfg.gamma_controller,
        gae_lambda=cfg.gae_lambda,
        use_vtrace=cfg.use_vtrace,
        clip_epsilon=cfg.clip_epsilon,
        entropy_coef=cfg.entropy_coef,
        value_coef=cfg.value_coef,
        learning_rate=cfg.learning_rate,
        reward_scale=cfg.reward_scale,
        controller_reward_scale=cfg.controller_reward_scale,
        reward_clip=cfg.reward_clip,
        max_grad_norm=cfg.max_grad_norm,
        num_minibatches=cfg.num_minibatches,
        normalize_advantages=cfg.normalize_advantages,
        channel_scales=cfg.scales,
        support=one_hot_support(cfg.channel_count, cfg.bin_count) if cfg.mode == "sol" else None,
        option_trace=cfg.option_trace,
        controller_entropy_scale=cfg.controller_entropy_scale,
    )


def _mean_se(x) -> tuple[float, float]:
    m, se = mean_se(x)
    return float(m), float(se)


def evaluate(cfg: RunConfig, params, n_episodes: int | None = None, greedy: bool | None = None,
             seed_name: str = "eval"):
    """Run evaluation episodes on a freshly seeded env; same layouts on every call.

    Returns (per-episode task returns, per-episode milestone sets).
    """
    n_episodes = n_episodes or cfg.eval_episodes
    greedy = cfg.eval_greedy if greedy is None else greedy
    env = build_env(cfg, derive_seed(cfg.seed, seed_name, "env"))
    rng = make_rng(cfg.seed, seed_name, "acting")
    spec = acting_spec(cfg, temperature=0.0 if greedy else 1.0)
    returns, milestones = [], []
    for _ in range(n_episodes):
        ep = episode_loop(env, params, spec, rng)
        returns.append(ep.task_return)
        milestones.append(ep.milestones)
    return returns, milestones


def eval_record(cfg, params, update: int, step: int, final: bool = False) -> dict:
    returns, ms = evaluate(cfg, params)
    mean, se = _mean_se(returns)
    names = sorted(set().union(*ms))
    rates = {m: sum(m in s for s in ms) / len(ms) for m in names}
    return {"kind": "eval", "update": update, "step": step, "final": final, "return_mean": mean,
            "return_se": se, "returns": [float(r) for r in returns], "milestones": rates}


@dataclass
class TrainResult:
    params: object
    records: list = field(default_factory=list)

    @property
    def final_eval(self) -> dict:
        return [r for r in self.records if r["kind"] == "eval"][-1]


class MetricsWriter:
    """Append-only JSONL writer; records are serialized with sorted keys so files compare bytewise."""

    def __init__(self, path: Path | None):
        self.path = path
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("")

    def write(self, record: dict) -> None:
        if self.path is None:
            return
        with open(self.path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def train(cfg: RunConfig, out_dir=None) -> TrainResult:
    """Train to ``cfg.total_steps`` primitive steps.

    Each update consumes whole episodes until ``batch_size`` steps are gathered.
    With ``out_dir`` set, writes config.json, metrics.jsonl and checkpoint.npz.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(cfg.to_json() + "\n")
    writer = MetricsWriter(out / METRICS_FILE if out is not None else None)

    env = build_env(cfg, derive_seed(cfg.seed, "train", "env"))
    rng = make_rng(cfg.seed, "train", "acting")
    dims = net_dims(cfg, env)
    params = init_params(derive_seed(cfg.seed, "params"), dims)
    opt = adam_init(params)
    spec = acting_spec(cfg)
    settings = ppo_settings(cfg)
    result = TrainResult(params)

    steps, update = 0, 0
    while steps < cfg.total_steps:
        episodes, batch_steps = [], 0
        while batch_steps < cfg.batch_size:
            ep = episode_loop(env, params, spec, rng)
            episodes.append(ep)
            batch_steps += ep.length
        steps += batch_steps
        params, opt, losses = ppo_update(params, opt, episodes, settings)
        update += 1
        returns = [e.task_return for e in episodes]
        rec = {"kind": "update", "update": update, "step": steps, "mode": cfg.mode, "episodes": len(episodes),
               "return_mean": float(np.mean(returns)), "episode_length_mean": batch_steps / len(episodes),
               "decisions_mean": float(np.mean([len(e.transitions) for e in episodes])), **losses}
        result.records.append(rec)
        writer.write(rec)
        if cfg.eval_every and update % cfg.eval_every == 0 and steps < cfg.total_steps:
            rec = eval_record(cfg, params, update, steps)
            result.records.append(rec)
            writer.write(rec)
            log.info("update %d step %d eval return %.3f", update, steps, rec["return_mean"])
        if out is not None and cfg.checkpoint_every and update % cfg.checkpoint_every == 0:
            (out / "checkpoints").mkdir(exist_ok=True)
            save_checkpoint(out / "checkpoints" / f"update_{update:06d}.npz", params, {"step": steps})

    rec = eval_record(cfg, params, update, steps, final=True)
    result.records.append(rec)
    writer.write(rec)
    result.params = params
    if out is not None:
        save_checkpoint(out / CHECKPOINT_FILE, params, {"step": steps, "config": cfg.model_dump(mode="json")})
    return result


def run_eval(cfg: RunConfig, checkpoint, n_episodes: int, out_dir=None, greedy: bool | None = None) -> dict:
    """Load a checkpoint (dims must match the config) and report returns plus milestone rates."""
    env = build_env(cfg, 0)
    params = load_checkpoint(checkpoint, expected_dims=net_dims(cfg, env))
    returns, ms = evaluate(cfg, params, n_episodes, greedy=greedy)
    mean, se = _mean_se(returns)
    report = {"returns": [float(r) for r in returns], "return_mean": mean, "return_se": se,
              "milestones": milestone_report([ms])}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "eval_episodes.jsonl", "w") as fh:
            for i, (r, m) in enumerate(zip(returns, ms)):
                fh.write(json.dumps({"episode": i, "return": float(r), "milestones": sorted(m)}, sort_keys=True) + "\n")
        (out / "eval_summary.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report
