"""Two-timescale PPO targets and updates.

Intra-option targets use the behaviour-combined reward under the option
discount and run GAE straight through option boundaries; the value bootstrap
at a boundary is evaluated with the *earlier* segment's behaviour vector.
Controller targets are SMDP GAE over decisions, each decision discounted by
gamma ** steps_executed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ContractViolation, OptionCommand, TrajectorySegment, combine_reward_stream
from .net import (
    AdamState,
    PolicyParams,
    TrainingError,
    backward,
    clip_grad_norm,
    forward,
    log_softmax,
    sgd_step,
)


@dataclass(frozen=True)
class OptionTransition:
    start_obs: np.ndarray
    command: OptionCommand
    length_index: int
    task_return: float  # sum_t gamma^t R_task,t over the segment, times controller_reward_scale
    discount: float  # gamma ** steps_executed
    next_obs: np.ndarray | None
    done: bool
    log_prob: float
    support_index: int | None = None
    steps_executed: int = 1

    def __post_init__(self):
        if not 0.0 < self.discount <= 1.0:
            raise ContractViolation(f"bootstrap discount {self.discount} outside (0, 1]")
        if not np.isfinite(self.task_return):
            raise ContractViolation("segment return must be finite")


def make_option_transition(
    segment: TrajectorySegment,
    gamma: float,
    controller_reward_scale: float,
    length_index: int,
    log_prob: float,
    support_index: int | None = None,
) -> OptionTransition:
    k = segment.steps_executed
    disc = gamma ** np.arange(k)
    G = float(np.sum(disc * segment.task_rewards)) * controller_reward_scale
    return OptionTransition(
        start_obs=segment.observations[0],
        command=segment.command,
        length_index=length_index,
        task_return=G,
        discount=float(gamma ** k),
        next_obs=segment.next_obs,
        done=segment.terminal,
        log_prob=float(log_prob),
        support_index=support_index,
        steps_executed=k,
    )


# --------------------------------------------------------------------------- #
# generic estimators
# --------------------------------------------------------------------------- #


def gae(rewards, values, next_values, discounts, lam, trace=None):
    """GAE with per-step discounts (zero at episode ends). Returns (advantages, targets).

    ``trace`` (default all ones) multiplies the lambda trace after step t; a 0
    cuts the trace there while still bootstrapping from ``next_values[t]``.
    """
    T = len(rewards)
    tr = np.ones(T) if trace is None else trace
    adv = np.zeros(T)
    acc = 0.0
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + discounts[t] * next_values[t] - values[t]
        acc = delta + discounts[t] * lam * tr[t] * acc
        adv[t] = acc
    return adv, adv + values


def vtrace(rewards, values, next_values, discounts, behaviour_logp, target_logp, lam=1.0, rho_bar=1.0, c_bar=1.0,
           trace=None):
    """Truncated importance-weighted targets with a lambda trace.

    Value targets: vs_t = v_t + a_t with
        a_t = rho_t * delta_t + discount_t * c_t * a_{t+1},  c_t = lam * min(c_bar, ratio_t)
    Policy advantages:
        rho_t * (r_t + discount_t * (v'_t + lam * a_{t+1}) - v_t)
    With matching log-probs both reduce to GAE(lam). ``trace`` cuts the lambda
    trace as in ``gae``.
    """
    log_ratio = np.asarray(target_logp, dtype=np.float64) - np.asarray(behaviour_logp, dtype=np.float64)
    rho = np.exp(np.minimum(log_ratio, np.log(rho_bar)))
    T = len(rewards)
    lam = lam * (np.ones(T) if trace is None else np.asarray(trace, dtype=np.float64))
    c = lam * np.exp(np.minimum(log_ratio, np.log(c_bar)))
    corr = np.zeros(T)
    adv = np.zeros(T)
    acc = 0.0
    for t in range(T - 1, -1, -1):
        adv[t] = rho[t] * (rewards[t] + discounts[t] * (next_values[t] + lam[t] * acc) - values[t])
        acc = rho[t] * (rewards[t] + discounts[t] * next_values[t] - values[t]) + discounts[t] * c[t] * acc
        corr[t] = acc
    return adv, values + corr


# --------------------------------------------------------------------------- #
# batches
# --------------------------------------------------------------------------- #


@dataclass
class OptionBatch:
    obs: np.ndarray
    rho: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    discounts: np.ndarray
    boot_index: np.ndarray  # steps whose next value comes from boot_obs (segment ends)
    boot_obs: np.ndarray
    boot_rho: np.ndarray
    inner_index: np.ndarray  # steps whose next value is values[t + 1]

    def __len__(self):
        return len(self.actions)


@dataclass
class ControllerBatch:
    obs: np.ndarray
    bins: np.ndarray
    length_index: np.ndarray
    support_index: np.ndarray | None
    log_probs: np.ndarray
    rewards: np.ndarray
    discounts: np.ndarray
    boot_index: np.ndarray
    boot_obs: np.ndarray
    inner_index: np.ndarray

    def __len__(self):
        return len(self.log_probs)


def option_batch(
    episodes: Sequence[Sequence[TrajectorySegment]],
    gamma: float,
    scales,
    reward_scale: float = 1.0,
    reward_clip: float | None = None,
) -> OptionBatch:
    """Flatten segment lists (one list per episode) into an intra-option batch."""
    obs, rho, acts, lps, rew, disc = [], [], [], [], [], []
    boot_i, boot_o, boot_r, inner = [], [], [], []
    t0 = 0
    for segments in episodes:
        for si, seg in enumerate(segments):
            k = seg.steps_executed
            coeffs = np.broadcast_to(seg.command.rho.coeffs, (k, seg.command.rho.n))
            r = combine_reward_stream(coeffs, seg.channel_rewards, scales) * reward_scale
            if reward_clip is not None:
                r = np.clip(r, -reward_clip, reward_clip)
            obs.append(seg.observations)
            rho.append(coeffs)
            acts.append(seg.actions)
            lps.append(seg.log_probs)
            rew.append(r)
            disc.append(gamma * (1.0 - seg.dones.astype(np.float64)))
            inner.extend(range(t0, t0 + k - 1))
            last = t0 + k - 1
            if not seg.terminal:
                if seg.next_obs is None:
                    raise ContractViolation("non-terminal segment without next observation")
                boot_i.append(last)
                boot_o.append(seg.next_obs)
                boot_r.append(seg.command.rho.coeffs)
            t0 += k
    n = rho[0].shape[1]
    d = obs[0].shape[1]
    return OptionBatch(
        obs=np.concatenate(obs),
        rho=np.concatenate(rho).astype(np.float64),
        actions=np.concatenate(acts).astype(np.int64),
        log_probs=np.concatenate(lps).astype(np.float64),
        rewards=np.concatenate(rew),
        discounts=np.concatenate(disc),
        boot_index=np.array(boot_i, dtype=np.int64),
        boot_obs=np.array(boot_o).reshape(-1, d),
        boot_rho=np.array(boot_r).reshape(-1, n),
        inner_index=np.array(inner, dtype=np.int64),
    )


def controller_batch(episodes: Sequence[Sequence[OptionTransition]]) -> ControllerBatch:
    obs, bins, lidx, sidx, lps, rew, disc = [], [], [], [], [], [], []
    boot_i, boot_o, inner = [], [], []
    t = 0
    for transitions in episodes:
        for i, tr in enumerate(transitions):
            obs.append(tr.start_obs)
            bins.append(tr.command.rho.bin_indices)
            lidx.append(tr.length_index)
            sidx.append(-1 if tr.support_index is None else tr.support_index)
            lps.append(tr.log_prob)
            rew.append(tr.task_return)
            disc.append(0.0 if tr.done else tr.discount)
            if not tr.done:
                if i + 1 < len(transitions):
                    inner.append(t)
                elif tr.next_obs is None:
                    raise ContractViolation("non-terminal decision without next observation")
                else:
                    boot_i.append(t)
                    boot_o.append(tr.next_obs)
            t += 1
    sidx = np.array(sidx, dtype=np.int64)
    d = len(obs[0])
    return ControllerBatch(
        obs=np.array(obs, dtype=np.float64),
        bins=np.array(bins, dtype=np.int64),
        length_index=np.array(lidx, dtype=np.int64),
        support_index=None if np.all(sidx < 0) else sidx,
        log_probs=np.array(lps, dtype=np.float64),
        rewards=np.array(rew, dtype=np.float64),
        discounts=np.array(disc, dtype=np.float64),
        boot_index=np.array(boot_i, dtype=np.int64),
        boot_obs=np.array(boot_o).reshape(-1, d),
        inner_index=np.array(inner, dtype=np.int64),
    )


def _next_values(values, inner_index, boot_index, boot_values):
    nxt = np.zeros_like(values)
    nxt[inner_index] = values[inner_index + 1]
    nxt[boot_index] = boot_values
    return nxt


def option_values(params: PolicyParams, batch: OptionBatch):
    out = forward(params, batch.obs, batch.rho)
    values = out["v_option"]
    boot = forward(params, batch.boot_obs, batch.boot_rho)["v_option"] if len(batch.boot_index) else np.zeros(0)
    return out, values, _next_values(values, batch.inner_index, batch.boot_index, boot)


def controller_values(params: PolicyParams, batch: ControllerBatch):
    zeros_rho = np.zeros((len(batch), params.dims.n_channels))
    out = forward(params, batch.obs, zeros_rho)
    values = out["v_controller"]
    if len(batch.boot_index):
        boot = forward(params, batch.boot_obs, np.zeros((len(batch.boot_index), params.dims.n_channels)))["v_controller"]
    else:
        boot = np.zeros(0)
    return out, values, _next_values(values, batch.inner_index, batch.boot_index, boot)


def option_returns(
    segments: Sequence[TrajectorySegment] | Sequence[Sequence[TrajectorySegment]],
    gamma_omega: float,
    lam: float,
    params: PolicyParams,
    scales=None,
    reward_scale: float = 1.0,
    reward_clip: float | None = None,
):
    """Per-step (advantages, value targets) for the intra-option head."""
    episodes = _as_episodes(segments, TrajectorySegment)
    n = params.dims.n_channels
    scales = np.ones(n) if scales is None else scales
    batch = option_batch(episodes, gamma_omega, scales, reward_scale, reward_clip)
    _, values, nxt = option_values(params, batch)
    return gae(batch.rewards, values, nxt, batch.discounts, lam)


def controller_returns(transitions, lam: float, params: PolicyParams):
    """Per-decision (advantages, value targets) for the controller head."""
    batch = controller_batch(_as_episodes(transitions, OptionTransition))
    _, values, nxt = controller_values(params, batch)
    return gae(batch.rewards, values, nxt, batch.discounts, lam)


def _as_episodes(items, leaf_type):
    items = list(items)
    if items and isinstance(items[0], leaf_type):
        return [items]
    return items


# --------------------------------------------------------------------------- #
# losses
# --------------------------------------------------------------------------- #


def _normalize(adv: np.ndarray) -> np.ndarray:
    if len(adv) < 2:
        return adv
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def _surrogate(logp, old_logp, adv, clip_eps):
    """Clipped surrogate loss and its gradient w.r.t. logp."""
    ratio = np.exp(logp - old_logp)
    s1 = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    s2 = clipped * adv
    B = len(adv)
    loss = -np.mean(np.minimum(s1, s2))
    inside = (ratio > 1.0 - clip_eps) & (ratio < 1.0 + clip_eps)
    use_unclipped = (s1 <= s2) | inside
    g_logp = -np.where(use_unclipped, s1, 0.0) / B
    clip_frac = float(np.mean(~inside)) if B else 0.0
    return loss, g_logp, clip_frac


@dataclass
class LossSpec:
    """Scalar loss selection and weights for ``loss_and_grad``."""

    head: str  # "option" or "controller"
    clip_epsilon: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.003
    terms: tuple = ("policy", "value", "entropy")
    scale: float = 1.0


def option_loss(out, actions, old_logp, adv, targets, spec: LossSpec):
    logits = out["option_logits"]
    B = len(actions)
    lp = log_softmax(logits)
    p = np.exp(lp)
    rows = np.arange(B)
    logp = lp[rows, actions]
    g_logits = np.zeros_like(logits)
    metrics = {}
    loss = 0.0
    if "policy" in spec.terms:
        pg, g_logp, clip_frac = _surrogate(logp, old_logp, adv, spec.clip_epsilon)
        onehot = np.zeros_like(logits)
        onehot[rows, actions] = 1.0
        g_logits += g_logp[:, None] * (onehot - p)
        loss += pg
        metrics.update(policy_loss=float(pg), clip_fraction=clip_frac)
    H = -np.sum(p * lp, axis=1)
    metrics["entropy"] = float(H.mean())
    if "entropy" in spec.terms:
        loss -= spec.entropy_coef * H.mean()
        g_logits += (spec.entropy_coef / B) * p * (lp + H[:, None])
    g_v = np.zeros(B)
    if "value" in spec.terms:
        diff = out["v_option"] - targets
        vl = np.mean(diff * diff)
        loss += spec.value_coef * vl
        g_v = 2.0 * spec.value_coef * diff / B
        metrics["value_loss"] = float(vl)
    s = spec.scale
    return s * loss, {"option_logits": s * g_logits, "v_option": s * g_v}, metrics


def _support_onehot(support: np.ndarray, n_bins: int) -> np.ndarray:
    K, n = support.shape
    oh = np.zeros((K, n, n_bins))
    oh[np.arange(K)[:, None], np.arange(n)[None, :], support] = 1.0
    return oh


def controller_log_probs(out, bins, length_index, support=None, support_index=None):
    """Joint log-prob of commands plus per-sample entropies.

    Unrestricted: sum of per-channel bin log-probs plus the length log-prob.
    Restricted to ``support`` (K, n) bin-index rows: the factored distribution
    renormalized over the K allowed vectors.
    """
    coeff = out["coeff_logits"]
    B = coeff.shape[0]
    lsm = log_softmax(coeff)
    llen = log_softmax(out["length_logits"])
    rows = np.arange(B)
    logp_len = llen[rows, length_index]
    H_len = -np.sum(np.exp(llen) * llen, axis=1)
    if support is None:
        logp_c = np.take_along_axis(lsm, bins[:, :, None], axis=2)[:, :, 0].sum(1)
        H_c = -np.sum(np.exp(lsm) * lsm, axis=(1, 2))
    else:
        oh = _support_onehot(support, coeff.shape[2])
        ell = np.einsum("bjc,kjc->bk", lsm, oh)
        lq = log_softmax(ell)
        logp_c = lq[rows, support_index]
        H_c = -np.sum(np.exp(lq) * lq, axis=1)
    return logp_c + logp_len, H_c + H_len


def controller_loss(out, batch_bins, length_index, old_logp, adv, targets, spec: LossSpec, support=None, support_index=None):
    coeff = out["coeff_logits"]
    B, n, nb = coeff.shape
    rows = np.arange(B)
    lsm = log_softmax(coeff)
    p = np.exp(lsm)
    llen = log_softmax(out["length_logits"])
    plen = np.exp(llen)
    logp, H = controller_log_probs(out, batch_bins, length_index, support, support_index)

    # gradients accumulated w.r.t. the per-head log-softmax values, then mapped to logits
    g_lsm = np.zeros_like(coeff)
    g_llen = np.zeros_like(llen)
    loss = 0.0
    metrics = {"entropy": float(H.mean())}
    if support is not None:
        oh = _support_onehot(support, nb)
        ell = np.einsum("bjc,kjc->bk", lsm, oh)
        lq = log_softmax(ell)
        q = np.exp(lq)
        Hq = -np.sum(q * lq, axis=1)
    if "policy" in spec.terms:
        pg, g_logp, clip_frac = _surrogate(logp, old_logp, adv, spec.clip_epsilon)
        loss += pg
        metrics.update(policy_loss=float(pg), clip_fraction=clip_frac)
        if support is None:
            sel = np.zeros_like(coeff)
            sel[rows[:, None], np.arange(n)[None, :], batch_bins] = 1.0
            g_lsm += g_logp[:, None, None] * sel
        else:
            g_ell = -q.copy()
            g_ell[rows, support_index] += 1.0
            g_lsm += np.einsum("bk,kjc->bjc", g_logp[:, None] * g_ell, oh)
        g_llen[rows, length_index] += g_logp
    if "entropy" in spec.terms:
        c = spec.entropy_coef / B
        loss -= spec.entropy_coef * H.mean()
        # d(-c*H)/d lsm for a categorical with log-probs l: c * p * (l + 1) (before lsm->logits map)
        if support is None:
            g_lsm += c * p * (lsm + 1.0)
        else:
            g_ell = c * q * (lq + Hq[:, None])
            g_lsm += np.einsum("bk,kjc->bjc", g_ell, oh)
        g_llen += c * plen * (llen + 1.0)
    g_coeff = g_lsm - p * g_lsm.sum(axis=2, keepdims=True)
    g_len = g_llen - plen * g_llen.sum(axis=1, keepdims=True)
    g_v = np.zeros(B)
    if "value" in spec.terms:
        diff = out["v_controller"] - targets
        vl = np.mean(diff * diff)
        loss += spec.value_coef * vl
        g_v = 2.0 * spec.value_coef * diff / B
        metrics["value_loss"] = float(vl)
    s = spec.scale
    return s * loss, {"coeff_logits": s * g_coeff, "length_logits": s * g_len, "v_controller": s * g_v}, metrics


def loss_and_grad(params: PolicyParams, batch: dict, spec: LossSpec):
    """Scalar loss and its exact gradient for one head.

    ``batch`` keys: obs, rho (option head), actions / bins + length_index
    (+ support, support_index), old_logp, adv, targets.
    """
    obs = batch["obs"]
    rho = batch.get("rho")
    if rho is None:
        rho = np.zeros((len(obs), params.dims.n_channels))
    out, cache = forward(params, obs, rho, cache=True)
    bad = np.zeros(len(obs), dtype=bool)
    for v in out.values():
        bad |= ~np.isfinite(v.reshape(len(obs), -1)).all(axis=1)
    if bad.any():
        raise TrainingError(f"non-finite forward output at batch index {int(np.flatnonzero(bad)[0])}")
    if spec.head == "option":
        loss, g_out, metrics = option_loss(out, batch["actions"], batch["old_logp"], batch["adv"], batch["targets"], spec)
    elif spec.head == "controller":
        loss, g_out, metrics = controller_loss(
            out, batch["bins"], batch["length_index"], batch["old_logp"], batch["adv"], batch["targets"], spec,
            batch.get("support"), batch.get("support_index"),
        )
    elif spec.head == "constant":
        return float(spec.scale), params.zeros_like(), {}
    else:
        raise ContractViolation(f"unknown loss head {spec.head!r}")
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite {spec.head} loss")
    return loss, backward(params, cache, g_out), metrics


# --------------------------------------------------------------------------- #
# update
# --------------------------------------------------------------------------- #


@dataclass
class PPOSettings:
    gamma_option: float
    gamma_controller: float
    gae_lambda: float = 0.95
    use_vtrace: bool = True
    clip_epsilon: float = 0.2
    entropy_coef: float = 0.003
    value_coef: float = 0.5
    learning_rate: float = 2e-4
    reward_scale: float = 0.01
    controller_reward_scale: float = 0.001
    reward_clip: float | None = 10000.0
    max_grad_norm: float | None = 4.0
    num_minibatches: int = 1
    normalize_advantages: bool = True
    channel_scales: tuple = field(default_factory=tuple)
    support: np.ndarray | None = None  # restricted controller support (SOL)
    train_controller: bool = True
    option_trace: str = "continue"  # "continue" runs the lambda trace across option ends, "cut" stops it there
    controller_entropy_scale: float = 1.0  # controller entropy bonus = entropy_coef * this


def option_trace(batch: "OptionBatch", mode: str) -> np.ndarray | None:
    """Trace multipliers for the intra-option head; None keeps the trace running across option ends."""
    if mode == "continue":
        return None
    if mode != "cut":
        raise ContractViolation(f"unknown option_trace {mode!r}")
    trace = np.ones(len(batch))
    trace[batch.boot_index] = 0.0
    return trace


def batch_hash(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


def option_targets(params, batch: OptionBatch, settings: PPOSettings):
    out, values, nxt = option_values(params, batch)
    trace = option_trace(batch, settings.option_trace)
    if settings.use_vtrace:
        lp = log_softmax(out["option_logits"])[np.arange(len(batch)), batch.actions]
        adv, targets = vtrace(batch.rewards, values, nxt, batch.discounts, batch.log_probs, lp, settings.gae_lambda,
                              trace=trace)
    else:
        adv, targets = gae(batch.rewards, values, nxt, batch.discounts, settings.gae_lambda, trace=trace)
    return adv, targets


def controller_targets(params, batch: ControllerBatch, settings: PPOSettings):
    out, values, nxt = controller_values(params, batch)
    if settings.use_vtrace:
        lp, _ = controller_log_probs(out, batch.bins, batch.length_index, settings.support, batch.support_index)
        adv, targets = vtrace(batch.rewards, values, nxt, batch.discounts, batch.log_probs, lp, settings.gae_lambda)
    else:
        adv, targets = gae(batch.rewards, values, nxt, batch.discounts, settings.gae_lambda)
    return adv, targets


def ppo_update(params: PolicyParams, opt_state: AdamState, episodes, settings: PPOSettings):
    """One epoch over the episodes, split into ``num_minibatches`` groups of whole episodes.

    ``episodes`` are objects with ``segments`` and ``transitions``. Targets are
    recomputed per minibatch with the current parameters; V-trace corrects for
    the drift since collection. Returns (params, opt_state, metrics).
    """
    groups = np.array_split(np.arange(len(episodes)), min(settings.num_minibatches, len(episodes)))
    metrics: dict[str, list] = {}
    for group in groups:
        eps = [episodes[i] for i in group]
        ob = option_batch([e.segments for e in eps], settings.gamma_option, settings.channel_scales,
                          settings.reward_scale, settings.reward_clip)
        adv, targets = option_targets(params, ob, settings)
        if settings.normalize_advantages:
            adv = _normalize(adv)
        spec = LossSpec("option", settings.clip_epsilon, settings.value_coef, settings.entropy_coef)
        digest = batch_hash(ob.obs, ob.actions, ob.rewards)
        try:
            loss_o, grad, m_o = loss_and_grad(
                params, {"obs": ob.obs, "rho": ob.rho, "actions": ob.actions, "old_logp": ob.log_probs,
                         "adv": adv, "targets": targets}, spec)
        except TrainingError as exc:
            raise TrainingError(f"{exc}; update aborted, batch hash {digest}") from exc
        _collect(metrics, "option", m_o)
        total = loss_o
        transitions = [e.transitions for e in eps if e.transitions]
        if settings.train_controller and transitions:
            cb = controller_batch(transitions)
            cadv, ctargets = controller_targets(params, cb, settings)
            if settings.normalize_advantages:
                cadv = _normalize(cadv)
            cspec = LossSpec("controller", settings.clip_epsilon, settings.value_coef,
                             settings.entropy_coef * settings.controller_entropy_scale)
            try:
                loss_c, grad_c, m_c = loss_and_grad(
                    params, {"obs": cb.obs, "bins": cb.bins, "length_index": cb.length_index,
                             "old_logp": cb.log_probs, "adv": cadv, "targets": ctargets,
                             "support": settings.support, "support_index": cb.support_index}, cspec)
            except TrainingError as exc:
                raise TrainingError(f"{exc}; update aborted, batch hash {digest}") from exc
            _collect(metrics, "controller", m_c)
            grad = PolicyParams(grad.dims, {k: grad.arrays[k] + grad_c.arrays[k] for k in grad.arrays})
            total += loss_c
        if not np.isfinite(total) or not grad.all_finite():
            raise TrainingError(f"non-finite loss in update; batch hash {digest}")
        grad, norm = clip_grad_norm(grad, settings.max_grad_norm)
        params, opt_state = sgd_step(params, grad, settings.learning_rate, opt_state)
        metrics.setdefault("grad_norm", []).append(norm)
        metrics.setdefault("loss", []).append(float(total))
    summary = {k: float(np.mean(v)) for k, v in sorted(metrics.items())}
    return params, opt_state, summary


def _collect(metrics, prefix, values):
    for k, v in values.items():
        metrics.setdefault(f"{prefix}_{k}", []).append(v)
