"""Acting loop: controller commands, option execution and episode collection.

Modes
    hbs   controller samples one bin per channel plus a length
    sol   controller samples one of the n one-hot vectors plus a length; this
          is the hbs distribution restricted (and renormalized) to one-hot
          support, so a restricted hbs controller reproduces it exactly
    flat  no controller; one unbounded command at a static behaviour vector
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .core import BehaviourVector, ContractViolation, OptionCommand, TrajectorySegment
from .learner import OptionTransition, make_option_transition
from .net import PolicyParams, controller_head, log_softmax, option_head, torso

MODES = ("hbs", "sol", "flat")


def one_hot_support(n: int, n_bins: int) -> np.ndarray:
    support = np.zeros((n, n), dtype=np.int64)
    support[np.arange(n), np.arange(n)] = n_bins - 1
    return support


def full_support(n: int, n_bins: int) -> np.ndarray:
    return np.array(list(product(range(n_bins), repeat=n)), dtype=np.int64)


@dataclass
class ActingSpec:
    """Everything the acting loop needs besides params and the environment."""

    mode: str
    bins: tuple
    lengths: tuple
    gamma_controller: float = 0.999
    controller_reward_scale: float = 0.001
    static_rho: tuple | None = None
    support: np.ndarray | None = None  # restrict hbs commands to these bin-index rows
    temperature: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractViolation(f"unknown mode {self.mode!r}")
        if self.mode == "flat" and self.static_rho is None:
            raise ContractViolation("flat mode requires static_rho")

    def restriction(self, n: int) -> np.ndarray | None:
        if self.mode == "sol":
            return one_hot_support(n, len(self.bins))
        return self.support


def _sample(logits: np.ndarray, rng: np.random.Generator, temperature: float) -> int:
    if temperature == 0:
        return int(np.argmax(logits))
    p = np.exp(log_softmax(logits / temperature))
    cdf = np.cumsum(p)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(p) - 1))


def controller_act(params: PolicyParams, obs: np.ndarray, rng: np.random.Generator, spec: ActingSpec, h=None):
    """Sample a command. Returns (command, joint log-prob, length index, support index).

    The log-prob is always evaluated at temperature 1 (the policy being trained).
    """
    if spec.mode == "flat":
        raise ContractViolation("controller_act called in flat mode")
    if h is None:
        h = torso(params, obs[None])[1]
    coeff, length_logits, _ = controller_head(params, h)
    coeff, length_logits = coeff[0], length_logits[0]
    lsm = log_softmax(coeff)
    n = coeff.shape[0]
    support = spec.restriction(n)
    if support is None:
        idx = [_sample(coeff[j], rng, spec.temperature) for j in range(n)]
        logp = float(sum(lsm[j, idx[j]] for j in range(n)))
        k = None
    else:
        ell = lsm[np.arange(n)[None, :], support].sum(axis=1)
        k = _sample(ell, rng, spec.temperature)
        idx = support[k].tolist()
        logp = float(log_softmax(ell)[k])
    li = _sample(length_logits, rng, spec.temperature)
    logp += float(log_softmax(length_logits)[li])
    cmd = OptionCommand(BehaviourVector(tuple(idx), spec.bins), spec.lengths[li])
    return cmd, logp, li, k


def run_option(env, params: PolicyParams, command: OptionCommand, obs: np.ndarray, rng: np.random.Generator,
               temperature: float = 1.0, h_first=None):
    """Execute ``command`` from ``obs`` until its length runs out or the episode ends.

    Returns (segment, final observation).
    """
    rho = command.rho.coeffs[None]
    limit = command.length if command.length is not None else np.inf
    obs_l, act_l, ch_l, task_l, done_l, lp_l = [], [], [], [], [], []
    done = False
    t = 0
    while t < limit and not done:
        h = h_first if (t == 0 and h_first is not None) else torso(params, obs[None])[1]
        logits = option_head(params, h, rho)[2][0]
        a = _sample(logits, rng, temperature)
        obs_l.append(obs)
        act_l.append(a)
        lp_l.append(float(log_softmax(logits)[a]))
        try:
            obs, reward, done = env.step(a)
        except Exception as exc:
            raise RuntimeError(f"environment step failed at option step {t}") from exc
        ch_l.append(reward.channels)
        task_l.append(reward.task)
        done_l.append(done)
        t += 1
    seg = TrajectorySegment(
        observations=np.array(obs_l),
        actions=np.array(act_l, dtype=np.int64),
        channel_rewards=np.array(ch_l),
        task_rewards=np.array(task_l),
        dones=np.array(done_l, dtype=bool),
        command=command,
        log_probs=np.array(lp_l),
        next_obs=None if done else obs,
    )
    return seg, obs


@dataclass
class Episode:
    segments: list
    transitions: list
    milestones: frozenset = field(default_factory=frozenset)

    @property
    def length(self) -> int:
        return sum(s.steps_executed for s in self.segments)

    @property
    def task_return(self) -> float:
        return float(sum(s.task_rewards.sum() for s in self.segments))

    def channel_returns(self) -> np.ndarray:
        return sum(s.channel_rewards.sum(axis=0) for s in self.segments)


def episode_loop(env, params: PolicyParams, spec: ActingSpec, rng: np.random.Generator) -> Episode:
    """Run one full episode, alternating controller decisions and option execution."""
    obs = env.reset()
    segments: list[TrajectorySegment] = []
    transitions: list[OptionTransition] = []
    if spec.mode == "flat":
        # the static vector carries its own value set, it need not lie on the controller's bin grid
        values = sorted({float(c) for c in spec.static_rho})
        cmd = OptionCommand(BehaviourVector.from_coeffs(spec.static_rho, values), None)
        seg, obs = run_option(env, params, cmd, obs, rng, spec.temperature)
        segments.append(seg)
        return Episode(segments, transitions, env.milestones())
    done = False
    while not done:
        h = torso(params, obs[None])[1]
        cmd, logp, li, k = controller_act(params, obs, rng, spec, h=h)
        seg, obs = run_option(env, params, cmd, obs, rng, spec.temperature, h_first=h)
        segments.append(seg)
        transitions.append(
            make_option_transition(seg, spec.gamma_controller, spec.controller_reward_scale, li, logp, k)
        )
        done = seg.terminal
    return Episode(segments, transitions, env.milestones())
