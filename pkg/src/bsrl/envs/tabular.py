"""Exactly solvable tabular MDPs with multi-channel rewards."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import ConfigurationError, ContractViolation, RewardVector, make_rng

LEFT, RIGHT, STAY = 0, 1, 2
CHAIN_ACTIONS = ("left", "right", "stay")


@dataclass
class TabularMDP:
    """Finite MDP with n reward channels and a task reward.

    transitions: (S, A, S) probabilities
    channel_rewards: (n, S, A)
    task_reward: (S, A)
    """

    transitions: np.ndarray
    channel_rewards: np.ndarray
    task_reward: np.ndarray
    start: np.ndarray
    absorbing: frozenset = field(default_factory=frozenset)
    name: str = "mdp"
    waypoints: tuple = ()

    def __post_init__(self):
        T = np.asarray(self.transitions, dtype=np.float64)
        if T.ndim != 3 or T.shape[0] != T.shape[2]:
            raise ContractViolation(f"transition tensor must be (S, A, S), got {T.shape}")
        if np.any(T < 0) or np.max(np.abs(T.sum(axis=2) - 1.0)) > 1e-12:
            raise ContractViolation("transition rows must be probability distributions")
        R = np.asarray(self.channel_rewards, dtype=np.float64)
        if R.ndim == 2:
            R = R[None]
        if R.shape[1:] != T.shape[:2]:
            raise ContractViolation("channel reward shape does not match (S, A)")
        task = np.asarray(self.task_reward, dtype=np.float64)
        if task.shape != T.shape[:2]:
            raise ContractViolation("task reward shape does not match (S, A)")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(task))):
            raise ContractViolation("rewards must be finite")
        start = np.asarray(self.start, dtype=np.float64)
        if abs(start.sum() - 1.0) > 1e-12:
            raise ContractViolation("start distribution must sum to 1")
        self.transitions, self.channel_rewards, self.task_reward, self.start = T, R, task, start

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def n_channels(self) -> int:
        return self.channel_rewards.shape[0]

    def combined_reward(self, rho, scales=None) -> np.ndarray:
        rho = np.asarray(rho, dtype=np.float64)
        scales = np.ones(self.n_channels) if scales is None else np.asarray(scales, dtype=np.float64)
        if rho.shape != (self.n_channels,) or scales.shape != rho.shape:
            raise ContractViolation("rho/scales must have one entry per channel")
        return np.tensordot(rho * scales, self.channel_rewards, axes=1)


def build_chain(n_states: int, n_channels: int = 1, seed: int = 0, slip: float = 0.0) -> TabularMDP:
    """Left/right/stay chain starting at the left end.

    Channel 0 (the task) pays 1 per step spent in the rightmost state. Every
    other channel pays 1 per step spent on its own interior waypoint, whose
    location is drawn from ``seed``. ``slip`` moves the agent to a uniformly
    random neighbour instead of the intended move.
    """
    if n_states < 2:
        raise ConfigurationError(f"chain needs at least 2 states, got {n_states}")
    if n_channels < 1:
        raise ConfigurationError("chain needs at least one channel")
    S, A = n_states, 3
    T = np.zeros((S, A, S))
    for s in range(S):
        dest = {LEFT: max(s - 1, 0), RIGHT: min(s + 1, S - 1), STAY: s}
        for a, d in dest.items():
            T[s, a, d] += 1.0 - slip
            if slip:
                for nb in (max(s - 1, 0), min(s + 1, S - 1)):
                    T[s, a, nb] += slip / 2
    rng = make_rng(seed, "chain", n_states, n_channels)
    interior = np.arange(1, S - 1) if S > 2 else np.arange(S)
    R = np.zeros((n_channels, S, A))
    R[0, S - 1, :] = 1.0
    waypoints = [S - 1]
    for c in range(1, n_channels):
        w = int(rng.choice(interior))
        R[c, w, :] = 1.0
        waypoints.append(w)
    start = np.zeros(S)
    start[0] = 1.0
    return TabularMDP(T, R, R[0].copy(), start, name=f"chain{S}", waypoints=tuple(waypoints))


def interpolation_chain() -> TabularMDP:
    """Five-state chain where only a mixed behaviour vector stays in the middle.

    Channel 0 grows towards the right end, channel 1 towards the left end; the
    task pays only in the middle state. Either channel alone drives the agent
    to an end, the equal mixture peaks in the middle.
    """
    base = build_chain(5, 1)
    right_pull = np.array([0.0, 0.6, 1.0, 1.2, 1.3])
    R = np.stack([np.repeat(right_pull[:, None], 3, 1), np.repeat(right_pull[::-1][:, None], 3, 1)])
    task = np.zeros((5, 3))
    task[2, :] = 1.0
    return TabularMDP(base.transitions, R, task, base.start, name="interp5")


def random_lab_mdp(seed: int, n_states: int | None = None, n_actions: int = 3, n_channels: int = 2) -> TabularMDP:
    """Random dense MDP; every transition has positive probability (unichain, aperiodic).

    The task reward is a random nonnegative combination of the channels plus
    noise, so mixed behaviour vectors can track it better than single channels.
    """
    rng = make_rng(seed, "lab-mdp")
    S = int(n_states or rng.integers(4, 9))
    if S < 2:
        raise ConfigurationError("lab MDP needs at least 2 states")
    # concentrated transitions with a small floor keep structure while staying ergodic
    T = rng.dirichlet(np.full(S, 0.3), size=(S, n_actions))
    T = 0.95 * T + 0.05 / S
    T /= T.sum(axis=2, keepdims=True)
    R = rng.uniform(0.0, 1.0, size=(n_channels, S, n_actions))
    w = rng.uniform(0.0, 1.0, size=n_channels)
    task = np.tensordot(w, R, axes=1) + 0.1 * rng.standard_normal((S, n_actions))
    start = np.zeros(S)
    start[0] = 1.0
    return TabularMDP(T, R, task, start, name=f"lab{seed}")


class TabularEnv:
    """Episodic stepping wrapper around a TabularMDP.

    Observation layout: one-hot of the current state (length S).
    Rewards are state-action rewards of the state the step starts from.
    """

    def __init__(self, mdp: TabularMDP, max_steps: int = 20, seed: int = 0):
        self.mdp = mdp
        self.max_steps = int(max_steps)
        self.n_actions = mdp.n_actions
        self.n_channels = mdp.n_channels
        self.obs_dim = mdp.n_states
        self._seed = seed
        self._episode = -1
        self.state = 0
        self.t = 0
        self.visited: set[int] = set()

    def _obs(self) -> np.ndarray:
        o = np.zeros(self.obs_dim)
        o[self.state] = 1.0
        return o

    def reset(self) -> np.ndarray:
        self._episode += 1
        self._rng = make_rng(self._seed, "tabular-env", self._episode)
        self.state = int(self._rng.choice(self.mdp.n_states, p=self.mdp.start))
        self.t = 0
        self.visited = {self.state}
        return self._obs()

    def step(self, action: int):
        s = self.state
        reward = RewardVector(self.mdp.channel_rewards[:, s, action], self.mdp.task_reward[s, action])
        p = self.mdp.transitions[s, action]
        nxt = int(np.flatnonzero(p == 1.0)[0]) if p.max() == 1.0 else int(self._rng.choice(len(p), p=p))
        self.state = nxt
        self.visited.add(nxt)
        self.t += 1
        done = self.t >= self.max_steps or nxt in self.mdp.absorbing
        return self._obs(), reward, done

    def milestones(self) -> frozenset:
        return frozenset(f"visited-state-{s}" for s in self.visited)
