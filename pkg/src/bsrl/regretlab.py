"""Exact tabular machinery for the regret decomposition over option sets.

Regret is measured in the average-reward sense: for a trace of m option calls
with lengths l_1..l_m (T_m = sum l_i) collecting total task reward C,

    Regret(M, T_m)      = T_m * g*_M      - C
    Regret(M_Omega, m)  = T_m * g*_Omega  - C
    gap term            = T_m * (g*_M - g*_Omega)

where g* is the optimal gain per primitive step. Options are open-loop
executions of fixed deterministic policies for a fixed number of steps.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np

from .core import ConfigurationError, derive_seed, make_rng
from .envs.tabular import TabularMDP, interpolation_chain, random_lab_mdp

MAX_OPTIONS = 20000


class RegretLabError(RuntimeError):
    pass


# --------------------------------------------------------------------------- #
# discounted control
# --------------------------------------------------------------------------- #


def greedy(Q: np.ndarray, tie_tol: float = 1e-8) -> np.ndarray:
    """Greedy actions with ties (within ``tie_tol``) broken by lowest action id."""
    best = Q.max(axis=1, keepdims=True)
    return np.argmax(Q >= best - tie_tol * np.maximum(1.0, np.abs(best)), axis=1)


def value_iteration(mdp: TabularMDP, reward: np.ndarray, gamma: float, tol: float = 1e-12, max_iter: int = 1_000_000):
    """Optimal discounted values for an (S, A) reward. Returns (V*, greedy policy)."""
    if not 0.0 < gamma < 1.0:
        raise ConfigurationError(f"gamma must be in (0, 1), got {gamma}")
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    reward = np.asarray(reward, dtype=np.float64)
    P = mdp.transitions
    V = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        Q = reward + gamma * P @ V
        V_new = Q.max(axis=1)
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new
    Q = reward + gamma * P @ V
    return V, greedy(Q)


def policy_matrix(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    return mdp.transitions[np.arange(mdp.n_states), policy]


def evaluate_policy(mdp: TabularMDP, reward: np.ndarray, policy: np.ndarray, gamma: float) -> np.ndarray:
    P = policy_matrix(mdp, policy)
    r = reward[np.arange(mdp.n_states), policy]
    return np.linalg.solve(np.eye(mdp.n_states) - gamma * P, r)


# --------------------------------------------------------------------------- #
# options and the induced SMDP
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Option:
    policy: tuple
    length: int
    rho: tuple | None = None
    label: str = ""

    @property
    def one_hot(self) -> bool:
        if self.rho is None:
            return False
        nz = [c for c in self.rho if c != 0]
        return len(nz) == 1 and nz[0] == 1.0


@dataclass
class TabularSMDP:
    options: list
    transitions: np.ndarray  # (S, K, S)
    reward: np.ndarray  # (S, K), discounted by gamma_ctrl
    reward_total: np.ndarray  # (S, K), undiscounted sum (used for gain)
    holding: np.ndarray  # (S, K) expected primitive steps

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_options(self) -> int:
        return self.transitions.shape[1]


def behaviour_space_options(
    mdp: TabularMDP,
    scales,
    bins: Sequence[float],
    lengths: Sequence[int],
    gamma_option: float,
    one_hot_only: bool = False,
    cap: int = MAX_OPTIONS,
) -> list[Option]:
    """One option per (rho in bins^n, length): the gamma-greedy policy for the rho-combined reward."""
    n = mdp.n_channels
    count = (n if one_hot_only else len(bins) ** n) * len(lengths)
    if count > cap:
        raise ConfigurationError(f"{count} options exceeds enumeration cap {cap}")
    if one_hot_only:
        rhos = [tuple(1.0 if j == i else 0.0 for j in range(n)) for i in range(n)]
    else:
        rhos = [tuple(float(c) for c in r) for r in product(bins, repeat=n)]
    policies = {}
    for rho in rhos:
        _, pi = value_iteration(mdp, mdp.combined_reward(rho, scales), gamma_option)
        policies[rho] = tuple(int(a) for a in pi)
    return [Option(policies[rho], int(l), rho, f"rho={rho},l={l}") for rho in rhos for l in lengths]


def one_hot_subset(options: Sequence[Option]) -> list[Option]:
    return [o for o in options if o.one_hot]


def primitive_options(mdp: TabularMDP, length: int = 1) -> list[Option]:
    return [Option(tuple([a] * mdp.n_states), length, None, f"a={a}") for a in range(mdp.n_actions)]


def build_smdp(mdp: TabularMDP, options: Sequence[Option], gamma_ctrl: float = 1.0) -> TabularSMDP:
    """Exact l-step transition kernels and rewards by matrix recursion."""
    S, K = mdp.n_states, len(options)
    T = np.zeros((S, K, S))
    R = np.zeros((S, K))
    R_tot = np.zeros((S, K))
    H = np.zeros((S, K))
    states = np.arange(S)
    for k, opt in enumerate(options):
        pi = np.array(opt.policy)
        P = mdp.transitions[states, pi]
        r = mdp.task_reward[states, pi]
        D = np.eye(S)  # distribution after t steps
        for t in range(opt.length):
            step_r = D @ r
            R[:, k] += gamma_ctrl ** t * step_r
            R_tot[:, k] += step_r
            D = D @ P
        T[:, k] = D
        H[:, k] = opt.length
    return TabularSMDP(list(options), T, R, R_tot, H)


# --------------------------------------------------------------------------- #
# average reward
# --------------------------------------------------------------------------- #


@dataclass
class GainResult:
    gain: float
    bias: np.ndarray
    policy: np.ndarray
    iterations: int
    aperiodicity_transform: bool
    residual: float


def _rvi(P, r, tol, max_iter):
    S = P.shape[0]
    h = np.zeros(S)
    for it in range(1, max_iter + 1):
        Th = (r + P @ h).max(axis=1)
        diff = Th - h
        span = diff.max() - diff.min()
        h = Th - Th[0]
        if span < tol:
            return 0.5 * (diff.max() + diff.min()), h, it, span
    return None, h, max_iter, span


def gain(model: TabularMDP | TabularSMDP, tol: float = 1e-10, max_iter: int = 200_000) -> GainResult:
    """Optimal average reward per primitive step by relative value iteration.

    SMDPs are converted by the data transformation r/tau, I + (P - I)/tau
    (holding times tau), whose gain equals the SMDP gain per primitive step.
    If the span does not contract (periodic chains) the transition matrix is
    mixed with the identity, which leaves the gain unchanged, and RVI reruns.
    """
    if isinstance(model, TabularSMDP):
        tau = model.holding
        r = model.reward_total / tau
        P = model.transitions
    else:
        tau = np.ones((model.n_states, model.n_actions))
        r = model.task_reward
        P = model.transitions
    eye = np.eye(P.shape[0])[:, None, :]
    P_rate = eye + (P - eye) / tau[:, :, None]
    g, h, it, span = _rvi(P_rate, r, tol, max_iter)
    transformed = False
    if g is None:
        transformed = True
        P_rate = 0.5 * eye + 0.5 * P_rate
        g, h, it2, span = _rvi(P_rate, r, tol, max_iter)
        it += it2
        if g is None:
            raise RegretLabError(f"relative value iteration did not converge (span {span:.3e})")
    policy, g, h = _policy_iteration(P_rate, r, greedy(r + P_rate @ h))
    return GainResult(float(g), h, policy, it, transformed, float(span))


def _evaluate_average(P, r, policy):
    """Exact gain and bias (bias[0] = 0) of a unichain stationary policy."""
    S = P.shape[0]
    idx = np.arange(S)
    P_pi, r_pi = P[idx, policy], r[idx, policy]
    A = np.zeros((S + 1, S + 1))
    A[:S, :S] = np.eye(S) - P_pi
    A[:S, S] = 1.0
    A[S, 0] = 1.0
    sol = np.linalg.solve(A, np.concatenate([r_pi, [0.0]]))
    return sol[S], sol[:S]


def _policy_iteration(P, r, policy, max_iter: int = 100):
    # polishes the RVI policy so gains are exact up to linear-solve rounding
    for _ in range(max_iter):
        g, h = _evaluate_average(P, r, policy)
        Q = r + P @ h
        current = Q[np.arange(len(policy)), policy]
        better = Q.max(axis=1) > current + 1e-12 * np.maximum(1.0, np.abs(current))
        if not better.any():
            return policy, g, h
        policy = np.where(better, np.argmax(Q, axis=1), policy)
    return policy, g, h


def value_gap(mdp: TabularMDP, options: Sequence[Option], tol: float = 1e-9, g_mdp: float | None = None) -> float:
    g_m = gain(mdp).gain if g_mdp is None else g_mdp
    g_o = gain(build_smdp(mdp, options)).gain
    gap = g_m - g_o
    if gap < -tol:
        raise RegretLabError(f"negative value gap {gap:.3e}: SMDP policies are realizable in the MDP")
    return max(gap, 0.0)


# --------------------------------------------------------------------------- #
# traces and the decomposition
# --------------------------------------------------------------------------- #


@dataclass
class OptionCall:
    option: int
    length: int
    rewards: np.ndarray  # primitive task rewards collected during the call


@dataclass
class Trace:
    calls: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return sum(c.length for c in self.calls)

    @property
    def total_reward(self) -> float:
        return float(sum(c.rewards.sum() for c in self.calls))


def simulate_trace(mdp: TabularMDP, options: Sequence[Option], n_calls: int, seed: int,
                   epsilon: float = 0.1, lr: float = 0.1) -> Trace:
    """Sample a trace of option calls chosen by epsilon-greedy SMDP Q-learning on rate-normalized rewards."""
    rng = make_rng(seed, "trace")
    S, K = mdp.n_states, len(options)
    Q = np.zeros((S, K))
    s = int(rng.choice(S, p=mdp.start))
    trace = Trace()
    for _ in range(n_calls):
        k = int(rng.integers(K)) if rng.random() < epsilon else int(np.argmax(Q[s]))
        opt = options[k]
        start = s
        rewards = np.zeros(opt.length)
        for t in range(opt.length):
            a = opt.policy[s]
            rewards[t] = mdp.task_reward[s, a]
            s = int(rng.choice(S, p=mdp.transitions[s, a]))
        target = rewards.mean() + Q[s].max() / opt.length
        Q[start, k] += lr * (target - Q[start, k])
        trace.calls.append(OptionCall(k, opt.length, rewards))
    return trace


def regret_decomposition(trace: Trace, g_mdp: float, g_smdp: float) -> dict:
    if not trace.calls:
        raise ConfigurationError("trace must contain at least one option call")
    T_m = trace.steps
    C = trace.total_reward
    lhs = T_m * g_mdp - C
    term1 = T_m * g_smdp - C
    term2 = T_m * (g_mdp - g_smdp)
    return {
        "lhs": lhs,
        "rhs_term1": term1,
        "rhs_term2": term2,
        "residual": abs(lhs - (term1 + term2)),
        "steps": T_m,
        "calls": len(trace.calls),
    }


# --------------------------------------------------------------------------- #
# study
# --------------------------------------------------------------------------- #

OPTION_SET_CHAIN = (("one-hot", 2), ("bins-3", 3), ("bins-5", 5))


def option_set_chain(mdp: TabularMDP, lengths=(1, 2), gamma_option: float = 0.9, scales=None):
    """Nested option sets: one-hot vertices, then 3-bin and 5-bin grids over the channels."""
    scales = np.ones(mdp.n_channels) if scales is None else scales
    out = []
    for name, count in OPTION_SET_CHAIN:
        bins = tuple(k / (count - 1) for k in range(count))
        opts = behaviour_space_options(mdp, scales, bins, lengths, gamma_option, one_hot_only=(name == "one-hot"))
        out.append((name, opts))
    return out


def run_study(n_mdps: int = 10, seed: int = 0, lengths=(1, 2), gamma_option: float = 0.9,
              n_calls: int = 200, include_constructed: bool = True) -> list[dict]:
    """Rows: (mdp, option set, |Omega|, g*_M, g*_SMDP, gap, decomposition residual)."""
    mdps = [random_lab_mdp(derive_lab_seed(seed, i)) for i in range(n_mdps)]
    if include_constructed:
        mdps.append(interpolation_chain())
    rows = []
    for mi, mdp in enumerate(mdps):
        g_m = gain(mdp).gain
        for name, opts in option_set_chain(mdp, lengths, gamma_option):
            g_o = gain(build_smdp(mdp, opts)).gain
            gap = value_gap(mdp, opts, g_mdp=g_m)
            trace = simulate_trace(mdp, opts, n_calls, seed=derive_lab_seed(seed, mi, name))
            dec = regret_decomposition(trace, g_m, g_o)
            rows.append({
                "mdp": mdp.name,
                "option_set": name,
                "n_options": len(opts),
                "g_mdp": g_m,
                "g_smdp": g_o,
                "gap": gap,
                "residual": dec["residual"],
            })
    return rows


def derive_lab_seed(seed: int, *names) -> int:
    return derive_seed(seed, "regretlab", *names) % (2**31)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    fields = ["mdp", "option_set", "n_options", "g_mdp", "g_smdp", "gap", "residual"]
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
