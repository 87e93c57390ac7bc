import numpy as np
import pytest

from bsrl.core import ConfigurationError, ContractViolation
from bsrl.envs.tabular import LEFT, RIGHT, STAY, TabularEnv, TabularMDP, build_chain, interpolation_chain, random_lab_mdp
from bsrl.regretlab import evaluate_policy, value_iteration

from oracles import enumerate_policies, lookahead_value


def test_chain_two_states_geometric_value():
    mdp = build_chain(2, 1, seed=0)
    V = evaluate_policy(mdp, mdp.task_reward, np.array([RIGHT, RIGHT]), 0.9)
    assert V[1] == pytest.approx(10.0, abs=1e-12)


def test_chain_reachability_within_four_steps():
    mdp = build_chain(5, 2, seed=7)
    reach = {0}
    for _ in range(4):
        reach |= {int(s2) for s in reach for a in range(3) for s2 in np.flatnonzero(mdp.transitions[s, a] > 0)}
    assert reach == set(range(5))


def test_chain_value_iteration_matches_lookahead_and_enumeration():
    mdp = build_chain(5, 2, seed=7)
    gamma = 0.45  # gamma^20 / (1 - gamma) < 1e-6 so 20 steps of lookahead pin V* to 1e-6
    for reward in (mdp.task_reward, mdp.combined_reward([0.5, 1.0])):
        V, _ = value_iteration(mdp, reward, gamma)
        np.testing.assert_allclose(V, lookahead_value(mdp, reward, gamma, 20), atol=1e-6)
        np.testing.assert_allclose(V, enumerate_policies(mdp, reward, gamma), atol=1e-10)


def test_chain_deterministic_and_validated():
    a, b = build_chain(6, 3, seed=11), build_chain(6, 3, seed=11)
    assert a.channel_rewards.tobytes() == b.channel_rewards.tobytes()
    assert a.waypoints == b.waypoints
    assert all(1 <= w <= 4 for w in a.waypoints[1:])
    with pytest.raises(ConfigurationError):
        build_chain(1)


def test_tabular_mdp_validation():
    T = np.full((2, 1, 2), 0.5)
    with pytest.raises(ContractViolation):
        TabularMDP(T * 1.1, np.zeros((1, 2, 1)), np.zeros((2, 1)), np.array([1.0, 0.0]))
    with pytest.raises(ContractViolation):
        TabularMDP(T, np.full((1, 2, 1), np.nan), np.zeros((2, 1)), np.array([1.0, 0.0]))


def test_random_lab_mdp_shape_and_positivity():
    for seed in range(20):
        mdp = random_lab_mdp(seed)
        assert 4 <= mdp.n_states <= 8
        assert np.all(mdp.transitions > 0)


def test_interpolation_chain_mixed_behaviour_differs():
    mdp = interpolation_chain()
    pols = {rho: tuple(value_iteration(mdp, mdp.combined_reward(rho), 0.9)[1])
            for rho in ((1.0, 0.0), (0.0, 1.0), (0.5, 0.5))}
    assert pols[(0.5, 0.5)] != pols[(1.0, 0.0)]
    assert pols[(0.5, 0.5)] != pols[(0.0, 1.0)]


def test_tabular_env_steps_and_time_limit():
    mdp = build_chain(5, 2, seed=7)
    env = TabularEnv(mdp, max_steps=6)
    obs = env.reset()
    assert obs.argmax() == 0 and obs.sum() == 1
    total, done, t = 0.0, False, 0
    while not done:
        obs, r, done = env.step(RIGHT)
        total += r.task
        t += 1
    assert t == 6 and total == 2.0  # states 0..3 unpaid, then two steps in the right state
    assert "visited-state-4" in env.milestones()
    env.reset()
    env.step(LEFT)
    assert env.state == 0
    env.step(STAY)
    assert env.state == 0
