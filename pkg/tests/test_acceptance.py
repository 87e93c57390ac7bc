"""Acceptance suite: one test per criterion; the terminal summary prints one pass/fail line each."""

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from bsrl.envs import build_chain
from bsrl.envs.tabular import interpolation_chain, random_lab_mdp
from bsrl.harness import experiments as ex
from bsrl.harness import parse_config, train
from bsrl.harness.train import METRICS_FILE
from bsrl.hierarchy import one_hot_support
from bsrl.learner import (
    LossSpec,
    PPOSettings,
    controller_batch,
    controller_returns,
    controller_targets,
    loss_and_grad,
    option_batch,
    option_returns,
    option_targets,
    vtrace,
)
from bsrl.net import NetDims, forward, init_params
from bsrl.regretlab import (
    behaviour_space_options,
    build_smdp,
    gain,
    option_set_chain,
    regret_decomposition,
    rows_to_csv,
    run_study,
    simulate_trace,
    value_gap,
)

from oracles import (
    brute_gae,
    controller_oracle,
    finite_difference_grad,
    finite_horizon_optimum,
    option_oracle,
    primitive_stream_targets,
)
from test_hierarchy import _collect
from test_learner import random_episode, transitions_for
from test_net import _batch, _random_params, _rel_err

SEEDS = (0, 1, 2, 3, 4)
CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --------------------------------------------------------------------------- #
# 1, 2: tabular option-set lab
# --------------------------------------------------------------------------- #


@pytest.mark.criterion(1, "regret decomposition residual below 1e-9 on every trace")
def test_criterion_1_decomposition_identity(record_property):
    worst, traces = 0.0, 0
    for i in range(10):
        mdp = random_lab_mdp(1000 + i)
        assert mdp.n_states <= 8
        g_m = gain(mdp).gain
        sets = option_set_chain(mdp, (1, 2), 0.9)
        assert len(sets) >= 3
        for name, opts in sets:
            g_o = gain(build_smdp(mdp, opts)).gain
            for k in range(3):
                dec = regret_decomposition(simulate_trace(mdp, opts, 200, seed=k), g_m, g_o)
                worst = max(worst, dec["residual"])
                traces += 1
    record_property("detail", f"{traces} traces, worst residual {worst:.1e}")
    assert worst < 1e-9


@pytest.mark.criterion(2, "value gap non-increasing one-hot -> 3-bin -> 5-bin, interpolation instance closed")
def test_criterion_2_expressivity_gap(record_property):
    rows = run_study(n_mdps=10, include_constructed=False)
    by_mdp: dict = {}
    for r in rows:
        by_mdp.setdefault(r["mdp"], {})[r["option_set"]] = r["gap"]
    assert len(by_mdp) == 10
    for gaps in by_mdp.values():
        assert gaps["bins-3"] <= gaps["one-hot"] and gaps["bins-5"] <= gaps["bins-3"]
    mdp = interpolation_chain()
    sets = dict(option_set_chain(mdp, (1, 2), 0.9))
    one_hot = value_gap(mdp, sets["one-hot"])
    mixed = [o for o in behaviour_space_options(mdp, np.ones(2), (0.0, 0.5, 1.0), (1,), 0.9) if o.rho == (0.5, 0.5)]
    closed = value_gap(mdp, sets["one-hot"] + mixed)
    record_property("detail", f"constructed instance gap {one_hot:.3f} one-hot, {closed:.3f} with the mixed option")
    assert one_hot > 0 and closed < 1e-12


# --------------------------------------------------------------------------- #
# 3, 4: gradients and targets
# --------------------------------------------------------------------------- #


@pytest.mark.criterion(3, "analytic gradients within 1e-4 relative of central differences")
def test_criterion_3_gradients(record_property):
    worst = 0.0
    for head, restricted in (("option", False), ("controller", False), ("controller", True)):
        for seed in range(5):
            params = _random_params(500 + seed)
            batch = _batch(50 + seed, head, restricted=restricted)
            spec = LossSpec(head, entropy_coef=0.05)
            _, grad, _ = loss_and_grad(params, batch, spec)
            fd = finite_difference_grad(lambda p: loss_and_grad(p, batch, spec)[0], params, h=1e-5)
            worst = max(worst, float(_rel_err(grad.flat(), fd).max()))
    record_property("detail", f"15 instances, worst rel err {worst:.1e}")
    assert worst < 1e-4


@pytest.mark.criterion(4, "GAE/SMDP targets vs brute force, lambda=1 primitive stream, on-policy V-trace")
def test_criterion_4_target_oracles(record_property):
    dims = NetDims(obs_dim=5, n_channels=3, n_bins=3, n_lengths=4, n_actions=4, hidden=8, option_hidden=6)
    params = init_params(11, dims, zero_policy=False)
    scales = np.array([1.0, 100.0, 0.1])
    worst = 0.0
    for seed in range(100):
        segs, lidx = random_episode(3000 + seed, terminal=seed % 3 != 0)
        adv, tg = option_returns(segs, 0.99, 0.95, params, scales=scales, reward_scale=0.01)
        oadv, otg = option_oracle([segs], params, 0.99, 0.95, scales, 0.01)
        trans = transitions_for(segs, lidx, 0.99)
        cadv, ctg = controller_returns(trans, 0.95, params)
        ocadv, octg = controller_oracle([trans], params, 0.95)
        worst = max(worst, *(float(np.max(np.abs(a - b))) for a, b in
                             ((adv, oadv), (tg, otg), (cadv, ocadv), (ctg, octg))))
    stream = 0.0
    for seed in range(20):
        terminal = seed % 2 == 0
        segs, lidx = random_episode(4000 + seed, T=24, terminal=terminal)
        trans = transitions_for(segs, lidx, 0.97, scale=0.5)
        _, tg = controller_returns(trans, 1.0, params)
        boot = 0.0 if terminal else float(forward(params, segs[-1].next_obs, np.zeros(3))["v_controller"])
        stream = max(stream, float(np.max(np.abs(tg - primitive_stream_targets(segs, 0.97, 0.5, boot)))))
    vt = 0.0
    rng = np.random.default_rng(0)
    for _ in range(100):
        T = int(rng.integers(1, 60))
        r, v, nv, lp = rng.normal(size=(4, T))
        disc = rng.choice([0.0, 0.99], size=T)
        a1, t1 = vtrace(r, v, nv, disc, lp, lp, 0.95)
        a2, t2 = brute_gae(r, v, nv, disc, 0.95)
        vt = max(vt, float(np.max(np.abs(a1 - a2))), float(np.max(np.abs(t1 - t2))))
    record_property("detail", f"oracle {worst:.1e}, primitive stream {stream:.1e}, v-trace {vt:.1e}")
    assert worst < 1e-10 and stream < 1e-10 and vt < 1e-12


# --------------------------------------------------------------------------- #
# 5: flat PPO on the chain
# --------------------------------------------------------------------------- #


def _chain_cfg(seed):
    data = json.loads((CONFIGS / "chain_flat.json").read_text())
    data["seed"] = seed
    return parse_config(data)


@pytest.fixture(scope="module")
def chain_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("chain")
    return root, {s: train(_chain_cfg(s), root / f"seed{s}") for s in SEEDS}


@pytest.mark.criterion(5, "flat PPO reaches the optimal greedy chain return within 2e5 steps on 5/5 seeds")
def test_criterion_5_flat_chain(chain_runs, record_property):
    _, runs = chain_runs
    cfg = _chain_cfg(0)
    mdp = build_chain(cfg.env.n_states, cfg.env.n_channels, seed=cfg.env.layout_seed, slip=cfg.env.slip)
    optimum = finite_horizon_optimum(mdp, cfg.env.max_steps)
    finals = {s: r.final_eval["return_mean"] for s, r in runs.items()}
    steps = {s: r.final_eval["step"] for s, r in runs.items()}
    hits = sum(abs(v - optimum) < 1e-9 for v in finals.values())
    record_property("detail", f"optimum {optimum:g}, {hits}/5 seeds, finals {list(finals.values())}")
    assert cfg.eval_greedy and all(st <= 200_000 for st in steps.values())
    assert hits == 5


# --------------------------------------------------------------------------- #
# 6: SOL as restricted HBS
# --------------------------------------------------------------------------- #


@pytest.mark.criterion(6, "one-hot restricted HBS reproduces SOL commands and targets exactly")
def test_criterion_6_sol_subset(record_property):
    hot = one_hot_support(5, 3)
    settings = PPOSettings(gamma_option=0.999, gamma_controller=0.999, channel_scales=(1, 100, 250, 0.1, 4),
                           support=hot)
    n_cmds = 0
    for seed in range(5):
        p_sol, sol = _collect("sol", seed=seed)
        p_hbs, hbs = _collect("hbs", support=hot, seed=seed)
        for a, b in zip(sol, hbs):
            assert [s.command for s in a.segments] == [s.command for s in b.segments]
            assert [(t.log_prob, t.support_index) for t in a.transitions] == \
                [(t.log_prob, t.support_index) for t in b.transitions]
            n_cmds += len(a.segments)
        ob = [option_batch([e.segments for e in x], 0.999, settings.channel_scales, 0.01) for x in (sol, hbs)]
        cb = [controller_batch([e.transitions for e in x]) for x in (sol, hbs)]
        ta = option_targets(p_sol, ob[0], settings) + controller_targets(p_sol, cb[0], settings)
        tb = option_targets(p_hbs, ob[1], settings) + controller_targets(p_hbs, cb[1], settings)
        assert all(x.tobytes() == y.tobytes() for x, y in zip(ta, tb))
    record_property("detail", f"{n_cmds} commands compared over 5 seeds")


# --------------------------------------------------------------------------- #
# 7, 8: desk-scale studies (reduced budget here; full budget via the CLI)
# --------------------------------------------------------------------------- #


def _study_base(**kw):
    data = json.loads((CONFIGS / "dungeon_hbs.json").read_text())
    data.update({"total_steps": 1000, "batch_size": 500, "eval_every": 1, "eval_episodes": 2, "hidden": 32,
                 "option_hidden": 16})
    data["env"] = {**data["env"], "max_steps": 250}
    data.update(kw)
    return parse_config(data).model_dump(mode="json")


def _tree_digests(root: Path) -> dict:
    return {str(p.relative_to(root)): _digest(p) for p in sorted(root.rglob("*"))
            if p.is_file() and p.suffix in (".jsonl", ".csv", ".json")}


@pytest.fixture(scope="module")
def growth_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("growth")
    reports = [ex.reward_set_growth(_study_base(), root / r, seeds=SEEDS) for r in ("a", "b")]
    return root, reports


@pytest.mark.criterion(7, "reward-set growth study runs end to end, deterministic, report emitted")
def test_criterion_7_growth(growth_runs, record_property):
    root, (rep_a, rep_b) = growth_runs
    rows = (root / "a" / "growth.csv").read_text().splitlines()
    assert len(rows) == 1 + 4 * 2 * len(SEEDS)
    assert rep_a == rep_b
    assert (root / "a" / "growth_report.json").exists() and (root / "a" / "growth.svg").exists()
    assert (root / "a" / "growth.svg").read_bytes() == (root / "b" / "growth.svg").read_bytes()
    assert _tree_digests(root / "a") == _tree_digests(root / "b")
    observed = rep_a["hbs_gains_more_often_than_sol"]
    record_property("detail", f"reduced budget; hbs-gains-more-often-than-sol observed={observed}")


@pytest.fixture(scope="module")
def gamma_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("gamma")
    base = _study_base(static_rho=[1, 1, 0, 1, 0])
    reports = [ex.gamma_sweep(base, root / r, seeds=(0, 1)) for r in ("a", "b")]
    return root, reports


@pytest.mark.criterion(8, "controller discount sweep with intra-option discount 0.999 emits its plot")
def test_criterion_8_gamma_sweep(gamma_runs, record_property):
    root, (rep, _) = gamma_runs
    assert rep["gamma_option"] == 0.999
    for g in ex.GAMMA_CONTROLLER_SWEEP:
        cfg = json.loads((root / "a" / f"hbs_gc{g}_seed0" / "config.json").read_text())
        assert cfg["gamma_controller"] == g and cfg["gamma_option"] == 0.999
    assert (root / "a" / "gamma_curves.svg").stat().st_size > 0 and (root / "a" / "gamma_final.svg").exists()
    record_property("detail", ", ".join(f"{k}: {v['mean']:.2f}" for k, v in sorted(rep["summary"].items())))


# --------------------------------------------------------------------------- #
# 9: determinism across the criteria above
# --------------------------------------------------------------------------- #


@pytest.mark.criterion(9, "identical seeds give byte-identical metrics files")
def test_criterion_9_determinism(chain_runs, growth_runs, gamma_runs, tmp_path, record_property):
    assert rows_to_csv(run_study(n_mdps=10)) == rows_to_csv(run_study(n_mdps=10))
    chain_root, _ = chain_runs
    train(_chain_cfg(0), tmp_path / "chain0")
    assert _digest(tmp_path / "chain0" / METRICS_FILE) == _digest(chain_root / "seed0" / METRICS_FILE)
    g_root, _ = growth_runs
    assert _tree_digests(g_root / "a") == _tree_digests(g_root / "b")
    y_root, _ = gamma_runs
    assert _tree_digests(y_root / "a") == _tree_digests(y_root / "b")
    record_property("detail", "lab CSV, chain seed 0 rerun, growth and gamma study trees")
