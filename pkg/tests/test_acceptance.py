"""Acceptance suite: one PASS/FAIL line per headline criterion.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed even when output capture is on.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from hybridsizer import kernels
from hybridsizer._kernels_py import fill_row
from hybridsizer.cli import main
from hybridsizer.config import ExperimentConfig
from hybridsizer.design_opt import DesignConfig, DesignDistribution, EpisodeScore, gradient_estimate, optimize_design
from hybridsizer.dispatch import ActivationOutcome, apply_step
from hybridsizer.market_data import MarketSeries, PvSeries, episode_window
from hybridsizer.oracle import audit_rows, exhaustive_optimum
from hybridsizer.plant import DesignVector, PlantParams, PlantState, SocBoundError
from hybridsizer.policy_opt import ESTrainer, TrainConfig
from hybridsizer.runner import run_experiment
from hybridsizer.serial_bidding import AgentAction, PvForecast, build_hybrid_bids
from hybridsizer.settlement import (PriceQuote, accredited_capacity, capacity_revenue, energy_revenue, step_reward,
                                    two_settlement_revenue)
from hybridsizer.sim_env import HybridEnv, constant_policy
from hybridsizer.synthetic import noisy_pv_scenario

CONFIGS = Path(__file__).resolve().parents[1] / "src" / "hybridsizer" / "configs"


@pytest.fixture
def verdict(capsys):
    def report(name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, detail
    return report


def test_feasibility_suite(verdict):
    params = PlantParams()
    worst = ActivationOutcome.worst_case(params)
    quote = PriceQuote(50.0, 5.0, 5.0, 5.0, params.pi_imb)
    rng = np.random.default_rng(2024)
    n = 100_000
    actions = rng.uniform(0, 1, (n, 5))
    soc = rng.uniform(params.S_min, params.S_max, n)
    p_pred = rng.uniform(0, 15, n)
    # realized PV at least the guaranteed share of the forecast
    p_avail = p_pred * rng.uniform(params.kappa, 1.5, n)
    designs = rng.uniform(0, [20, 50, 12], (n, 3))
    designs[rng.random(n) < 0.05, 1:] = 0.0
    rows = np.zeros((n, kernels.N_COLS))
    faults = 0
    t0 = time.perf_counter()
    for i in range(n):
        d = DesignVector(*designs[i])
        a = AgentAction.from_array(actions[i])
        state = PlantState(float(soc[i]))
        bids = build_hybrid_bids(a, state, PvForecast(float(p_pred[i])), d, params)
        try:
            _, rec = apply_step(state, bids, float(p_avail[i]), worst, a.a_imb, d, params)
        except SocBoundError:
            faults += 1
            continue
        fill_row(rows[i], a, p_pred[i], p_avail[i], quote, worst, bids, rec, step_reward(quote, rec, bids, params))
    report = audit_rows(rows, designs, params)
    elapsed = time.perf_counter() - t0
    ok = report.ok and faults == 0 and elapsed < 60
    verdict("feasibility suite", ok, f"{n} samples, {len(report.violations)} violations, {faults} SOC faults, "
                                     f"{elapsed:.1f} s (limit 60 s)")


def test_penalty_equivalence(verdict):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10_000):
        q = PriceQuote(float(rng.uniform(-100, 1000)), pi_imb=float(rng.uniform(0, 3)))
        x_e, b_e, dt = rng.uniform(-10, 10), rng.uniform(-10, 10), float(rng.choice([0.25, 0.5, 1.0]))
        worst = max(worst, abs(energy_revenue(q, x_e, b_e, dt) - two_settlement_revenue(q, x_e, b_e, dt)))
    verdict("penalty-model equivalence", worst <= 1e-9, f"max |diff| {worst:.3e} over 10^4 settlements (tol 1e-9)")


def test_capacity_formula(verdict):
    params = PlantParams(H_cr=4.0, phi_pv=0.4, P_poi_max=10.0)
    d = DesignVector(11.0, 20.0, 5.0)
    mw = accredited_capacity(d, params)
    pay = capacity_revenue(PriceQuote(0.0, lambda_cap=8.31), d, params)
    ok = mw == 9.4 and pay == pytest.approx(937_368.0, abs=1e-6)
    verdict("capacity formula", ok, f"accredited {mw} MW (expect 9.4), payment ${pay:,.2f} (expect $937,368.00)")


def test_oracle_equivalence(verdict):
    ts = np.datetime64("2020-06-01T10:00:00", "s") + np.arange(4) * np.timedelta64(3600, "s")
    market = MarketSeries(ts, [30.0, 20.0, 25.0, 90.0], [4.0, 4, 6, 3], [6.0, 5, 8, 4], [3.0, 2, 2, 5], 1.0)
    env = HybridEnv(market, PvSeries(ts, [6.0, 7.0, 5.0, 2.0], 1.0), windows=[episode_window(4, 3, 1.0, 1)])
    d = DesignVector(6.0, 20.0, 5.0)
    t0 = time.perf_counter()
    best = exhaustive_optimum(env, d).best_return
    res = ESTrainer(env, TrainConfig(population=32, episodes=32 * 300, warmup_episodes=10, eval_episodes=1), d).run()
    got = env.rollout(res.policy, d).total_reward
    elapsed = time.perf_counter() - t0
    ok = got >= 0.95 * best and elapsed < 600
    verdict("oracle equivalence", ok, f"trained {got:.2f} vs grid optimum {best:.2f} ({got / best:.1%}, need 95%), "
                                      f"{elapsed:.1f} s (limit 600 s)")


def test_design_gradient_convergence(verdict):
    target = np.array([15.0, 16.0, 6.0])
    cfg = DesignConfig(alpha_mu=0.02, n_up=32, episodes=5000, eta_fraction=0.0, seed=0, train_policy=False)
    dist, _ = optimize_design(lambda w, eta: -float(np.sum((w.as_array() - target) ** 2)), cfg)
    rel = np.abs(dist.mu - target) / target
    conv = bool(np.all(rel <= 0.05))

    c = np.array([2.0, -1.0, 4.0])
    g = DesignDistribution([10.0, 20.0, 5.0], (1.0, 2.0, 0.5))
    rng = np.random.default_rng(99)
    N = 32
    loo, mean = [], []
    for _ in range(100_000 // N):
        raws = g.mu + g.sigma * rng.standard_normal((N, 3))
        batch = [EpisodeScore(DesignVector.from_array(r), float(c @ r), r) for r in raws]
        loo.append(gradient_estimate(g, batch, "leave_one_out"))
        mean.append(gradient_estimate(g, batch, "mean"))
    loo, mean = np.array(loo), np.array(mean)
    z = np.abs(loo.mean(axis=0) - c) / (loo.std(axis=0, ddof=1) / np.sqrt(len(loo)))
    same_dir = np.allclose(mean, loo * (N - 1) / N, rtol=1e-12, atol=1e-12)
    ok = conv and bool(np.all(z < 3)) and same_dir
    verdict("design-gradient convergence", ok,
            f"mu {np.round(dist.mu, 3).tolist()} (max rel err {rel.max():.2%}, limit 5%); "
            f"linear-G z-scores {np.round(z, 2).tolist()} (limit 3); mean baseline = (N-1)/N x unbiased: {same_dir}")


def test_hybrid_beats_colocated(verdict, tmp_path):
    cfg = ExperimentConfig.load(CONFIGS / "clipped_compare.yaml")
    out = run_experiment(cfg, "compare", tmp_path / "cmp")
    c = json.loads((out / "summary.json").read_text())["comparison"]
    rh, rc = c["total_revenue"]["hybrid"], c["total_revenue"]["colocated"]
    ch, cc = c["curtailment_mwh"]["hybrid"], c["curtailment_mwh"]["colocated"]
    ok = rh > rc and ch <= cc
    verdict("hybrid vs co-located", ok, f"revenue {rh:.1f} vs {rc:.1f} $, curtailment {ch:.2f} vs {cc:.2f} MWh")


def test_imbalance_direction(verdict):
    d = DesignVector(10.0, 20.0, 5.0)
    lines, ok = [], True
    for seed in range(3):
        market, pv = noisy_pv_scenario(seed=seed)
        w = [episode_window(len(market), len(market) - 1, 1.0, 1)]
        hyb = HybridEnv(market, pv, windows=w)
        col = hyb.with_mode("colocated")
        base = [0.5, 0.2, 0.2, 0.2]
        t0 = hyb.rollout(constant_policy(base + [0.0]), d).totals()
        t1 = hyb.rollout(constant_policy(base + [1.0]), d).totals()
        tc = col.rollout(constant_policy(base + [1.0]), d).totals()
        n = len(market) - 1
        m0, m1 = t0["abs_delta_E"] / n, t1["abs_delta_E"] / n
        ok &= m1 < m0 and t1["imbalance_penalty"] <= tc["imbalance_penalty"]
        lines.append(f"seed {seed}: mean|dE| {m1:.3f} < {m0:.3f}, penalty {t1['imbalance_penalty']:.0f} <= "
                     f"{tc['imbalance_penalty']:.0f}")
    verdict("imbalance-mitigation direction", ok, "; ".join(lines))


def test_co_optimize_determinism(verdict, tmp_path):
    outs = []
    for w in (1, 2):
        out = tmp_path / f"w{w}"
        assert main(["co-optimize", "--config", str(CONFIGS / "case1.yaml"), "--out", str(out),
                     "--workers", str(w)]) == 0
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    other = sorted(p.relative_to(outs[1]) for p in outs[1].rglob("*") if p.is_file())
    diff = [str(f) for f in files if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes()]
    ok = files == other and not diff
    verdict("co-optimize determinism", ok, f"{len(files)} files compared across 1 and 2 workers, "
                                          f"{len(diff)} differ {diff}")


def test_shipped_case_configs_load():
    for name in ("case1", "case2", "case3", "case4"):
        doc = yaml.safe_load((CONFIGS / f"{name}.yaml").read_text())
        assert ExperimentConfig.from_dict(doc, CONFIGS).mode == "hybrid"
