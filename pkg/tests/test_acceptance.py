"""End-to-end acceptance criteria, one test each, at the stated tolerances."""

import math
import time

import numpy as np
import pytest
from scipy import stats

from cachesched import sim
from cachesched.learn import delta_decay_slope, run_learner
from cachesched.radio import theta_of_gain
from cachesched.txopt import lambert_w0, oracle_min_cost, segment_min_cost, stationarity_residual
from cachesched.valuefn import ReducedState, build_value_table, poisson_truncation, tiny_instance, value_bounds

pytestmark = pytest.mark.acceptance

LAMBDA_T = (2, 4, 6, 8, 10)


def test_criterion_01_lambert_w_identity(report):
    start = time.perf_counter()
    x = np.logspace(-6, 6, 1000)
    w = lambert_w0(x)
    err = np.abs(w * np.exp(w) - x) / np.maximum(1.0, x)
    elapsed = time.perf_counter() - start
    report(1, err.max() <= 1e-12 and elapsed < 1.0,
           f"max |W e^W - x| / max(1, x) = {err.max():.2e} (<= 1e-12), {elapsed:.3f} s")


def test_criterion_02_closed_form_vs_search(report):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_cost = worst_res = 0.0
    for _ in range(100):
        theta = rng.uniform(-5.0, 30.0)
        w_e, w_t = 10 ** rng.uniform(-2, 2, size=2)
        sol = segment_min_cost(theta, w_e, w_t, 1.4e7)
        ref = oracle_min_cost(theta, w_e, w_t, 1.4e7, lo=1e-12, hi=1e12)
        worst_cost = max(worst_cost, abs(sol.cost / ref.cost - 1))
        worst_res = max(worst_res, abs(stationarity_residual(theta, sol.power, w_e, w_t)))
    elapsed = time.perf_counter() - start
    report(2, worst_cost <= 1e-6 and worst_res <= 1e-9 and elapsed < 1.0,
           f"max rel cost gap {worst_cost:.2e} (<= 1e-6), max stationarity residual {worst_res:.2e} "
           f"(<= 1e-9), {elapsed:.3f} s")


def test_criterion_03_theta_digamma_vs_monte_carlo(report):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    gain, noise = 1e-9, 1e-11
    gaps = {}
    for n_t in (1, 2, 8):
        h2 = rng.gamma(n_t, gain, size=1_000_000)
        mc = float(np.mean(np.log2(h2 / (n_t * noise))))
        gaps[n_t] = abs(theta_of_gain(gain, n_t, noise) - mc)
    elapsed = time.perf_counter() - start
    worst = max(gaps.values())
    report(3, worst <= 0.01 and elapsed < 10.0,
           "bit gaps " + ", ".join(f"N_T={k}: {v:.4f}" for k, v in gaps.items()) + f" (<= 0.01), {elapsed:.2f} s")


def test_criterion_04_bound_sandwich(report, tiny_cfg):
    start = time.perf_counter()
    g = sim.experiment_geometry(tiny_cfg)
    exact, table = tiny_instance(tiny_cfg, g, 100_000, np.random.default_rng(4), n_max=5)
    bad, worst_m1 = [], 0.0
    for idx in range(16):
        state = ReducedState.from_index(idx, 2, 2)
        for m in range(1, 6):
            b = value_bounds(state, m, table, g.overlap_detected)
            v = exact.value(state, m)
            scale = max(1.0, abs(v))
            if not (b.lower <= v + 1e-12 * scale and v <= b.upper + 1e-12 * scale):
                bad.append((state.label(), m))
            if m == 1:
                worst_m1 = max(worst_m1, abs(b.lower - v) / scale, abs(b.upper - v) / scale)
    elapsed = time.perf_counter() - start
    ok = not g.overlap_detected and not bad and worst_m1 <= 1e-9 and elapsed < 120
    report(4, ok, f"{80 - len(bad)}/80 sandwiched, max rel gap at m=1 {worst_m1:.1e}, {elapsed:.1f} s")


def test_criterion_05_exact_cost_predictor(report, tiny_cfg):
    start = time.perf_counter()
    g = sim.experiment_geometry(tiny_cfg)
    (policy,) = sim.build_policies(tiny_cfg, g, ["optimal-tiny"], mc_samples=100_000, n_max=6)
    predicted = policy.exact.predicted_cost(tiny_cfg.request_rate, tiny_cfg.lifetime)
    s = sim.run_experiment(tiny_cfg, [policy], 10_000, geometry=g).summaries["optimal-tiny"]
    elapsed = time.perf_counter() - start
    ok = abs(s.mean - predicted) <= s.ci95 and elapsed < 120
    report(5, ok, f"simulated {s.mean:.5g} +/- {s.ci95:.3g} vs predicted {predicted:.5g}, {elapsed:.1f} s")


def test_criterion_06_amdp_beats_baselines(report, cell20_cfg):
    start = time.perf_counter()
    T = cell20_cfg.lifetime
    top = cell20_cfg.replace(request_rate=max(LAMBDA_T) / T)
    g = sim.experiment_geometry(top)
    policies = sim.build_policies(top, g, ["amdp", "b1", "b2"])
    lines, ok = [], True
    for lt in LAMBDA_T:
        res = sim.run_experiment(cell20_cfg.replace(request_rate=lt / T), policies, 1000, geometry=g)
        d1, d2 = res.paired("amdp", "b1"), res.paired("amdp", "b2")
        ok &= d1.significant_less and d2.significant_less
        lines.append(f"lT={lt}: vs b1 {d1.mean / res.summaries['b1'].mean:+.2%}, "
                     f"vs b2 {d2.mean / res.summaries['b2'].mean:+.2%}")
    elapsed = time.perf_counter() - start
    report(6, ok and elapsed < 300, "; ".join(lines) + f" (1000 paired reps each), {elapsed:.0f} s")


def test_criterion_07_learned_beats_uniform(report, hotzone_cfg):
    start = time.perf_counter()
    cfg = hotzone_cfg.replace(request_rate=6 / hotzone_cfg.lifetime)
    g = sim.experiment_geometry(cfg)
    policies = sim.build_policies(cfg, g, ["amdp-learned", "amdp-uniform"], learn_draws=10_000)
    res = sim.run_experiment(cfg, policies, 400, geometry=g)
    d = res.paired("amdp-learned", "amdp-uniform")
    elapsed = time.perf_counter() - start
    report(7, d.significant_less and elapsed < 300,
           f"learned - uniform = {d.mean:.3g} +/- {d.halfwidth:.3g} (400 paired reps), {elapsed:.0f} s")


def test_criterion_08_proactive_placement(report, hotzone_cfg):
    start = time.perf_counter()
    cfg = hotzone_cfg.replace(request_rate=6 / hotzone_cfg.lifetime, proactive_threshold=1.05,
                              proactive_period=hotzone_cfg.lifetime / 500)
    g = sim.experiment_geometry(cfg)
    policies = sim.build_policies(cfg, g, ["amdp", "amdp-proactive"])
    res = sim.run_experiment(cfg, policies, 400, geometry=g)
    d = res.paired("amdp-proactive", "amdp")
    elapsed = time.perf_counter() - start
    report(8, d.significant_less and elapsed < 300,
           f"proactive - reactive = {d.mean:.3g} +/- {d.halfwidth:.3g} (400 paired reps, 500 "
           f"opportunities, tau'=1.05), {elapsed:.0f} s")


def test_criterion_09_learning_convergence(report, cell20_cfg):
    start = time.perf_counter()
    g = sim.experiment_geometry(cell20_cfg)
    run = run_learner(cell20_cfg, g, np.random.default_rng(9), 10_000, tau=0.0)
    analytic = build_value_table(cell20_cfg, g, 1_000_000, np.random.default_rng(90))
    rel = abs(run.state.table.v_star[1] / analytic.v_star[1] - 1)
    slope = delta_decay_slope(run.deltas)
    elapsed = time.perf_counter() - start
    ok = run.state.t == 10_000 and rel <= 0.02 and -1.3 <= slope <= -0.7 and elapsed < 60
    report(9, ok, f"v_star[1] rel gap {rel:.2%} (<= 2%), log-delta slope {slope:.3f} (in [-1.3, -0.7]), "
                  f"{elapsed:.1f} s")


def test_criterion_10_request_statistics(report):
    start = time.perf_counter()
    rng = np.random.default_rng(10)
    lam, T = 0.004, 1000.0
    counts = np.array([len(sim.generate_requests(lam, T, rng)) for _ in range(100_000)])
    mean_gap = abs(counts.mean() / 4 - 1)
    var_gap = abs(counts.var(ddof=1) / 4 - 1)
    n_max = poisson_truncation(lam, T, 1e-9)
    tail = stats.poisson.sf(n_max, lam * T)  # P(N > N_max)
    elapsed = time.perf_counter() - start
    ok = mean_gap <= 0.01 and var_gap <= 0.03 and tail < 1e-9 and elapsed < 10
    report(10, ok, f"mean gap {mean_gap:.2%} (<= 1%), variance gap {var_gap:.2%} (<= 3%), "
                   f"N_max={n_max} tail {tail:.1e} (< 1e-9), {elapsed:.1f} s")
