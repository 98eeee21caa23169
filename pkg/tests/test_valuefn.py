import math

import numpy as np
import pytest
from conftest import small_config
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lambertw

from cachesched.radio import sample_gains, theta_offset
from cachesched.scenario import ConfigError, Geometry, place_caches
from cachesched.txopt import CostModel
from cachesched.valuefn import (InstanceTooLarge, ReducedState, ValueTable, approx_value,
                                build_value_table, exact_value_iteration, load_table, poisson_mixture_cost,
                                poisson_penalty, poisson_pmf, poisson_truncation, save_table,
                                table_from_text, table_to_text, tiny_instance, value_bounds)

MODEL = CostModel(8, 1e-11, 1.0, 100.0, 7e6)


def synthetic_table(n_max=20, n_caches=2, c0=10.0, pen=None):
    m = np.arange(n_max + 1)
    pen = np.outer(m, np.ones(n_caches)) if pen is None else pen
    return ValueTable(c0 * m, c0 * m[:, None] + pen, c0, MODEL)


# --- truncation and Poisson helpers ----------------------------------------

def test_truncation_examples():
    assert poisson_truncation(2.0, 1.0, 1e-9) == 16
    assert poisson_truncation(0.0, 5.0, 1e-9) == 0
    with pytest.raises(ValueError):
        poisson_truncation(1.0, 1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 30), st.sampled_from([1e-3, 1e-6, 1e-9, 1e-12]))
def test_truncation_covers_mass(mean, eps):
    n = poisson_truncation(mean, 1.0, eps)
    assert poisson_pmf(n, mean).sum() >= 1 - eps
    pmf = poisson_pmf(n + 300, mean)
    first_moment_tail = [math.fsum(k * pmf[k] for k in range(j + 1, n + 301)) for j in (n - 1, n)]
    assert first_moment_tail[1] < eps
    if n > 0:  # smallest such N_max
        assert first_moment_tail[0] >= eps * (1 - 1e-9)


def test_pmf_zero_mean():
    assert np.array_equal(poisson_pmf(3, 0.0), [1.0, 0, 0, 0])


def test_poisson_penalty_examples():
    table = synthetic_table()
    assert poisson_penalty(0, 0.5, 0.0, table) == 0.0
    flat = synthetic_table(pen=np.zeros((21, 2)))
    assert poisson_penalty(1, 0.5, 3.0, flat) == 0.0
    # penalty = N, so the mixture is E[N] = 2
    assert poisson_penalty(0, 2.0, 1.0, synthetic_table(n_max=16)) == pytest.approx(2.0, abs=1e-8)


def test_mixture_cost_examples():
    table = synthetic_table(n_max=poisson_truncation(1.5, 2.0, 1e-9), c0=7.0)
    full = ReducedState.full(2, 3)
    # exact up to the truncated first-moment tail
    assert poisson_mixture_cost(full, 1.5, 2.0, table) == pytest.approx(3.0 * 7.0, abs=7.0 * 1e-9)
    assert poisson_mixture_cost(ReducedState.empty(2, 3), 1.0, 0.0, table) == 0.0


# --- reduced state ------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.data())
def test_state_index_round_trip(C, S, data):
    idx = data.draw(st.integers(0, (1 << (C * S)) - 1))
    state = ReducedState.from_index(idx, C, S)
    assert state.index == idx
    assert state == ReducedState(state.bits.copy()) and hash(state) == hash(ReducedState(state.bits))


def test_state_helpers():
    s = ReducedState.missing_one(2, 3, 1, 2)
    assert s.missing_pairs() == [(1, 2)]
    assert list(s.missing_counts()) == [0, 1]
    assert s.with_filled([1], 2).is_full
    assert s.with_filled([1], 2).issuperset(s)


# --- approximation --------------------------------------------------------------

def test_approx_value_examples():
    table = synthetic_table(n_max=5, pen=np.array([[0, 0]] + [[3.0 * m, 5.0 * m] for m in range(1, 6)]))
    assert approx_value(ReducedState.full(2, 2), 4, table) == table.v_star[4]
    assert approx_value(ReducedState.missing_one(2, 2, 1, 0), 4, table) == table.v_missing[4, 1]
    both_missing_2nd = ReducedState([[True, False], [True, False]])
    m = 3
    expected = table.v_star[m] + (table.v_missing[m, 0] - table.v_star[m]) + (table.v_missing[m, 1] - table.v_star[m])
    assert approx_value(both_missing_2nd, m, table) == pytest.approx(expected)
    with pytest.raises(IndexError):
        approx_value(both_missing_2nd, 6, table)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 63), st.integers(0, 5), st.integers(0, 2), st.integers(0, 1), st.integers(0, 2**32))
def test_approx_value_additive(idx, m, c, s, seed):
    rng = np.random.default_rng(seed)
    pen = np.cumsum(rng.uniform(0, 10, (6, 3)), axis=0)
    pen[0] = 0
    table = synthetic_table(n_max=5, n_caches=3, pen=pen)
    state = ReducedState.from_index(idx, 3, 2)
    bits = state.bits.copy()
    bits[c, s] = True
    filled = ReducedState(bits)
    diff = approx_value(state, m, table) - approx_value(filled, m, table)
    expected = table.penalty_matrix[m, c] if not state.bits[c, s] else 0.0
    assert diff == pytest.approx(expected, abs=1e-9)


# --- table construction -----------------------------------------------------------

def test_mc_sample_floor(cfg):
    g = place_caches(cfg, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        build_value_table(cfg, g, 99, np.random.default_rng(0))


def test_no_caches_table():
    cfg = small_config(cache_count=0)
    g = place_caches(cfg, np.random.default_rng(0))
    table = build_value_table(cfg, g, 20_000, np.random.default_rng(1), n_max=4)
    ref = sample_gains(cfg, g, 20_000, np.random.default_rng(1))
    assert table.v_missing.shape == (5, 0)
    assert table.unit_cost == pytest.approx(CostModel.from_config(cfg).cost(ref.user_gain).sum(1).mean(), rel=1e-12)


def _independent_cost(gain, cfg):
    theta = np.log2(gain) + theta_offset(cfg.antennas, cfg.noise_power)
    w = lambertw(2.0 ** theta * cfg.w_t / (math.e * cfg.w_e)).real
    return cfg.w_t * cfg.bits_per_segment * math.log(2) / w


def test_whole_cell_cache_single_segment():
    # one cache whose disc covers the cell: with the cache missing a segment, a
    # request pays exactly that segment's user-targeted cost at m = 1
    cfg = small_config(cache_count=1, cache_service_radius=1000.0, cell_radius=500.0,
                       cache_placement=((0.0, 0.0),))
    g = Geometry(np.array([[0.0, 0.0]]), 1000.0)
    table = build_value_table(cfg, g, 1_000_000, np.random.default_rng(5), n_max=3)
    ref = sample_gains(cfg, g, 1_000_000, np.random.default_rng(6), cache_segments=1)
    costs = _independent_cost(ref.user_gain[:, 0], cfg)
    half = 1.96 * costs.std() / math.sqrt(len(costs)) * math.sqrt(2)
    assert table.unit_cost == 0.0
    assert abs(table.v_missing[1, 0] - costs.mean()) <= half


def _loop_recursion(sample, model, n_max):
    """Per-draw evaluation of the one-missing-pair Bellman targets with explicit loops."""
    ucost = model.cost(sample.user_gain)
    ccost = model.cost(sample.cache_gain)
    K, C, Sp = sample.cache_gain.shape
    outside = ~sample.covered.any(axis=1)
    c0 = float(np.mean(outside * ucost.sum(1)))
    vs = c0 * np.arange(n_max + 1)
    vm = np.zeros((n_max + 1, C))
    for m in range(1, n_max + 1):
        for i in range(C):
            acc = 0.0
            for k in range(K):
                others = [j for j in range(C) if j != i and sample.covered[k, j]]
                for s in range(Sp):
                    if others:
                        acc += vm[m - 1, i]
                        continue
                    a = ucost[k, s] + (ucost[k].sum() - ucost[k, s] if outside[k] else 0.0)
                    if sample.cache_gain[k, i, s] >= sample.user_gain[k, s]:
                        acc += a + vs[m - 1]
                    else:
                        acc += a + min(vm[m - 1, i], vs[m - 1] + ccost[k, i, s] - ucost[k, s])
            vm[m, i] = acc / (K * Sp)
    return c0, vs, vm


def test_recursion_matches_loop_oracle():
    cfg = small_config(cache_count=3, cache_service_radius=150.0,
                       cache_placement=((300.0, 0.0), (400.0, 80.0), (-300.0, 0.0)))
    g = place_caches(cfg, np.random.default_rng(0))
    sample = sample_gains(cfg, g, 600, np.random.default_rng(1)).cyclic_symmetrized()
    table = build_value_table(cfg, g, 0, None, n_max=4, sample=sample)
    c0, vs, vm = _loop_recursion(sample, table.model, 4)
    assert table.unit_cost == pytest.approx(c0, rel=1e-12)
    assert np.allclose(table.v_missing, vm, rtol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 4), st.floats(40.0, 200.0))
def test_built_table_invariants(seed, n_caches, radius):
    cfg = small_config(cache_count=n_caches, cache_service_radius=radius)
    rng = np.random.default_rng(seed)
    g = place_caches(cfg, rng)
    table = build_value_table(cfg, g, 2000, rng, n_max=8)
    assert table.invariant_violations() == []
    assert table.v_star[5] == pytest.approx(5 * table.v_star[1], rel=1e-12)
    pen = table.penalty_matrix
    assert np.all(np.diff(pen, axis=0) >= -1e-6 * max(1.0, table.unit_cost))


def test_mixture_full_state_is_mean_times_unit_cost(cfg):
    g = place_caches(cfg, np.random.default_rng(0))
    table = build_value_table(cfg, g, 5000, np.random.default_rng(1))
    full = ReducedState.full(cfg.cache_count, cfg.segments)
    assert poisson_mixture_cost(full, cfg.request_rate, cfg.lifetime, table) == pytest.approx(
        cfg.expected_requests * table.unit_cost, rel=1e-9)


# --- exact oracle and bounds ----------------------------------------------------------

def _tiny(C, S, placement, radius=150.0, seed=0, samples=4000, n_max=5):
    cfg = small_config(cache_count=C, segments=S, cache_service_radius=radius, cache_placement=placement,
                       file_bits=7e6 * S)
    g = place_caches(cfg, np.random.default_rng(seed))
    exact, table = tiny_instance(cfg, g, samples, np.random.default_rng(seed + 1), n_max)
    return cfg, g, exact, table


def test_single_cache_exact_equals_approximation():
    cfg, g, exact, table = _tiny(1, 1, ((300.0, 0.0),))
    for idx in range(2):
        state = ReducedState.from_index(idx, 1, 1)
        for m in range(6):
            assert exact.value(state, m) == pytest.approx(approx_value(state, m, table), rel=1e-12)


def test_two_caches_one_segment_bounds_coincide_at_m1():
    cfg, g, exact, table = _tiny(2, 1, ((300.0, 0.0), (-300.0, 0.0)))
    state = ReducedState.empty(2, 1)
    b = value_bounds(state, 1, table, g.overlap_detected)
    assert b.certified and b.lower == pytest.approx(b.upper, rel=1e-14)
    assert exact.value(state, 1) == pytest.approx(b.upper, rel=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_sandwich_and_gap_bound(seed):
    cfg, g, exact, table = _tiny(2, 2, ((300.0, 0.0), (-250.0, 100.0)), seed=seed)
    assert not g.overlap_detected
    pen = table.penalty_matrix
    for idx in range(16):
        state = ReducedState.from_index(idx, 2, 2)
        counts = state.missing_counts()
        for m in range(1, 6):
            b = value_bounds(state, m, table)
            e = exact.value(state, m)
            tol = 1e-10 * e
            assert b.lower - tol <= e <= b.upper + tol
            gap = counts @ (pen[m] - pen[1])
            assert b.upper - e <= gap + tol


def test_overlap_flags_bounds_uncertified():
    cfg, g, exact, table = _tiny(2, 1, ((300.0, 0.0), (300.0, 100.0)))
    assert g.overlap_detected
    assert not value_bounds(ReducedState.empty(2, 1), 2, table, g.overlap_detected).certified


def test_exact_refuses_large_instances():
    cfg = small_config(cache_count=4)
    g = place_caches(cfg, np.random.default_rng(0))
    with pytest.raises(InstanceTooLarge, match="N_C <= 3"):
        exact_value_iteration(cfg, g, 100, np.random.default_rng(0), n_max=3)
    cfg = small_config(cache_count=2)
    g = place_caches(cfg, np.random.default_rng(0))
    with pytest.raises(InstanceTooLarge, match="N_max <= 6"):
        exact_value_iteration(cfg, g, 100, np.random.default_rng(0), n_max=7)


def test_exact_values_monotone():
    cfg, g, exact, table = _tiny(2, 2, ((300.0, 0.0), (-300.0, 0.0)))
    for idx in range(16):
        state = ReducedState.from_index(idx, 2, 2)
        vals = exact.values[:, idx]
        assert np.all(np.diff(vals) >= 0)
        for c in range(2):
            for s in range(2):
                fuller = state.with_filled([c], s)
                assert exact.values[:, fuller.index].sum() <= vals.sum() + 1e-6


# --- serialization -------------------------------------------------------------------

def test_table_text_round_trip(tmp_path, cfg):
    g = place_caches(cfg, np.random.default_rng(0))
    table = build_value_table(cfg, g, 1000, np.random.default_rng(1))
    path = tmp_path / "t.txt"
    save_table(table, path, t=42)
    loaded, t = load_table(path)
    assert t == 42
    assert np.array_equal(loaded.v_star, table.v_star) and np.array_equal(loaded.v_missing, table.v_missing)
    assert loaded.model == table.model and loaded.config_hash == table.config_hash
    assert table_to_text(loaded, 42) == path.read_text()
    with pytest.raises(ValueError):
        table_from_text("garbage\n")
