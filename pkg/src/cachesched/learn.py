"""Online running-average estimation of the value tables from observed requests.

The learner starts from a table built under uniformly placed users (counted
as observation 0) and folds in one sample target per entry and observation.
``v_missing`` targets bootstrap the penalty part from the table's own ``m - 1``
row as it stood before the update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .radio import sample_gains
from .valuefn import _missing_terms, build_value_table

DEFAULT_INIT_SAMPLES = 100_000


@dataclass
class LearnerState:
    table: object  # ValueTable, provenance "learned"
    t: int = 0
    last_delta: float = float("inf")


def learn_init(config, geometry, rng, mc_samples=DEFAULT_INIT_SAMPLES, n_max=None):
    uniform = config.replace(hot_zones=())
    table = build_value_table(uniform, geometry, mc_samples, rng, n_max=n_max)
    table = table.copy(provenance="learned", config_hash=config.config_hash())
    return LearnerState(table, 0, float("inf"))


def sample_targets(table, user_gain, cache_gain, covered):
    """Per-observation targets ``(v_star (N_max+1,), v_missing (N_max+1, N_C))``.

    ``user_gain`` (N_S,), ``cache_gain`` (N_C, N_S), ``covered`` (N_C,).
    """
    model = table.model
    ucost = model.cost(user_gain)
    outside = not np.any(covered)
    m = np.arange(table.n_max + 1)
    star = m * (ucost.sum() if outside else 0.0)

    C = len(covered)
    miss = np.zeros((table.n_max + 1, C))
    if C == 0:
        return star, miss
    ccost = model.cost(cache_gain)
    a, need, strong, weak, delta = _missing_terms(user_gain[None, :], ucost[None, :],
                                                  cache_gain[None], ccost[None], covered[None])
    a, need, strong, delta = a[0], need[0], strong[0], delta[0]  # (C, S)
    # The all-cached continuation uses this draw's own sample star[m - 1]; only
    # the penalty part is bootstrapped from the table. Same fixed point as
    # plugging in v_star[m - 1], without its (m - 1)-fold lag noise.
    pen_prev = table.penalty_matrix[:-1][:, :, None]  # (N_max, C, 1)
    extra = np.where(~need, pen_prev, np.where(strong, 0.0, np.minimum(pen_prev, delta)))
    miss[1:] = star[:-1, None] + (a + extra).mean(axis=2)  # average over which segment is missing
    return star, miss


def learn_observe(state, draw):
    """Fold one :class:`~cachesched.radio.RequestDraw` into the running averages."""
    return _observe(state, draw.user_gain, draw.cache_gain, draw.covered)


def _observe(state, user_gain, cache_gain, covered):
    table = state.table
    star, miss = sample_targets(table, np.asarray(user_gain, float), np.asarray(cache_gain, float),
                                np.asarray(covered, bool))
    t = state.t + 1
    new_star = table.v_star + (star - table.v_star) / (t + 1)
    new_miss = table.v_missing + (miss - table.v_missing) / (t + 1)
    delta = max(np.max(np.abs(new_star - table.v_star)),
                np.max(np.abs(new_miss - table.v_missing), initial=0.0))
    new_table = table.copy(v_star=new_star, v_missing=new_miss, unit_cost=float(new_star[1]) if
                           table.n_max >= 1 else table.unit_cost)
    new_table.meta["t"] = t
    return LearnerState(new_table, t, float(delta))


def learn_converged(state, tau):
    if state.t < 1:
        raise ValueError("convergence is undefined before the first observation")
    return state.last_delta <= tau


@dataclass
class LearningRun:
    state: LearnerState
    deltas: np.ndarray  # last_delta after each observation
    converged: bool


def run_learner(config, geometry, rng, max_draws, tau=None, init=None, batch=1000,
                init_samples=DEFAULT_INIT_SAMPLES, n_max=None):
    """Stream draws from the config's true user distribution until ``last_delta <= tau``.

    ``tau`` defaults to the config's learning threshold; with ``tau = 0`` the
    whole draw budget is consumed.
    """
    tau = config.learning_threshold if tau is None else tau
    state = init if init is not None else learn_init(config, geometry, rng, init_samples, n_max)
    deltas = []
    converged = False
    while state.t < max_draws and not converged:
        k = min(batch, max_draws - state.t)
        sample = sample_gains(config, geometry, k, rng)
        for j in range(k):
            state = _observe(state, sample.user_gain[j], sample.cache_gain[j], sample.covered[j])
            deltas.append(state.last_delta)
            if learn_converged(state, tau):
                converged = True
                break
    return LearningRun(state, np.array(deltas), converged)


def delta_decay_slope(deltas, t_min=100):
    """Least-squares slope of log(delta) against log(t) for t >= t_min."""
    t = np.arange(1, len(deltas) + 1)
    keep = (t >= t_min) & (deltas > 0)
    slope, _ = np.polyfit(np.log(t[keep]), np.log(deltas[keep]), 1)
    return float(slope)
