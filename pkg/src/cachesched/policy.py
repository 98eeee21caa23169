"""Per-request multicast scheduling decisions.

Every decision is per segment: pick a target receiver, transmit at the
minimum-cost (P, N) for that receiver's gain, and every missing cache whose
gain is at least the target's decodes the segment too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .valuefn import ReducedState, check_tiny

USER = "user"


@dataclass(frozen=True)
class SegmentAction:
    segment: int
    target: object  # USER or a cache index
    target_gain: float
    power: float
    symbols: float
    filled_caches: frozenset
    w_e: float = 1.0
    w_t: float = 1.0

    @property
    def energy_term(self):
        return self.w_e * self.power * self.symbols

    @property
    def time_term(self):
        return self.w_t * self.symbols

    @property
    def cost(self):
        return (self.w_e * self.power + self.w_t) * self.symbols


@dataclass(frozen=True)
class ScheduleOutcome:
    actions: tuple
    immediate_cost: float
    next_state: ReducedState

    @property
    def energy_term(self):
        return sum(a.energy_term for a in self.actions)

    @property
    def time_term(self):
        return sum(a.time_term for a in self.actions)


def needed_segments(state, draw):
    """Segments the user cannot fetch from a covering cache."""
    served = np.any(state.bits & draw.covered[:, None], axis=0)
    return [int(s) for s in np.flatnonzero(~served)]


def _fills(state, cache_gain_s, segment, target_gain):
    missing = ~state.bits[:, segment]
    return frozenset(int(c) for c in np.flatnonzero(missing & (cache_gain_s >= target_gain)))


def make_action(state, draw, segment, target, model):
    """Action for ``segment`` aimed at ``target`` (USER or a cache index)."""
    cache_gain_s = draw.cache_gain[:, segment]
    gain = float(draw.user_gain[segment] if target == USER else cache_gain_s[target])
    sol = model.solve(gain)
    return SegmentAction(segment, target, gain, sol.power, sol.symbols,
                         _fills(state, cache_gain_s, segment, gain), model.w_e, model.w_t)


def next_state(state, actions, draw):
    bits = state.bits.copy()
    cache_gain = draw.cache_gain
    for act in actions:
        bits[:, act.segment] |= cache_gain[:, act.segment] >= act.target_gain
    return ReducedState(bits)


def _outcome(state, actions, draw):
    actions = tuple(actions)
    return ScheduleOutcome(actions, float(sum(a.cost for a in actions)), next_state(state, actions, draw))


def amdp_candidates(state, draw, segment):
    """Cache indices eligible as targets: missing the segment and no stronger than the user."""
    g = draw.cache_gain[:, segment]
    return [int(c) for c in np.flatnonzero(~state.bits[:, segment] & (g <= draw.user_gain[segment]))]


def amdp_schedule(state, draw, lam, remaining, table, penalties=None):
    """Greedy per-segment target choice scored with Poisson-mixed table penalties.

    Candidate ``d`` costs its own transmission plus the penalty of every
    missing cache strictly weaker than ``d`` (those stay empty).
    """
    model = table.model
    pen = table.penalties(lam, remaining) if penalties is None else penalties
    actions = []
    for s in needed_segments(state, draw):
        cands = amdp_candidates(state, draw, s)
        g = draw.cache_gain[:, s]
        missing = ~state.bits[:, s]
        cand_gain = np.concatenate([[draw.user_gain[s]], g[cands]])
        idx, _, _, _ = kernels.choose_target(cand_gain, g[missing], pen[missing], model.theta_const,
                                             model.w_e, model.w_t, model.bits)
        target = USER if idx == 0 else cands[idx - 1]
        actions.append(make_action(state, draw, s, target, model))
    return _outcome(state, actions, draw)


def score_candidates(state, draw, segment, penalties, model):
    """Q for the user (first) and every eligible cache, recomputed in plain numpy."""
    cands = amdp_candidates(state, draw, segment)
    g = draw.cache_gain[:, segment]
    missing = ~state.bits[:, segment]
    gains = np.concatenate([[draw.user_gain[segment]], g[cands]])
    q = model.cost(gains)
    for k, gk in enumerate(gains):
        q[k] += penalties[missing & (g < gk)].sum()
    return [USER] + cands, q


def baseline_schedule(kind, state, draw, first_request, model):
    """``b1``: always target the user. ``b2``: first request fills every cache."""
    if kind not in ("b1", "b2"):
        raise ValueError(f"unknown baseline {kind!r}")
    need = set(needed_segments(state, draw))
    actions = []
    if kind == "b2" and first_request:
        for s in range(state.shape[1]):
            g = draw.cache_gain[:, s]
            receivers = [(float(g[c]), 1, int(c)) for c in np.flatnonzero(~state.bits[:, s])]
            if s in need:
                receivers.append((float(draw.user_gain[s]), 0, USER))
            if not receivers:
                continue
            target = min(receivers)[2]
            actions.append(make_action(state, draw, s, target, model))
    else:
        actions = [make_action(state, draw, s, USER, model) for s in sorted(need)]
    return _outcome(state, actions, draw)


def optimal_schedule_tiny(state, draw, lam, remaining, exact):
    """Joint argmin over per-segment targets with the exact Poisson-mixed continuation."""
    check_tiny(exact.n_caches, exact.n_segments, exact.n_max)
    model = exact.model
    v_cont = exact.mixture(lam, remaining)
    ucost = model.cost(draw.user_gain)
    ccost = model.cost(draw.cache_gain)
    _, options, _ = kernels.best_joint_action(ucost, ccost, draw.user_gain, draw.cache_gain,
                                              draw.covered, state.index, v_cont)
    need = set(needed_segments(state, draw))
    actions = []
    for s, opt in enumerate(options):
        if s not in need:
            continue
        target = USER if opt == 0 else int(opt) - 1
        actions.append(make_action(state, draw, s, target, model))
    return _outcome(state, actions, draw)
