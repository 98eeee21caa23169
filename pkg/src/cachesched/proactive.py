"""BS-initiated segment placement at periodic transmission opportunities.

At each opportunity the BS may multicast one segment of one file to the
caches. A segment is worth pushing when the Poisson-mixed penalty its missing
caches carry is at least ``tau_prime`` times the cheapest placement cost
(transmission plus penalties of caches left behind).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .policy import SegmentAction

log = logging.getLogger(__name__)

DELTA_G_CAP = 1e6


@dataclass(frozen=True)
class ProactiveDecision:
    chosen: tuple | None  # (file, segment, SegmentAction)
    delta_g: dict = field(default_factory=dict)  # (file, segment) -> ratio
    opportunity: int = 0


def proactive_delta_gain(f, s, state, remaining, draw, lam, table, penalties=None):
    """Saving ratio and best placement action for segment ``s`` of file ``f``.

    Returns ``None`` when every cache already holds the segment.
    """
    missing = ~state.bits[:, s]
    if not missing.any():
        return None
    pen = table.penalties(lam, remaining) if penalties is None else penalties
    model = table.model
    g = draw.cache_gain
    cands = np.flatnonzero(missing)
    idx, q_star, power, symbols = kernels.choose_target(g[cands], g[cands], pen[cands],
                                                        model.theta_const, model.w_e, model.w_t,
                                                        model.bits)
    target = int(cands[idx])
    gain = float(g[target])
    filled = frozenset(int(c) for c in cands if g[c] >= gain)
    action = SegmentAction(s, target, gain, power, symbols, filled, model.w_e, model.w_t)
    numerator = float(pen[cands].sum())
    if numerator <= 0:
        return 0.0, action
    ratio = numerator / q_star if q_star > 0 else np.inf
    if ratio > DELTA_G_CAP:
        log.info("proactive ratio %.3g for file %d segment %d capped at %.0g", ratio, f, s, DELTA_G_CAP)
        ratio = DELTA_G_CAP
    return float(ratio), action


def proactive_select(states, remaining, draw, lams, table, tau_prime):
    """Pick at most one (file, segment) to push; argmax ratio if it reaches ``tau_prime``.

    ``states``, ``remaining`` and ``lams`` are per-file sequences; files with no
    lifetime left are skipped. Ties go to the lower file, then lower segment.
    """
    ratios = {}
    best = None
    best_ratio = -np.inf
    for f, (state, t_rem, lam) in enumerate(zip(states, remaining, lams)):
        if t_rem <= 0 or state.is_full:
            continue
        pen = table.penalties(lam, t_rem)
        for s in range(state.shape[1]):
            res = proactive_delta_gain(f, s, state, t_rem, draw, lam, table, pen)
            if res is None:
                continue
            ratio, action = res
            ratios[(f, s)] = ratio
            if ratio > best_ratio:
                best_ratio, best = ratio, (f, s, action)
    chosen = best if best is not None and best_ratio >= tau_prime else None
    return ProactiveDecision(chosen, ratios, draw.opportunity_index)


def apply_placement(state, action):
    return state.with_filled(sorted(action.filled_caches), action.segment)
