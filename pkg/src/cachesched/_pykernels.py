"""Pure numpy implementations of the hot kernels.

Same signatures and results as the compiled ``_ckernels`` module; used when
the extension is not built or ``CACHESCHED_KERNELS=python`` is set.
"""

import itertools
import math

import numpy as np

_LN2 = math.log(2.0)
_MAX_ITER = 40


def lambert_w0_log(lnx):
    """Principal-branch W(exp(lnx)), elementwise, without overflowing exp."""
    lnx = np.asarray(lnx, dtype=float)
    flat = lnx.ravel()
    out = np.zeros_like(flat)

    big = flat > 1.0
    if big.any():
        # solve w + ln w = lnx
        L = flat[big]
        w = L - np.log(L)
        for _ in range(_MAX_ITER):
            f = w + np.log(w) - L
            fp = 1.0 + 1.0 / w
            fpp = -1.0 / (w * w)
            dw = 2.0 * f * fp / (2.0 * fp * fp - f * fpp)
            w = w - dw
            if np.all(np.abs(dw) <= 4e-16 * w):
                break
        out[big] = w

    small = ~big
    if small.any():
        with np.errstate(under="ignore"):
            x = np.exp(flat[small])
        lp = np.log1p(x)
        # Winitzki-style start, exact at 0
        w = lp * (1.0 - np.log1p(lp) / (2.0 + lp))
        for _ in range(_MAX_ITER):
            ew = np.exp(w)
            f = w * ew - x
            denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0)
            dw = f / denom
            w = w - dw
            if np.all(np.abs(dw) <= 4e-16 * np.maximum(np.abs(w), 1e-300)):
                break
        out[small] = w
    return out.reshape(lnx.shape)


def segment_cost(theta, w_e, w_t, bits):
    """Closed-form (P*, N*, cost) for exponents ``theta`` (array)."""
    theta = np.asarray(theta, dtype=float)
    lnx = theta * _LN2 + math.log(w_t / w_e) - 1.0
    w = lambert_w0_log(lnx)
    power = w_t / (w_e * w)
    symbols = bits / (theta + np.log2(power))
    cost = (w_e * power + w_t) * symbols
    return power, symbols, cost


def choose_target(cand_gain, miss_gain, miss_pen, theta_const, w_e, w_t, bits):
    """Pick the multicast target minimising transmit cost plus residual penalty.

    Residual for target gain g is the sum of ``miss_pen`` over missing caches
    with gain strictly below g (they fail to decode). Ties go to the larger gain.
    Returns (index, q, power, symbols).
    """
    cand_gain = np.asarray(cand_gain, dtype=float)
    theta = np.log2(cand_gain) + theta_const
    power, symbols, cost = segment_cost(theta, w_e, w_t, bits)
    miss_gain = np.asarray(miss_gain, dtype=float)
    if miss_gain.size:
        order = np.argsort(miss_gain, kind="stable")
        cum = np.concatenate([[0.0], np.cumsum(np.asarray(miss_pen, dtype=float)[order])])
        resid = cum[np.searchsorted(miss_gain[order], cand_gain, side="left")]
        q = cost + resid
    else:
        q = cost
    qmin = q.min()
    ties = np.flatnonzero(q == qmin)
    best = int(ties[np.argmax(cand_gain[ties])])
    return best, float(q[best]), float(power[best]), float(symbols[best])


def _segment_options(b, s, ucost, ccost, ugain, cgain, covered, n_seg):
    """Per-sample option costs and fill masks for segment ``s`` in state ``b``.

    Option 0 targets the user (or transmits nothing when the user is served by
    a cache); option j+1 targets cache j. Returns (cost (K, C+1), fill (K, C+1)).
    """
    K, C = covered.shape
    has = np.array([(b >> (c * n_seg + s)) & 1 for c in range(C)], dtype=bool)
    need = ~np.any(covered & has, axis=1)
    missing = np.flatnonzero(~has)
    bitval = np.array([1 << (c * n_seg + s) for c in missing], dtype=np.int64)

    cost = np.full((K, C + 1), np.inf)
    fill = np.zeros((K, C + 1), dtype=np.int64)
    u = ugain[:, s]
    cg = cgain[:, missing, s]  # (K, |missing|)
    cost[:, 0] = np.where(need, ucost[:, s], 0.0)
    if missing.size:
        fill[:, 0] = np.where(need, (cg >= u[:, None]) @ bitval, 0)
    for jj, j in enumerate(missing):
        g = cgain[:, j, s]
        valid = need & (g <= u)
        cost[:, j + 1] = np.where(valid, ccost[:, j, s], np.inf)
        fill[:, j + 1] = np.where(valid, (cg >= g[:, None]) @ bitval, 0)
    return cost, fill


def bellman_values(ucost, ccost, ugain, cgain, covered, v_cont):
    """Sample-mean over draws of min over joint actions of cost + v_cont[next].

    ucost/ugain: (K, S); ccost/cgain: (K, C, S); covered: (K, C) bool;
    v_cont: (2**(C*S),) continuation values indexed by state bitmask
    (bit c*S + s set when cache c holds segment s). Returns (2**(C*S),).
    """
    K, n_seg = ucost.shape
    C = covered.shape[1]
    covered = covered.astype(bool)
    n_states = 1 << (C * n_seg)
    out = np.empty(n_states)
    combos = list(itertools.product(range(C + 1), repeat=n_seg))
    for b in range(n_states):
        opts = [_segment_options(b, s, ucost, ccost, ugain, cgain, covered, n_seg) for s in range(n_seg)]
        best = np.full(K, np.inf)
        for combo in combos:
            total = np.zeros(K)
            nxt = np.full(K, b, dtype=np.int64)
            for s, o in enumerate(combo):
                total = total + opts[s][0][:, o]
                nxt |= opts[s][1][:, o]
            if not np.isfinite(total).any():
                continue
            np.minimum(best, total + v_cont[nxt], out=best)
        out[b] = best.mean()
    return out


def best_joint_action(ucost, ccost, ugain, cgain, covered, state, v_cont):
    """Single-draw joint argmin. Returns (value, options (S,), next_state)."""
    ucost = np.asarray(ucost, dtype=float)[None, :]
    ugain = np.asarray(ugain, dtype=float)[None, :]
    ccost = np.asarray(ccost, dtype=float)[None, :, :]
    cgain = np.asarray(cgain, dtype=float)[None, :, :]
    covered = np.asarray(covered, dtype=bool)[None, :]
    n_seg = ucost.shape[1]
    C = covered.shape[1]
    opts = [_segment_options(state, s, ucost, ccost, ugain, cgain, covered, n_seg) for s in range(n_seg)]
    best_val = math.inf
    best_combo = None
    best_next = state
    for combo in itertools.product(range(C + 1), repeat=n_seg):
        total = 0.0
        nxt = state
        for s, o in enumerate(combo):
            total += opts[s][0][0, o]
            nxt |= int(opts[s][1][0, o])
        if not math.isfinite(total):
            continue
        val = total + v_cont[nxt]
        if val < best_val:
            best_val, best_combo, best_next = val, combo, nxt
    return best_val, np.array(best_combo, dtype=np.int64), best_next
