# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; mirrors cachesched._pykernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, log1p, log2, exp, fabs, INFINITY

cnp.import_array()

cdef double _LN2 = 0.6931471805599453
cdef int _MAX_ITER = 40


cdef inline double _w_of_log(double lnx) nogil:
    cdef double L, w, f, fp, fpp, dw, x, lp, ew, denom
    cdef int it
    if lnx > 1.0:
        L = lnx
        w = L - log(L)
        for it in range(_MAX_ITER):
            f = w + log(w) - L
            fp = 1.0 + 1.0 / w
            fpp = -1.0 / (w * w)
            dw = 2.0 * f * fp / (2.0 * fp * fp - f * fpp)
            w -= dw
            if fabs(dw) <= 4e-16 * w:
                break
        return w
    x = exp(lnx)
    if x == 0.0:
        return 0.0
    lp = log1p(x)
    w = lp * (1.0 - log1p(lp) / (2.0 + lp))
    for it in range(_MAX_ITER):
        ew = exp(w)
        f = w * ew - x
        denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0)
        dw = f / denom
        w -= dw
        if fabs(dw) <= 4e-16 * fabs(w):
            break
    return w


def lambert_w0_log(lnx):
    cdef cnp.ndarray[double, ndim=1] flat = np.ascontiguousarray(lnx, dtype=np.float64).ravel()
    cdef Py_ssize_t n = flat.shape[0], i
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n)
    for i in range(n):
        out[i] = _w_of_log(flat[i])
    return out.reshape(np.shape(lnx))


cdef inline void _cost(double theta, double lnratio, double w_e, double w_t, double bits,
                       double* power, double* symbols, double* cost) nogil:
    cdef double w = _w_of_log(theta * _LN2 + lnratio - 1.0)
    power[0] = w_t / (w_e * w)
    symbols[0] = bits / (theta + log2(power[0]))
    cost[0] = (w_e * power[0] + w_t) * symbols[0]


def segment_cost(theta, double w_e, double w_t, double bits):
    cdef cnp.ndarray[double, ndim=1] th = np.ascontiguousarray(theta, dtype=np.float64).ravel()
    cdef Py_ssize_t n = th.shape[0], i
    cdef cnp.ndarray[double, ndim=1] p = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] nn = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] c = np.empty(n)
    cdef double lnratio = log(w_t / w_e)
    for i in range(n):
        _cost(th[i], lnratio, w_e, w_t, bits, &p[i], &nn[i], &c[i])
    shape = np.shape(theta)
    return p.reshape(shape), nn.reshape(shape), c.reshape(shape)


def choose_target(cand_gain, miss_gain, miss_pen, double theta_const, double w_e, double w_t, double bits):
    cdef cnp.ndarray[double, ndim=1] cg = np.ascontiguousarray(cand_gain, dtype=np.float64).ravel()
    cdef cnp.ndarray[double, ndim=1] mg = np.ascontiguousarray(miss_gain, dtype=np.float64).ravel()
    cdef cnp.ndarray[double, ndim=1] mp = np.ascontiguousarray(miss_pen, dtype=np.float64).ravel()
    cdef Py_ssize_t n = cg.shape[0], m = mg.shape[0], i, j
    cdef double lnratio = log(w_t / w_e)
    cdef double p, nn, c, q, resid
    cdef double best_q = INFINITY, best_p = 0.0, best_n = 0.0, best_g = -1.0
    cdef Py_ssize_t best = -1
    for i in range(n):
        _cost(log2(cg[i]) + theta_const, lnratio, w_e, w_t, bits, &p, &nn, &c)
        resid = 0.0
        for j in range(m):
            if mg[j] < cg[i]:
                resid += mp[j]
        q = c + resid
        if q < best_q or (q == best_q and cg[i] > best_g):
            best_q = q
            best = i
            best_p = p
            best_n = nn
            best_g = cg[i]
    return int(best), best_q, best_p, best_n


cdef double _joint_min(Py_ssize_t k, long b, int n_seg, int C,
                       double[:, :] ucost, double[:, :, :] ccost,
                       double[:, :] ugain, double[:, :, :] cgain,
                       unsigned char[:, :] covered, double[:] v_cont,
                       long* combo_out, long* next_out) nogil:
    # option costs/fills per (segment, option), option 0 = user/none, j+1 = cache j
    cdef double opt_cost[8][9]
    cdef long opt_fill[8][9]
    cdef int s, c, j, o, need
    cdef long bit
    cdef double u, g
    cdef long counter[8]
    cdef double total, val, best = INFINITY
    cdef long nxt
    for s in range(n_seg):
        need = 1
        for c in range(C):
            if covered[k, c] and ((b >> (c * n_seg + s)) & 1):
                need = 0
                break
        u = ugain[k, s]
        for o in range(C + 1):
            opt_cost[s][o] = INFINITY
            opt_fill[s][o] = 0
        if not need:
            opt_cost[s][0] = 0.0
            continue
        opt_cost[s][0] = ucost[k, s]
        for c in range(C):
            bit = 1L << (c * n_seg + s)
            if not (b & bit) and cgain[k, c, s] >= u:
                opt_fill[s][0] |= bit
        for j in range(C):
            if (b >> (j * n_seg + s)) & 1:
                continue
            g = cgain[k, j, s]
            if g > u:
                continue
            opt_cost[s][j + 1] = ccost[k, j, s]
            for c in range(C):
                bit = 1L << (c * n_seg + s)
                if not (b & bit) and cgain[k, c, s] >= g:
                    opt_fill[s][j + 1] |= bit
    for s in range(n_seg):
        counter[s] = 0
    while True:
        total = 0.0
        nxt = b
        for s in range(n_seg):
            total += opt_cost[s][counter[s]]
            nxt |= opt_fill[s][counter[s]]
        if total < INFINITY:
            val = total + v_cont[nxt]
            if val < best:
                best = val
                next_out[0] = nxt
                for s in range(n_seg):
                    combo_out[s] = counter[s]
        # mixed-radix increment, first segment fastest
        s = 0
        while s < n_seg:
            counter[s] += 1
            if counter[s] <= C:
                break
            counter[s] = 0
            s += 1
        if s == n_seg:
            break
    return best


def _check_dims(int n_seg, int C):
    if n_seg > 8 or C > 8 or n_seg * C > 30:
        raise ValueError("instance too large for the compiled exact kernel")


def bellman_values(ucost, ccost, ugain, cgain, covered, v_cont):
    cdef double[:, :] uc = np.ascontiguousarray(ucost, dtype=np.float64)
    cdef double[:, :, :] cc = np.ascontiguousarray(ccost, dtype=np.float64)
    cdef double[:, :] ug = np.ascontiguousarray(ugain, dtype=np.float64)
    cdef double[:, :, :] cgn = np.ascontiguousarray(cgain, dtype=np.float64)
    cdef unsigned char[:, :] cov = np.ascontiguousarray(covered, dtype=np.uint8)
    cdef double[:] vc = np.ascontiguousarray(v_cont, dtype=np.float64)
    cdef Py_ssize_t K = uc.shape[0], k
    cdef int n_seg = uc.shape[1], C = cov.shape[1]
    _check_dims(n_seg, C)
    cdef long n_states = 1L << (C * n_seg), b
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(n_states)
    cdef double acc
    cdef long combo[8]
    cdef long nxt
    with nogil:
        for b in range(n_states):
            acc = 0.0
            for k in range(K):
                acc += _joint_min(k, b, n_seg, C, uc, cc, ug, cgn, cov, vc, combo, &nxt)
            out[b] = acc / K
    return out


def best_joint_action(ucost, ccost, ugain, cgain, covered, long state, v_cont):
    cdef double[:, :] uc = np.ascontiguousarray(np.asarray(ucost, dtype=np.float64)[None, :])
    cdef double[:, :, :] cc = np.ascontiguousarray(np.asarray(ccost, dtype=np.float64)[None, :, :])
    cdef double[:, :] ug = np.ascontiguousarray(np.asarray(ugain, dtype=np.float64)[None, :])
    cdef double[:, :, :] cgn = np.ascontiguousarray(np.asarray(cgain, dtype=np.float64)[None, :, :])
    cdef unsigned char[:, :] cov = np.ascontiguousarray(np.asarray(covered, dtype=np.uint8)[None, :])
    cdef double[:] vc = np.ascontiguousarray(v_cont, dtype=np.float64)
    cdef int n_seg = uc.shape[1], C = cov.shape[1], s
    _check_dims(n_seg, C)
    cdef long combo[8]
    cdef long nxt = state
    cdef double val = _joint_min(0, state, n_seg, C, uc, cc, ug, cgn, cov, vc, combo, &nxt)
    return val, np.array([combo[s] for s in range(n_seg)], dtype=np.int64), int(nxt)
