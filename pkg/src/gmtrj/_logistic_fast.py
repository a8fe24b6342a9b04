"""Compiled sweep for the logistic model space.

Mirrors ``gmtm_step`` with quadratic weights followed by ``rj_step`` or a
same-destination ``gmtrj_step``, drawing from the numpy Generator in the
same order as those kernels, so a given seed yields the same chain as the
generic route.  Parameters live in the first ``dims[m]`` slots of a length
``pool`` buffer.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

ALG_RJ, ALG_MTM_I, ALG_MTM_INV, ALG_QUAD = 0, 1, 2, 3
REJECTED, ACCEPTED, DEGENERATE = 0, 1, 2
NEG_INF = -np.inf


@njit(cache=True)
def _log_expit(x):
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@njit(cache=True)
def _expit(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def log_post(m, beta, X, cols, dims, y, n, prior_var, const):
    d = dims[m]
    ll = 0.0
    for i in range(X.shape[0]):
        eta = 0.0
        for c in range(d):
            eta += X[i, cols[m, c]] * beta[c]
        ll += y[i] * _log_expit(eta) + (n[i] - y[i]) * _log_expit(-eta)
    ss = 0.0
    for c in range(d):
        ss += beta[c] * beta[c]
    return ll - 0.5 * ss / prior_var - 0.5 * d * math.log(2 * math.pi * prior_var) + const


@njit(cache=True)
def expansion(m, beta, X, cols, dims, y, n, prior_var):
    d = dims[m]
    score = np.zeros(d)
    curv = np.zeros((d, d))
    for i in range(X.shape[0]):
        eta = 0.0
        for c in range(d):
            eta += X[i, cols[m, c]] * beta[c]
        p = _expit(eta)
        r = y[i] - n[i] * p
        w = n[i] * p * (1.0 - p)
        for a in range(d):
            xa = X[i, cols[m, a]]
            score[a] += xa * r
            for b in range(d):
                curv[a, b] -= w * xa * X[i, cols[m, b]]
    for a in range(d):
        score[a] -= beta[a] / prior_var
        curv[a, a] -= 1.0 / prior_var
    return score, curv


@njit(cache=True)
def _log_a(score, curv, anchor, cand, d):
    lin = 0.0
    quad = 0.0
    for a in range(d):
        da = cand[a] - anchor[a]
        lin += score[a] * da
        for b in range(d):
            quad += da * curv[a, b] * (cand[b] - anchor[b])
    return lin + 0.5 * quad


@njit(cache=True)
def _gauss(u, d, sigma):
    ss = 0.0
    for a in range(d):
        z = u[a] / sigma
        ss += z * z
    return -0.5 * ss - d * (math.log(sigma) + 0.5 * math.log(2 * math.pi))


@njit(cache=True)
def _embed(src, beta, dst, cols, dims, pool):
    full = np.zeros(pool)
    for c in range(dims[src]):
        full[cols[src, c]] = beta[c]
    out = np.zeros(pool)
    for c in range(dims[dst]):
        out[c] = full[cols[dst, c]]
    return out


@njit(cache=True)
def _logsumexp(a):
    top = a.max()
    if top == NEG_INF:
        return NEG_INF
    return top + math.log(np.sum(np.exp(a - top)))


@njit(cache=True)
def _categorical(gen, probs):
    cum = np.cumsum(probs)
    u = gen.random() * cum[-1]
    idx = 0
    while idx < len(cum) and cum[idx] <= u:
        idx += 1
    idx = min(idx, len(cum) - 1)
    while probs[idx] <= 0.0:
        idx -= 1
    return idx


@njit(cache=True)
def _select(gen, lw):
    w = np.exp(lw - lw.max())
    return _categorical(gen, w / w.sum())


@njit(cache=True)
def _accept(gen, log_alpha):
    if log_alpha >= 0.0:
        return True
    if log_alpha == NEG_INF:
        return False
    return math.log(gen.random()) < log_alpha


@njit(cache=True)
def _draw_dest(gen, m, nbrs, nnb):
    probs = np.full(nnb[m], 1.0 / nnb[m])
    return nbrs[m, _categorical(gen, probs)]


@njit(cache=True)
def within_step(gen, m, beta, lt, k, sigma, X, cols, dims, y, n, prior_var, const):
    d = dims[m]
    pool = beta.shape[0]
    cands = np.zeros((k, pool))
    lq = np.empty(k)
    lw = np.empty(k)
    for t in range(k):
        for a in range(d):
            cands[t, a] = beta[a] + sigma * gen.normal()
    score, curv = expansion(m, beta, X, cols, dims, y, n, prior_var)
    for t in range(k):
        lq[t] = _gauss(cands[t] - beta, d, sigma)
        lw[t] = _log_a(score, curv, beta, cands[t], d) - lq[t]
    if lw.max() == NEG_INF:
        return beta, lt, DEGENERATE
    j = _select(gen, lw)
    yv = cands[j].copy()
    lt_y = log_post(m, yv, X, cols, dims, y, n, prior_var, const)
    rev = np.zeros((k, pool))
    for t in range(k - 1):
        for a in range(d):
            rev[t, a] = yv[a] + sigma * gen.normal()
    rev[k - 1] = beta
    score, curv = expansion(m, yv, X, cols, dims, y, n, prior_var)
    lq_rev = np.empty(k)
    lw_rev = np.empty(k)
    for t in range(k):
        lq_rev[t] = _gauss(rev[t] - yv, d, sigma)
        lw_rev[t] = _log_a(score, curv, yv, rev[t], d) - lq_rev[t]
    log_alpha = _mt_alpha(lt, lt_y, lw, j, lw_rev, lq[j], lq_rev[k - 1])
    if _accept(gen, log_alpha):
        return yv, lt_y, ACCEPTED
    return beta, lt, REJECTED


@njit(cache=True)
def _mt_alpha(lt_x, lt_y, lw, j, lw_rev, lq_fwd, lq_back):
    log_p_y = lw[j] - _logsumexp(lw)
    if lw_rev[-1] == NEG_INF:
        log_p_x = NEG_INF
    else:
        log_p_x = lw_rev[-1] - _logsumexp(lw_rev)
    return (lt_y + lq_back + log_p_x) - (lt_x + lq_fwd + log_p_y)


@njit(cache=True)
def _weights(alg, am, anchor, m, rows, lq, logj, sigma, X, cols, dims, y, n, prior_var, const):
    k = rows.shape[0]
    pool = anchor.shape[0]
    out = np.empty(k)
    if alg == ALG_QUAD:
        point = _embed(am, anchor, m, cols, dims, pool)
        score, curv = expansion(m, point, X, cols, dims, y, n, prior_var)
        for t in range(k):
            out[t] = _log_a(score, curv, point, rows[t], dims[m]) - lq[t]
        return out
    for t in range(k):
        lt = log_post(m, rows[t], X, cols, dims, y, n, prior_var, const)
        if alg == ALG_MTM_INV:
            out[t] = lt - lq[t]
        else:
            back = anchor - _embed(m, rows[t], am, cols, dims, pool)
            out[t] = lt + logj[m, am] + _gauss(back, dims[am], sigma)
    return out


@njit(cache=True)
def jump_step(gen, alg, m, beta, lt, k, sigma, nbrs, nnb, logj, X, cols, dims, y, n, prior_var, const):
    pool = beta.shape[0]
    dest = _draw_dest(gen, m, nbrs, nnb)
    d2 = dims[dest]
    base = _embed(m, beta, dest, cols, dims, pool)
    if alg == ALG_RJ:
        u = np.zeros(pool)
        for a in range(d2):
            u[a] = sigma * gen.normal()
        yv = base + u
        u_back = beta - _embed(dest, yv, m, cols, dims, pool)
        lt_y = log_post(dest, yv, X, cols, dims, y, n, prior_var, const)
        log_alpha = (lt_y + logj[dest, m] + _gauss(u_back, dims[m], sigma)
                     - lt - logj[m, dest] - _gauss(u, d2, sigma))
        if _accept(gen, log_alpha):
            return dest, yv, lt_y, ACCEPTED
        return m, beta, lt, REJECTED

    cands = np.zeros((k, pool))
    lq = np.empty(k)
    for t in range(k):
        u = np.zeros(pool)
        for a in range(d2):
            u[a] = sigma * gen.normal()
        cands[t] = base + u
        lq[t] = logj[m, dest] + _gauss(u, d2, sigma)
    lw = _weights(alg, m, beta, dest, cands, lq, logj, sigma, X, cols, dims, y, n, prior_var, const)
    if lw.max() == NEG_INF:
        return m, beta, lt, DEGENERATE
    j = _select(gen, lw)
    yv = cands[j].copy()
    lt_y = log_post(dest, yv, X, cols, dims, y, n, prior_var, const)
    back_base = _embed(dest, yv, m, cols, dims, pool)
    rev = np.zeros((k, pool))
    lq_rev = np.empty(k)
    d = dims[m]
    for t in range(k - 1):
        u = np.zeros(pool)
        for a in range(d):
            u[a] = sigma * gen.normal()
        rev[t] = back_base + u
        lq_rev[t] = logj[dest, m] + _gauss(u, d, sigma)
    rev[k - 1] = beta
    lq_rev[k - 1] = logj[dest, m] + _gauss(beta - back_base, d, sigma)
    lw_rev = _weights(alg, dest, yv, m, rev, lq_rev, logj, sigma, X, cols, dims, y, n, prior_var, const)
    log_alpha = _mt_alpha(lt, lt_y, lw, j, lw_rev, lq[j], lq_rev[k - 1])
    if _accept(gen, log_alpha):
        return dest, yv, lt_y, ACCEPTED
    return m, beta, lt, REJECTED


@njit(cache=True)
def run_sweeps(gen, alg, sigma, k, kw, m0, beta0, nbrs, nnb, logj, X, cols, dims, y, n, prior_var, const,
               models, outcomes, within):
    m = m0
    beta = beta0.copy()
    lt = log_post(m, beta, X, cols, dims, y, n, prior_var, const)
    for t in range(models.shape[0]):
        beta, lt, res = within_step(gen, m, beta, lt, kw, sigma, X, cols, dims, y, n, prior_var, const)
        within[t] = res
        m, beta, lt, res = jump_step(gen, alg, m, beta, lt, k, sigma, nbrs, nnb, logj, X, cols, dims,
                                     y, n, prior_var, const)
        outcomes[t] = res
        models[t] = m
    return m, beta
