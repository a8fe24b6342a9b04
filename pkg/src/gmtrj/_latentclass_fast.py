"""Compiled latent class sweep.

A transcription of the Python route in :mod:`gmtrj.latentclass` (Gibbs
sweep, RJ split/combine and birth/death, and the multiple-try variants run
through the generic engine) that draws from the numpy Generator in the same
order, so a seed gives the same chain either way.  States are passed as
``(pi, lam, z)`` arrays.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf
REJECTED, ACCEPTED, DEGENERATE = 0, 1, 2
MOVE_SPLIT, MOVE_COMBINE, MOVE_BIRTH, MOVE_DEATH = 0, 1, 2, 3
W_RJ, W_INV, W_MAN = 0, 1, 2
LAM_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# densities


@njit(cache=True)
def _betaln(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


@njit(cache=True)
def _xlogy(x, y):
    if x == 0:
        return 0.0
    return x * np.log(y)


@njit(cache=True)
def _xlog1py(x, y):
    if x == 0:
        return 0.0
    return x * np.log1p(y)


@njit(cache=True)
def _beta_logpdf(x, a, b):
    out = (a - 1) * np.log(x) + (b - 1) * np.log1p(-x) - _betaln(a, b)
    if np.isnan(out):
        return NEG_INF
    return out


@njit(cache=True)
def _lpgc(lam_c, y):
    s = 0.0
    for j in range(y.shape[0]):
        s += _xlogy(y[j], lam_c[j]) + _xlog1py(1 - y[j], -lam_c[j])
    return s


@njit(cache=True)
def _sufficient(z, C, sp, pat):
    P, J = pat.shape
    sizes = np.zeros(C)
    succ = np.zeros((C, J))
    for i in range(z.shape[0]):
        c = z[i]
        sizes[c] += 1
        for j in range(J):
            succ[c, j] += pat[sp[i], j]
    return sizes, succ


@njit(cache=True)
def complete_loglik(pi, lam, z, sp, pat):
    C, J = lam.shape
    sizes, succ = _sufficient(z, C, sp, pat)
    t1 = 0.0
    t2 = 0.0
    t3 = 0.0
    for c in range(C):
        t1 += _xlogy(sizes[c], pi[c])
        for j in range(J):
            t2 += _xlogy(succ[c, j], lam[c, j])
            t3 += _xlogy(sizes[c] - succ[c, j], 1.0 - lam[c, j])
    total = t1 + t2 + t3
    if np.isnan(total):
        return NEG_INF
    return total


@njit(cache=True)
def log_prior(pi, lam, delta, a, b, cmax):
    C, J = lam.shape
    if C > cmax:
        return NEG_INF
    for c in range(C):
        for j in range(J):
            if lam[c, j] <= 0 or lam[c, j] >= 1:
                return NEG_INF
    lp = -math.log(cmax) + math.lgamma(C * delta) - C * math.lgamma(delta)
    sp = 0.0
    for c in range(C):
        sp += _xlogy(delta - 1, pi[c])
    sl = 0.0
    for c in range(C):
        for j in range(J):
            sl += _xlogy(a - 1, lam[c, j]) + _xlog1py(b - 1, -lam[c, j])
    return lp + sp + sl - C * J * _betaln(a, b)


@njit(cache=True)
def log_labeled(pi, lam, z, sp, pat, delta, a, b, cmax):
    lp = log_prior(pi, lam, delta, a, b, cmax)
    if lp == NEG_INF:
        return NEG_INF
    ll = complete_loglik(pi, lam, z, sp, pat)
    if ll == NEG_INF:
        return NEG_INF
    return ll + lp


@njit(cache=True)
def log_target(pi, lam, z, sp, pat, delta, a, b, cmax):
    lt = log_labeled(pi, lam, z, sp, pat, delta, a, b, cmax)
    if lt == NEG_INF:
        return NEG_INF
    return lt + math.lgamma(pi.shape[0] + 1)


@njit(cache=True)
def incomplete_loglik(pi, lam, pat, freq):
    total = 0.0
    for p in range(pat.shape[0]):
        m = 0.0
        for c in range(pi.shape[0]):
            m += math.exp(_lpgc(lam[c], pat[p])) * pi[c]
        total += freq[p] * np.log(m)
    return total


# ---------------------------------------------------------------------------
# randomness helpers (same consumption as RngStream)


@njit(cache=True)
def _uniform_index(gen, n):
    return min(int(gen.random() * n), n - 1)


@njit(cache=True)
def _accept(gen, log_alpha):
    if log_alpha >= 0.0:
        return True
    if log_alpha == NEG_INF:
        return False
    return math.log(gen.random()) < log_alpha


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
def _logsumexp(a):
    top = a.max()
    if top == NEG_INF:
        return NEG_INF
    return top + math.log(np.sum(np.exp(a - top)))


@njit(cache=True)
def _pair_from_index(idx, C):
    a = 0
    while idx >= C - 1 - a:
        idx -= C - 1 - a
        a += 1
    return a, a + 1 + idx


@njit(cache=True)
def _move_prob(C, cmax, up):
    if C <= 1:
        return 1.0 if up else 0.0
    if C >= cmax:
        return 0.0 if up else 1.0
    return 0.5


@njit(cache=True)
def _log(x):
    if x > 0:
        return math.log(x)
    return NEG_INF


@njit(cache=True)
def _clamp(lam_c, clamped):
    out = np.empty_like(lam_c)
    hit = False
    for j in range(lam_c.shape[0]):
        v = min(max(lam_c[j], LAM_FLOOR), 1.0 - LAM_FLOOR)
        if v != lam_c[j]:
            hit = True
        out[j] = v
    if hit:
        clamped[0] += 1
    return out


@njit(cache=True)
def _item_logpdf(lam_new, centre, tau, clamped):
    c = _clamp(centre, clamped)
    s = 0.0
    for j in range(c.shape[0]):
        s += _beta_logpdf(lam_new[j], tau * c[j], tau * (1 - c[j]))
    return s


@njit(cache=True)
def _draw_items(gen, centre, tau, clamped):
    c = _clamp(centre, clamped)
    out = np.empty(c.shape[0])
    for j in range(c.shape[0]):
        out[j] = gen.beta(tau * c[j], tau * (1 - c[j]))
    return out


# ---------------------------------------------------------------------------
# Gibbs


@njit(cache=True)
def gibbs(gen, pi, lam, z, sp, pat, delta, a, b):
    C, J = lam.shape
    P = pat.shape[0]
    probs = np.empty((P, C))
    for p in range(P):
        top = NEG_INF
        for c in range(C):
            v = np.log(pi[c]) + _lpgc(lam[c], pat[p])
            probs[p, c] = v
            top = max(top, v)
        tot = 0.0
        for c in range(C):
            probs[p, c] = math.exp(probs[p, c] - top)
            tot += probs[p, c]
        for c in range(C):
            probs[p, c] = probs[p, c] / tot
    n = z.shape[0]
    znew = np.empty(n, dtype=np.int64)
    for i in range(n):
        row = probs[sp[i]]
        cum = np.cumsum(row)
        u = gen.random() * cum[-1]
        idx = 0
        for c in range(C):
            if u >= cum[c]:
                idx += 1
        znew[i] = min(idx, C - 1)
    sizes, succ = _sufficient(znew, C, sp, pat)
    g = np.empty(C)
    acc = 0.0
    for c in range(C):
        g[c] = gen.standard_gamma(delta + sizes[c])
        acc += g[c]
    inv = 1.0 / acc
    pinew = g * inv
    lamnew = np.empty((C, J))
    for c in range(C):
        for j in range(J):
            lamnew[c, j] = gen.beta(a + succ[c, j], b + (sizes[c] - succ[c, j]))
    return pinew, lamnew, znew


# ---------------------------------------------------------------------------
# split / combine pieces


@njit(cache=True)
def _split_parameters(gen, pi, lam, c_star, alpha, beta, tau, clamped):
    u = gen.beta(alpha, beta)
    lam1 = _draw_items(gen, lam[c_star], tau, clamped)
    lam2 = _draw_items(gen, lam[c_star], tau, clamped)
    C, J = lam.shape
    p = pi[c_star]
    pin = np.empty(C + 1)
    pin[:C] = pi
    pin[C] = p * (1 - u)
    pin[c_star] = p * u
    lamn = np.empty((C + 1, J))
    lamn[:C] = lam
    lamn[C] = lam2
    lamn[c_star] = lam1
    return pin, lamn


@njit(cache=True)
def _alloc_p1(pi, lam, y, c1, c2):
    l1 = np.log(pi[c1]) + _lpgc(lam[c1], y)
    l2 = np.log(pi[c2]) + _lpgc(lam[c2], y)
    d = l1 - l2
    if np.isnan(d):
        return 0.5
    # expit
    if d >= 0:
        return 1.0 / (1.0 + math.exp(-d))
    e = math.exp(d)
    return e / (1.0 + e)


@njit(cache=True)
def _split_allocate(gen, zparent, pi, lam, c_star, sp, pat):
    c2 = pi.shape[0] - 1
    z = zparent.copy()
    la = 0.0
    for i in range(z.shape[0]):
        if zparent[i] != c_star:
            continue
        p1 = _alloc_p1(pi, lam, pat[sp[i]], c_star, c2)
        if gen.random() < p1:
            la += np.log(p1)
        else:
            z[i] = c2
            la += np.log(1.0 - p1)
    return z, la


@njit(cache=True)
def _split_alloc_logprob(zparent, c_star, pic, lamc, zc, i1, i2, sp, pat):
    la = 0.0
    for i in range(zparent.shape[0]):
        if zparent[i] != c_star:
            continue
        p1 = _alloc_p1(pic, lamc, pat[sp[i]], i1, i2)
        if zc[i] == i1:
            la += np.log(p1)
        else:
            la += np.log(1.0 - p1)
    return la


@njit(cache=True)
def _split_param_logq(ppi, plam, c_star, cpi, clam, i1, i2, alpha, beta, tau, clamped):
    u = cpi[i1] / ppi[c_star]
    return (_beta_logpdf(u, alpha, beta)
            + _item_logpdf(clam[i1], plam[c_star], tau, clamped)
            + _item_logpdf(clam[i2], plam[c_star], tau, clamped))


@njit(cache=True)
def _combine_states(pi, lam, z, a, b, lam_star):
    C, J = lam.shape
    pin = np.empty(C - 1)
    lamn = np.empty((C - 1, J))
    r = 0
    for c in range(C):
        if c == b:
            continue
        pin[r] = pi[c]
        lamn[r] = lam[c]
        r += 1
    pin[a] = pi[a] + pi[b]
    lamn[a] = lam_star
    zn = z.copy()
    for i in range(zn.shape[0]):
        if zn[i] == b:
            zn[i] = a
        elif zn[i] > b:
            zn[i] -= 1
    return pin, lamn, zn


@njit(cache=True)
def _combine_proposal(gen, pi, lam, z, a, b, tau, clamped):
    lam_m = 0.5 * (lam[a] + lam[b])
    lam_star = _draw_items(gen, lam_m, tau, clamped)
    pin, lamn, zn = _combine_states(pi, lam, z, a, b, lam_star)
    return pin, lamn, zn, _item_logpdf(lam_star, lam_m, tau, clamped), -math.log(pin[a])


@njit(cache=True)
def _split_log_acceptance(ppi, plam, pz, c_star, cpi, clam, cz, i1, i2, log_alloc, sp, pat,
                          delta, a, b, cmax, alpha, beta, tau, clamped):
    C = ppi.shape[0]
    lam_m = 0.5 * (clam[i1] + clam[i2])
    return (log_labeled(cpi, clam, cz, sp, pat, delta, a, b, cmax)
            - log_labeled(ppi, plam, pz, sp, pat, delta, a, b, cmax)
            + _log(_move_prob(C + 1, cmax, False)) - _log(_move_prob(C, cmax, True)) - log_alloc
            + _item_logpdf(plam[c_star], lam_m, tau, clamped)
            - _split_param_logq(ppi, plam, c_star, cpi, clam, i1, i2, alpha, beta, tau, clamped)
            + math.log(ppi[c_star]))


# ---------------------------------------------------------------------------
# birth / death pieces


@njit(cache=True)
def _n_empty(z, C):
    sizes = np.zeros(C, dtype=np.int64)
    for i in range(z.shape[0]):
        sizes[z[i]] += 1
    out = np.empty(C, dtype=np.int64)
    m = 0
    for c in range(C):
        if sizes[c] == 0:
            out[m] = c
            m += 1
    return out[:m]


@njit(cache=True)
def _birth_states(pi, lam, w, lam_new):
    C, J = lam.shape
    pin = np.empty(C + 1)
    pin[:C] = pi * (1.0 - w)
    pin[C] = w
    lamn = np.empty((C + 1, J))
    lamn[:C] = lam
    lamn[C] = lam_new
    return pin, lamn


@njit(cache=True)
def _death_states(pi, lam, z, e):
    C, J = lam.shape
    w = pi[e]
    pin = np.empty(C - 1)
    lamn = np.empty((C - 1, J))
    r = 0
    for c in range(C):
        if c == e:
            continue
        pin[r] = pi[c]
        lamn[r] = lam[c]
        r += 1
    pin = pin / (1.0 - w)
    zn = z.copy()
    for i in range(zn.shape[0]):
        if zn[i] > e:
            zn[i] -= 1
    return pin, lamn, zn


@njit(cache=True)
def _birth_draw(gen, pi, lam, a, b):
    C, J = lam.shape
    w = gen.beta(1.0, C)
    lam_new = np.empty(J)
    for j in range(J):
        lam_new[j] = gen.beta(a, b)
    pin, lamn = _birth_states(pi, lam, w, lam_new)
    return pin, lamn, w


@njit(cache=True)
def _birth_log_acceptance(C, w, n, delta, cmax, empty_before):
    log_w = math.log(w) if w > 0 else NEG_INF
    log_1w = math.log1p(-w) if w < 1 else NEG_INF
    log_g = math.log(C) + (C - 1) * log_1w
    prior_ratio = (delta - 1) * log_w + (n + C * delta - C) * log_1w - _betaln(C * delta, delta)
    return (prior_ratio + _log(_move_prob(C + 1, cmax, False)) - _log(_move_prob(C, cmax, True))
            + math.log(C + 1) - math.log(empty_before + 1) - log_g + (C - 1) * log_1w)


# ---------------------------------------------------------------------------
# RJ moves


@njit(cache=True)
def rj_split_combine(gen, pi, lam, z, sp, pat, delta, a, b, cmax, alpha, beta, tau, clamped):
    C = pi.shape[0]
    if gen.random() < _move_prob(C, cmax, True):
        c_star = _uniform_index(gen, C)
        pin, lamn = _split_parameters(gen, pi, lam, c_star, alpha, beta, tau, clamped)
        zn, log_alloc = _split_allocate(gen, z, pin, lamn, c_star, sp, pat)
        la = _split_log_acceptance(pi, lam, z, c_star, pin, lamn, zn, c_star, C, log_alloc, sp, pat,
                                   delta, a, b, cmax, alpha, beta, tau, clamped)
        if _accept(gen, la):
            return pin, lamn, zn, MOVE_SPLIT, ACCEPTED
        return pi, lam, z, MOVE_SPLIT, REJECTED
    i, j = _pair_from_index(_uniform_index(gen, C * (C - 1) // 2), C)
    pin, lamn, zn, _, _ = _combine_proposal(gen, pi, lam, z, i, j, tau, clamped)
    log_alloc = _split_alloc_logprob(zn, i, pi, lam, z, i, j, sp, pat)
    la = _split_log_acceptance(pin, lamn, zn, i, pi, lam, z, i, j, log_alloc, sp, pat,
                               delta, a, b, cmax, alpha, beta, tau, clamped)
    if _accept(gen, -la):
        return pin, lamn, zn, MOVE_COMBINE, ACCEPTED
    return pi, lam, z, MOVE_COMBINE, REJECTED


@njit(cache=True)
def rj_birth_death(gen, pi, lam, z, n, delta, a, b, cmax):
    C = pi.shape[0]
    if gen.random() < _move_prob(C, cmax, True):
        empty = _n_empty(z, C).shape[0]
        pin, lamn, w = _birth_draw(gen, pi, lam, a, b)
        if _accept(gen, _birth_log_acceptance(C, w, n, delta, cmax, empty)):
            return pin, lamn, z, MOVE_BIRTH, ACCEPTED
        return pi, lam, z, MOVE_BIRTH, REJECTED
    empty = _n_empty(z, C)
    if empty.shape[0] == 0:
        return pi, lam, z, MOVE_DEATH, REJECTED
    e = empty[_uniform_index(gen, empty.shape[0])]
    pin, lamn, zn = _death_states(pi, lam, z, e)
    la = _birth_log_acceptance(C - 1, pi[e], n, delta, cmax, empty.shape[0] - 1)
    if _accept(gen, -la):
        return pin, lamn, zn, MOVE_DEATH, ACCEPTED
    return pi, lam, z, MOVE_DEATH, REJECTED


# ---------------------------------------------------------------------------
# multiple-try moves


@njit(cache=True)
def _weight(wkind, pi, lam, z, log_q, sp, pat, freq, delta, a, b, cmax):
    if wkind == W_INV:
        lt = log_target(pi, lam, z, sp, pat, delta, a, b, cmax)
        if lt == NEG_INF:
            return NEG_INF
        return lt - log_q
    return incomplete_loglik(pi, lam, pat, freq)


@njit(cache=True)
def _choose(gen, up, sc, pi, z):
    """Class (split/death) or pair index (combine); -1 when no choice is drawn (birth)."""
    C = pi.shape[0]
    if sc:
        if up:
            return _uniform_index(gen, C)
        return _uniform_index(gen, C * (C - 1) // 2)
    if up:
        return -1
    empty = _n_empty(z, C)
    return empty[_uniform_index(gen, empty.shape[0])]


@njit(cache=True)
def _draw_trial(gen, up, sc, choice, pi, lam, z, allocate, sp, pat, a, b, cmax, alpha, beta, tau, clamped):
    """Returns (pi, lam, z, log_q, log_jac, c_star, pair_a, pair_b, allocated)."""
    C = pi.shape[0]
    if sc and up:
        pin, lamn = _split_parameters(gen, pi, lam, choice, alpha, beta, tau, clamped)
        if allocate:
            zn, log_alloc = _split_allocate(gen, z, pin, lamn, choice, sp, pat)
        else:
            zn, log_alloc = z.copy(), 0.0
        log_q = (_log(_move_prob(C, cmax, True)) - math.log(C) + math.log(2.0)
                 + _split_param_logq(pi, lam, choice, pin, lamn, choice, C, alpha, beta, tau, clamped))
        log_q += log_alloc
        return pin, lamn, zn, log_q, math.log(pi[choice]), choice, choice, C
    if sc:
        i, j = _pair_from_index(choice, C)
        pin, lamn, zn, log_g, log_jac = _combine_proposal(gen, pi, lam, z, i, j, tau, clamped)
        log_q = _log(_move_prob(C, cmax, False)) - math.log(C * (C - 1) / 2) + log_g
        return pin, lamn, zn, log_q, log_jac, i, i, j
    if up:
        pin, lamn, w = _birth_draw(gen, pi, lam, a, b)
        log_g = math.log(C) + (C - 1) * math.log1p(-w)
        lam_prior = 0.0
        for jj in range(lam.shape[1]):
            lam_prior += _beta_logpdf(lamn[C, jj], a, b)
        log_q = _log(_move_prob(C, cmax, True)) + log_g + lam_prior
        return pin, lamn, z.copy(), log_q, (C - 1) * math.log1p(-w), C, C, C
    n_empty = _n_empty(z, C).shape[0]
    w = pi[choice]
    pin, lamn, zn = _death_states(pi, lam, z, choice)
    log_q = _log(_move_prob(C, cmax, False)) - math.log(n_empty)
    return pin, lamn, zn, log_q, -(C - 2) * math.log1p(-w), choice, choice, choice


@njit(cache=True)
def _reverse_density(up, sc, ypi, ylam, yz, xpi, xlam, xz, c_star, pa, pb, sp, pat, a, b, cmax,
                     alpha, beta, tau, clamped):
    """log T(y, x) for the reverse of the selected forward move (y is the anchor)."""
    C = ypi.shape[0]
    if sc and up:
        lam_m = 0.5 * (ylam[pa] + ylam[pb])
        return (_log(_move_prob(C, cmax, False)) - math.log(C * (C - 1) / 2)
                + _item_logpdf(xlam[pa], lam_m, tau, clamped))
    if sc:
        return (_log(_move_prob(C, cmax, True)) - math.log(C) + math.log(2.0)
                + _split_param_logq(ypi, ylam, pa, xpi, xlam, pa, pb, alpha, beta, tau, clamped)
                + _split_alloc_logprob(yz, pa, xpi, xlam, xz, pa, pb, sp, pat))
    if up:
        n_empty = _n_empty(yz, C).shape[0]
        return _log(_move_prob(C, cmax, False)) - math.log(n_empty)
    e = c_star
    w = xpi[e]
    log_g = math.log(C) + (C - 1) * math.log1p(-w)
    lam_prior = 0.0
    for jj in range(xlam.shape[1]):
        lam_prior += _beta_logpdf(xlam[e, jj], a, b)
    return _log(_move_prob(C, cmax, True)) + log_g + lam_prior


@njit(cache=True)
def mt_move(gen, sc, k, varied, wkind, pi, lam, z, sp, pat, freq, n, delta, a, b, cmax, alpha, beta, tau,
            clamped):
    C = pi.shape[0]
    up = gen.random() < _move_prob(C, cmax, True)
    if sc:
        move = MOVE_SPLIT if up else MOVE_COMBINE
    else:
        move = MOVE_BIRTH if up else MOVE_DEATH
        if not up and _n_empty(z, C).shape[0] == 0:
            return pi, lam, z, move, REJECTED
    lazy = wkind == W_MAN
    allocate = not lazy

    # forward trials
    fpi = []
    flam = []
    fz = []
    lq = np.empty(k)
    ljac = np.empty(k)
    cst = np.empty(k, dtype=np.int64)
    pas = np.empty(k, dtype=np.int64)
    pbs = np.empty(k, dtype=np.int64)
    choice = 0
    if not varied:
        choice = _choose(gen, up, sc, pi, z)
    for t in range(k):
        if varied:
            choice = _choose(gen, up, sc, pi, z)
        tp, tl, tz, q, jac, cs, pa, pb = _draw_trial(gen, up, sc, choice, pi, lam, z, allocate, sp, pat,
                                                      a, b, cmax, alpha, beta, tau, clamped)
        fpi.append(tp)
        flam.append(tl)
        fz.append(tz)
        lq[t] = q
        ljac[t] = jac
        cst[t] = cs
        pas[t] = pa
        pbs[t] = pb
    lw = np.empty(k)
    for t in range(k):
        lw[t] = _weight(wkind, fpi[t], flam[t], fz[t], lq[t], sp, pat, freq, delta, a, b, cmax)
    if lw.max() == NEG_INF:
        return pi, lam, z, move, DEGENERATE
    w = np.exp(lw - lw.max())
    j = _categorical(gen, w / w.sum())
    ypi, ylam, yz = fpi[j], flam[j], fz[j]
    lq_y = lq[j]
    if lazy and sc and up:
        yz, log_alloc = _split_allocate(gen, z, ypi, ylam, cst[j], sp, pat)
        lq_y += log_alloc
    lt_y = log_target(ypi, ylam, yz, sp, pat, delta, a, b, cmax)
    if lt_y == NEG_INF:
        return pi, lam, z, move, REJECTED

    # reverse trials from y, mirrored
    Cy = ypi.shape[0]
    lw_rev = np.empty(k)
    rchoice = -1
    if not varied:
        if sc and up:
            # pair (c*, C) as a lexicographic index in y
            pa, pb = pas[j], pbs[j]
            rchoice = 0
            for aa in range(pa):
                rchoice += Cy - 1 - aa
            rchoice += pb - pa - 1
        elif sc:
            rchoice = cst[j]
        elif up:
            rchoice = Cy - 1
        else:
            rchoice = -1
    for t in range(k - 1):
        if varied:
            rchoice = _choose(gen, not up, sc, ypi, yz)
        tp, tl, tz, q, _, _, _, _ = _draw_trial(gen, not up, sc, rchoice, ypi, ylam, yz, allocate, sp, pat,
                                                a, b, cmax, alpha, beta, tau, clamped)
        lw_rev[t] = _weight(wkind, tp, tl, tz, q, sp, pat, freq, delta, a, b, cmax)
    lq_x = _reverse_density(up, sc, ypi, ylam, yz, pi, lam, z, cst[j], pas[j], pbs[j], sp, pat, a, b, cmax,
                            alpha, beta, tau, clamped)
    lw_rev[k - 1] = _weight(wkind, pi, lam, z, lq_x, sp, pat, freq, delta, a, b, cmax)

    lt_x = log_target(pi, lam, z, sp, pat, delta, a, b, cmax)
    log_p_y = lw[j] - _logsumexp(lw)
    if lw_rev[k - 1] == NEG_INF:
        log_p_x = NEG_INF
    else:
        log_p_x = lw_rev[k - 1] - _logsumexp(lw_rev)
    log_alpha = (lt_y + lq_x + log_p_x) - (lt_x + lq_y + log_p_y) + ljac[j]
    if _accept(gen, log_alpha):
        return ypi, ylam, yz, move, ACCEPTED
    return pi, lam, z, move, REJECTED


# ---------------------------------------------------------------------------
# chain


@njit(cache=True)
def run_sweeps(gen, wkind, k, varied, pi, lam, z, sp, pat, freq, delta, a, b, cmax, alpha, beta, tau,
               models, moves, outcomes, clamped):
    n = z.shape[0]
    for t in range(models.shape[0]):
        pi, lam, z = gibbs(gen, pi, lam, z, sp, pat, delta, a, b)
        sc = gen.random() < 0.5
        if wkind == W_RJ:
            if sc:
                pi, lam, z, mv, res = rj_split_combine(gen, pi, lam, z, sp, pat, delta, a, b, cmax,
                                                       alpha, beta, tau, clamped)
            else:
                pi, lam, z, mv, res = rj_birth_death(gen, pi, lam, z, n, delta, a, b, cmax)
        else:
            pi, lam, z, mv, res = mt_move(gen, sc, k, varied, wkind, pi, lam, z, sp, pat, freq, n, delta,
                                          a, b, cmax, alpha, beta, tau, clamped)
        models[t] = pi.shape[0]
        moves[t] = mv
        outcomes[t] = res
    return pi, lam, z
