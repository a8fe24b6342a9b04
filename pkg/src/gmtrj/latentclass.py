"""Latent class model with an unknown number of classes.

Binary responses on ``J`` items; class ``c`` has weight ``pi[c]`` and item
success probabilities ``lam[c, j]``.  The sampler runs on the complete data
(responses plus allocations ``z``) with a Gibbs sweep for the parameters and
split/combine and birth/death moves for the class count.

Class labels carry no meaning, so the target is taken over unlabeled
configurations: the labeled density times ``C!``.  With that convention the
split/combine and birth/death ratios below are exact Metropolis-Hastings
ratios, and the multiple-try variants reuse the generic engine.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.special import betaln, expit, gammaln, xlog1py, xlogy

from .core import NEG_INF, Outcome, RngStream
from .samplers import (
    SAME_DESTINATION,
    VARIED_DESTINATION,
    MTMInvWeights,
    Trial,
    WeightScheme,
    multiple_try_step,
)

log = logging.getLogger(__name__)

DEFAULT_DATA = "goodman_role_conflict.csv"
ALGORITHMS = ("RJ", "MTRJ-inv-I", "MTRJ-inv-II", "GMTRJ-man-I", "GMTRJ-man-II")
LAM_FLOOR = 1e-8


class DataFileError(FileNotFoundError):
    pass


# ---------------------------------------------------------------------------
# data, priors, state


@dataclass(frozen=True)
class LCData:
    """Response-pattern frequencies; subjects are stored sorted by pattern."""

    patterns: np.ndarray  # (P, J) of 0/1
    freq: np.ndarray  # (P,)

    def __post_init__(self):
        if np.any(self.freq < 0):
            raise ValueError("pattern frequencies must be nonnegative")
        if not np.isin(self.patterns, (0, 1)).all():
            raise ValueError("responses must be 0/1")
        object.__setattr__(self, "subject_pattern", np.repeat(np.arange(len(self.freq)), self.freq))

    @property
    def n(self) -> int:
        return int(self.freq.sum())

    @property
    def items(self) -> int:
        return self.patterns.shape[1]

    @cached_property
    def responses(self) -> np.ndarray:
        """(n, J) subject-level responses."""
        return self.patterns[self.subject_pattern]


def load_lc_data(path: str | Path | None = None) -> LCData:
    """Read ``y1,...,yJ,frequency`` rows; '#' lines are comments."""
    if path is None:
        handle = resources.files("gmtrj.data").joinpath(DEFAULT_DATA).open()
    else:
        path = Path(path)
        if not path.exists():
            raise DataFileError(
                f"latent class data file {path} not found; point 'data' at a CSV with columns "
                f"y1,...,yJ,frequency or omit it to use the bundled table"
            )
        handle = path.open()
    with handle:
        rows = list(csv.DictReader(line for line in handle if not line.lstrip().startswith("#")))
    items = sorted((k for k in rows[0] if k.startswith("y")), key=lambda s: int(s[1:]))
    patterns = np.array([[int(r[k]) for k in items] for r in rows])
    freq = np.array([int(r["frequency"]) for r in rows])
    return LCData(patterns, freq)


@dataclass(frozen=True)
class LCPriors:
    """Dirichlet(delta) weights, Beta(a, b) item probabilities, C uniform on 1..c_max."""

    delta: float = 1.0
    a: float = 1.0
    b: float = 1.0
    c_max: int = 20

    def __post_init__(self):
        if self.delta <= 0 or self.a <= 0 or self.b <= 0 or self.c_max < 1:
            raise ValueError("invalid latent class prior settings")


@dataclass
class MoveSettings:
    """Split proposal u ~ Be(alpha, beta); item draws Be(tau*lam, tau*(1-lam))."""

    alpha: float = 2.0
    beta: float = 2.0
    tau: float = 10.0
    clamped: int = 0


@dataclass(frozen=True, eq=False)
class LCState:
    pi: np.ndarray
    lam: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        lam = np.atleast_2d(np.asarray(self.lam, dtype=float))
        z = np.asarray(self.z, dtype=np.int64)
        if lam.shape[0] != pi.shape[0]:
            raise ValueError("pi and lam disagree on the number of classes")
        for arr in (pi, lam, z):
            arr.flags.writeable = False
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "z", z)

    @property
    def C(self) -> int:
        return self.pi.shape[0]

    @property
    def model(self) -> int:
        return self.C

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.z, minlength=self.C)

    def empty_classes(self) -> np.ndarray:
        return np.flatnonzero(self.class_sizes() == 0)

    def check(self, tol=1e-12):
        if abs(self.pi.sum() - 1.0) > tol or np.any(self.pi < 0):
            raise ValueError("class weights must be a probability vector")
        if np.any(self.lam <= 0) or np.any(self.lam >= 1):
            raise ValueError("item probabilities must lie in (0, 1)")
        if self.z.size and (self.z.min() < 0 or self.z.max() >= self.C):
            raise ValueError("allocation outside 0..C-1")
        return self


def initial_state(data: LCData, C: int = 1) -> LCState:
    return LCState(np.full(C, 1.0 / C), np.full((C, data.items), 0.5), np.arange(data.n) % C)


# ---------------------------------------------------------------------------
# likelihoods and prior


def log_pattern_given_class(lam, patterns) -> np.ndarray:
    """(P, C) matrix of log prod_j lam^y (1 - lam)^(1 - y)."""
    y = np.asarray(patterns)[:, None, :]
    lam = np.asarray(lam)[None, :, :]
    return (xlogy(y, lam) + xlog1py(1 - y, -lam)).sum(axis=2)


def manifest_prob(lam, pi, y) -> np.ndarray | float:
    """P(y) = sum_c pi_c prod_j lam^y (1 - lam)^(1 - y); ``y`` one pattern or a (P, J) array."""
    y = np.asarray(y)
    single = y.ndim == 1
    probs = np.exp(log_pattern_given_class(np.atleast_2d(lam), np.atleast_2d(y))) @ np.asarray(pi)
    return float(probs[0]) if single else probs


def _sufficient(state: LCState, data: LCData):
    """Class sizes (C,) and per-item success counts (C, J)."""
    table = np.bincount(data.subject_pattern * state.C + state.z,
                        minlength=len(data.freq) * state.C).reshape(len(data.freq), state.C)
    return table.sum(axis=0), table.T @ data.patterns


def _xlogy(x, y):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x == 0, 0.0, x * np.log(y))


def complete_loglik(state: LCState, data: LCData) -> float:
    """Complete-data log likelihood sum_i log[pi_{z_i} prod_j f(y_ij | lam_{j|z_i})]."""
    sizes, succ = _sufficient(state, data)
    fail = sizes[:, None] - succ
    total = _xlogy(sizes, state.pi).sum() + _xlogy(succ, state.lam).sum() + _xlogy(fail, 1.0 - state.lam).sum()
    return float(total) if not np.isnan(total) else NEG_INF


def incomplete_loglik(lam, pi, data: LCData) -> float:
    """Manifest log likelihood sum_y freq(y) log P(y); allocations play no part."""
    with np.errstate(divide="ignore"):
        lp = np.log(manifest_prob(lam, pi, data.patterns))
    return float(data.freq @ lp)


def log_prior(state: LCState, priors: LCPriors) -> float:
    """Labeled prior density of (C, pi, lam)."""
    C = state.C
    if C > priors.c_max:
        return NEG_INF
    if np.any(state.lam <= 0) or np.any(state.lam >= 1):
        return NEG_INF
    d = priors.delta
    with np.errstate(divide="ignore"):
        lp = -math.log(priors.c_max) + gammaln(C * d) - C * gammaln(d) + xlogy(d - 1, state.pi).sum()
        lp += (xlogy(priors.a - 1, state.lam) + xlog1py(priors.b - 1, -state.lam)).sum()
    lp -= state.lam.size * betaln(priors.a, priors.b)
    return float(lp)


class LatentClassTarget:
    """Unlabeled complete-data posterior: labeled density times C!."""

    def __init__(self, data: LCData, priors: LCPriors | None = None):
        self.data = data
        self.priors = priors or LCPriors()

    def log_labeled(self, state: LCState) -> float:
        lp = log_prior(state, self.priors)
        if lp == NEG_INF:
            return NEG_INF
        ll = complete_loglik(state, self.data)
        return NEG_INF if ll == NEG_INF else ll + lp

    def log_target(self, state: LCState) -> float:
        lt = self.log_labeled(state)
        return lt if lt == NEG_INF else lt + gammaln(state.C + 1)

    def log_target_many(self, states):
        return np.array([self.log_target(s) for s in states])


# ---------------------------------------------------------------------------
# Gibbs update


def allocation_probs(pi, lam, responses) -> np.ndarray:
    """(n, C) full conditional probabilities of each subject's class."""
    with np.errstate(divide="ignore"):
        lp = np.log(pi) + log_pattern_given_class(lam, responses)
    lp -= lp.max(axis=1, keepdims=True)
    p = np.exp(lp)
    return p / p.sum(axis=1, keepdims=True)


def _draw_rows(rng: RngStream, probs: np.ndarray) -> np.ndarray:
    """One categorical draw per row by cumulative-sum inversion."""
    cum = np.cumsum(probs, axis=1)
    u = rng.uniform(probs.shape[0]) * cum[:, -1]
    idx = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def gibbs_sweep(rng: RngStream, state: LCState, data: LCData, priors: LCPriors | None = None) -> LCState:
    """Allocations, then weights, then item probabilities from their full conditionals."""
    priors = priors or LCPriors()
    per_pattern = allocation_probs(state.pi, state.lam, data.patterns)
    z = _draw_rows(rng, per_pattern[data.subject_pattern])
    tmp = LCState(state.pi, state.lam, z)
    sizes, succ = _sufficient(tmp, data)
    pi = rng.dirichlet(priors.delta + sizes)
    lam = rng.beta(priors.a + succ, priors.b + (sizes[:, None] - succ))
    return LCState(pi, lam, z)


# ---------------------------------------------------------------------------
# proposal densities


def _clamp(lam, settings: MoveSettings):
    clipped = np.clip(lam, LAM_FLOOR, 1.0 - LAM_FLOOR)
    if np.any(clipped != lam):
        settings.clamped += 1
        log.debug("clamped item probability before forming Beta proposal parameters")
    return clipped


def _beta_logpdf(x, a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (a - 1) * np.log(x) + (b - 1) * np.log1p(-x) - betaln(a, b)
    return np.where(np.isnan(out), NEG_INF, out)


def _item_logpdf(lam_new, lam_centre, settings: MoveSettings) -> float:
    """log density of Be(tau*c, tau*(1-c)) draws, summed over items."""
    c = _clamp(lam_centre, settings)
    return float(_beta_logpdf(lam_new, settings.tau * c, settings.tau * (1 - c)).sum())


def _draw_items(rng, lam_centre, settings: MoveSettings):
    c = _clamp(lam_centre, settings)
    return rng.beta(settings.tau * c, settings.tau * (1 - c))


def _move_prob(C: int, c_max: int, up: bool) -> float:
    """P_s(C) / P_b(C) for up moves, P_c(C) / P_d(C) for down moves."""
    if C <= 1:
        return 1.0 if up else 0.0
    if C >= c_max:
        return 0.0 if up else 1.0
    return 0.5


def uniform_index(rng, n: int) -> int:
    """Index uniform on 0..n-1 from a single uniform draw."""
    return min(int(rng.uniform() * n), n - 1)


def _log(x):
    return math.log(x) if x > 0 else NEG_INF


# ---------------------------------------------------------------------------
# split / combine


@dataclass
class Split:
    """A split of class ``c_star``; children sit at ``c_star`` and at the end."""

    state: LCState
    c_star: int
    u: float
    log_q: float  # log g(u) + item densities + log P_alloc (P_alloc only if allocated)
    log_alloc: float
    log_jac: float


def split_parameters(rng, state: LCState, c_star: int, settings: MoveSettings):
    """Draw u and both children's item probabilities; no reallocation yet."""
    u = rng.beta(settings.alpha, settings.beta)
    lam1 = _draw_items(rng, state.lam[c_star], settings)
    lam2 = _draw_items(rng, state.lam[c_star], settings)
    p = state.pi[c_star]
    pi = np.append(state.pi, p * (1 - u))
    pi[c_star] = p * u
    lam = np.vstack([state.lam, lam2])
    lam[c_star] = lam1
    return float(u), pi, lam


def _split_alloc_probs(pi, lam, responses, c1, c2):
    with np.errstate(divide="ignore"):
        l1 = math.log(pi[c1]) + log_pattern_given_class(lam[c1:c1 + 1], responses)[:, 0]
        l2 = math.log(pi[c2]) + log_pattern_given_class(lam[c2:c2 + 1], responses)[:, 0]
    with np.errstate(invalid="ignore"):
        p1 = expit(l1 - l2)  # probability of c1
    return np.where(np.isnan(p1), 0.5, p1)


def split_allocate(rng, parent_z, pi, lam, c_star, data: LCData):
    """Reassign subjects of ``c_star`` between children c_star and C (the new last class)."""
    c2 = len(pi) - 1
    members = np.flatnonzero(parent_z == c_star)
    z = np.array(parent_z)
    if members.size == 0:
        return z, 0.0
    p1 = _split_alloc_probs(pi, lam, data.responses[members], c_star, c2)
    to_first = rng.uniform(members.size) < p1
    z[members[~to_first]] = c2
    with np.errstate(divide="ignore"):
        log_alloc = float(np.log(np.where(to_first, p1, 1.0 - p1)).sum())
    return z, log_alloc


def split_proposal(rng, state: LCState, c_star: int, data: LCData, settings: MoveSettings) -> Split:
    """Split class ``c_star``: weights pi*u, pi*(1-u); items around the parent; reallocate."""
    u, pi, lam = split_parameters(rng, state, c_star, settings)
    z, log_alloc = split_allocate(rng, state.z, pi, lam, c_star, data)
    child = LCState(pi, lam, z)
    return Split(child, c_star, u, _split_param_logq(state, c_star, child, settings) + log_alloc,
                 log_alloc, math.log(state.pi[c_star]))


def _split_param_logq(parent, c_star, child, settings, i1=None, i2=None):
    i1 = c_star if i1 is None else i1
    i2 = child.C - 1 if i2 is None else i2
    u = child.pi[i1] / parent.pi[c_star]
    return (float(_beta_logpdf(u, settings.alpha, settings.beta))
            + _item_logpdf(child.lam[i1], parent.lam[c_star], settings)
            + _item_logpdf(child.lam[i2], parent.lam[c_star], settings))


def split_alloc_logprob(parent: LCState, c_star: int, child: LCState, data: LCData, i1=None, i2=None) -> float:
    """log P_alloc: probability that splitting ``c_star`` allocates subjects as in ``child``."""
    i1 = c_star if i1 is None else i1
    i2 = child.C - 1 if i2 is None else i2
    members = np.flatnonzero(parent.z == c_star)
    if members.size == 0:
        return 0.0
    p1 = _split_alloc_probs(child.pi, child.lam, data.responses[members], i1, i2)
    first = child.z[members] == i1
    with np.errstate(divide="ignore"):
        return float(np.log(np.where(first, p1, 1.0 - p1)).sum())


def combine_states(state: LCState, a: int, b: int, lam_star) -> LCState:
    """Merge classes a < b into position a with item probabilities ``lam_star``."""
    if not a < b:
        raise ValueError("combine expects a < b")
    pi = np.delete(state.pi, b)
    pi[a] = state.pi[a] + state.pi[b]
    lam = np.delete(state.lam, b, axis=0)
    lam[a] = lam_star
    z = np.array(state.z)
    z[z == b] = a
    z[z > b] -= 1
    return LCState(pi, lam, z)


def combine_proposal(rng, state: LCState, pair, settings: MoveSettings):
    """Merge ``pair``; returns (state, log g(lam*), log|J|)."""
    a, b = sorted(pair)
    lam_m = 0.5 * (state.lam[a] + state.lam[b])
    lam_star = _draw_items(rng, lam_m, settings)
    merged = combine_states(state, a, b, lam_star)
    return merged, _item_logpdf(lam_star, lam_m, settings), -math.log(merged.pi[a])


def split_log_acceptance(parent: LCState, child: LCState, c_star: int, log_alloc: float,
                         target: LatentClassTarget, settings: MoveSettings,
                         i1=None, i2=None) -> float:
    """log A for splitting ``c_star`` of ``parent`` into classes i1, i2 of ``child``.

    log A = log[f* p](child) - log[f* p](parent) + log P_c(C+1) - log P_s(C) - log P_alloc
            + sum_j log g(lam_c*) - log g(u) - sum_j log g(lam_c1) g(lam_c2) + log pi_c*
    with f*, p the labeled complete likelihood and prior and g(lam_c*) the
    combine proposal around the children's mean.  A combine is accepted with
    min(1, 1/A) evaluated on the reverse split.
    """
    i1 = c_star if i1 is None else i1
    i2 = child.C - 1 if i2 is None else i2
    C = parent.C
    c_max = target.priors.c_max
    lam_m = 0.5 * (child.lam[i1] + child.lam[i2])
    return (target.log_labeled(child) - target.log_labeled(parent)
            + _log(_move_prob(C + 1, c_max, up=False)) - _log(_move_prob(C, c_max, up=True)) - log_alloc
            + _item_logpdf(parent.lam[c_star], lam_m, settings)
            - _split_param_logq(parent, c_star, child, settings, i1, i2)
            + math.log(parent.pi[c_star]))


# ---------------------------------------------------------------------------
# birth / death


def birth_states(state: LCState, w: float, lam_new) -> LCState:
    pi = np.append(state.pi * (1.0 - w), w)
    return LCState(pi, np.vstack([state.lam, lam_new]), state.z)


def death_states(state: LCState, e: int) -> LCState:
    w = state.pi[e]
    pi = np.delete(state.pi, e) / (1.0 - w)
    z = np.array(state.z)
    z[z > e] -= 1
    return LCState(pi, np.delete(state.lam, e, axis=0), z)


def birth_proposal(rng, state: LCState, priors: LCPriors):
    """New empty class with weight w ~ Be(1, C) and item probabilities from the prior."""
    w = float(rng.beta(1.0, state.C))
    lam_new = rng.beta(priors.a, priors.b, size=state.lam.shape[1])
    return birth_states(state, w, lam_new), w, lam_new


def birth_log_acceptance(state: LCState, w: float, n: int, priors: LCPriors, empty_before: int) -> float:
    """log A for adding an empty class of weight ``w`` to ``state`` (C classes, C_0 empty).

    A = w^(d-1) (1-w)^(n + C d - C) / B(C d, d) * P_d(C+1) / P_b(C) * (C+1)/(C_0+1)
        / g(w) * (1-w)^(C-1),  with g the Be(1, C) density.
    """
    C, d = state.C, priors.delta
    with np.errstate(divide="ignore"):
        log_w, log_1w = math.log(w) if w > 0 else NEG_INF, math.log1p(-w) if w < 1 else NEG_INF
    log_g = math.log(C) + (C - 1) * log_1w  # Be(1, C) density
    prior_ratio = (d - 1) * log_w + (n + C * d - C) * log_1w - betaln(C * d, d)
    return (prior_ratio + _log(_move_prob(C + 1, priors.c_max, up=False)) - _log(_move_prob(C, priors.c_max, up=True))
            + math.log(C + 1) - math.log(empty_before + 1) - log_g + (C - 1) * log_1w)


# ---------------------------------------------------------------------------
# trial sources for the multiple-try engine


class _LCSource:
    """Shared plumbing: ``up`` moves add a class, ``down`` moves remove one.

    ``policy`` is same-destination (one class choice, k parameter draws) or
    varied-destination (class drawn per trial).  Trials keep the chosen
    class indices in ``info`` so the reverse set can mirror them.
    """

    def __init__(self, up: bool, policy: str, data: LCData, priors: LCPriors, settings: MoveSettings,
                 allocate: bool = True):
        self.up = up
        self.policy = policy
        self.data = data
        self.priors = priors
        self.settings = settings
        self.allocate = allocate
        self._chosen = None

    def _log_move(self, C, up):
        return _log(_move_prob(C, self.priors.c_max, up))

    def forward(self, rng, anchor, k):
        return self._trials(rng, anchor, k, self.up, mirror=None)

    def _trials(self, rng, anchor, n, up, mirror):
        if n == 0:
            return []
        if self.policy == SAME_DESTINATION:
            choice = self._choose(rng, anchor, up) if mirror is None else mirror
            return [self._draw(rng, anchor, up, choice) for _ in range(n)]
        return [self._draw(rng, anchor, up, self._choose(rng, anchor, up)) for _ in range(n)]

    def complete(self, rng, trial):
        self._chosen = trial
        return trial


class SplitCombineSource(_LCSource):
    def _choose(self, rng, anchor, up):
        C = anchor.C
        if up:
            return uniform_index(rng, C)
        a, b = _pair_from_index(uniform_index(rng, C * (C - 1) // 2), C)
        return (a, b)

    def _draw(self, rng, anchor, up, choice):
        C = anchor.C
        if up:
            u, pi, lam = split_parameters(rng, anchor, choice, self.settings)
            if self.allocate:
                z, log_alloc = split_allocate(rng, anchor.z, pi, lam, choice, self.data)
            else:
                z, log_alloc = anchor.z, None
            child = LCState(pi, lam, z)
            log_q = (self._log_move(C, True) - math.log(C) + math.log(2.0)
                     + _split_param_logq(anchor, choice, child, self.settings))
            info = {"c_star": choice, "pair": (choice, C), "log_alloc": log_alloc}
            if log_alloc is not None:
                log_q += log_alloc
            return Trial(child, log_q, math.log(anchor.pi[choice]), info)
        a, b = choice
        merged, log_g, log_jac = combine_proposal(rng, anchor, choice, self.settings)
        log_q = self._log_move(C, False) - math.log(C * (C - 1) / 2) + log_g
        return Trial(merged, log_q, log_jac, {"pair": (a, b), "c_star": a})

    def density(self, anchor, state):
        """Trial for reaching ``state`` from ``anchor`` by the reverse of the chosen move."""
        info = self._chosen.info
        C = anchor.C
        if self.up:
            # forward split of c* -> reverse is combining children (c*, last) of the anchor
            a, b = info["pair"]
            lam_m = 0.5 * (anchor.lam[a] + anchor.lam[b])
            log_q = (self._log_move(C, False) - math.log(C * (C - 1) / 2)
                     + _item_logpdf(state.lam[a], lam_m, self.settings))
            return Trial(state, log_q, -math.log(state.pi[a]))
        # forward combine of (a, b) -> reverse is splitting class a of the anchor into a and b
        a, b = info["pair"]
        log_q = (self._log_move(C, True) - math.log(C) + math.log(2.0)
                 + _split_param_logq(anchor, a, state, self.settings, a, b)
                 + split_alloc_logprob(anchor, a, state, self.data, a, b))
        return Trial(state, log_q, math.log(anchor.pi[a]))

    def reverse(self, rng, anchor, current, k):
        info = self._chosen.info
        if self.up:
            mirror = info["pair"]
        else:
            mirror = info["c_star"]
        trials = self._trials(rng, anchor, k - 1, not self.up, mirror)
        trials.append(self.density(anchor, current))
        return trials


def _pair_from_index(idx: int, C: int):
    """idx-th pair (a < b) in lexicographic order."""
    a = 0
    while idx >= C - 1 - a:
        idx -= C - 1 - a
        a += 1
    return a, a + 1 + idx


class LazySplitCombineSource(SplitCombineSource):
    """Split trials drawn without reallocation; the selected one is completed."""

    def __init__(self, *args, **kwargs):
        kwargs["allocate"] = False
        super().__init__(*args, **kwargs)
        self._anchor = None

    def forward(self, rng, anchor, k):
        self._anchor = anchor
        return super().forward(rng, anchor, k)

    def complete(self, rng, trial):
        if self.up:
            c_star = trial.info["c_star"]
            z, log_alloc = split_allocate(rng, self._anchor.z, trial.state.pi, trial.state.lam, c_star, self.data)
            state = LCState(trial.state.pi, trial.state.lam, z)
            info = dict(trial.info, log_alloc=log_alloc)
            trial = Trial(state, trial.log_q + log_alloc, trial.log_jac, info)
        self._chosen = trial
        return trial


class BirthDeathSource(_LCSource):
    def _choose(self, rng, anchor, up):
        if up:
            return None
        empty = anchor.empty_classes()
        return int(empty[uniform_index(rng, len(empty))])

    def _draw(self, rng, anchor, up, choice):
        C = anchor.C
        if up:
            child, w, _ = birth_proposal(rng, anchor, self.priors)
            log_g = math.log(C) + (C - 1) * math.log1p(-w)
            lam_prior = float(_beta_logpdf(child.lam[-1], self.priors.a, self.priors.b).sum())
            log_q = self._log_move(C, True) + log_g + lam_prior
            return Trial(child, log_q, (C - 1) * math.log1p(-w), {"class": C})
        n_empty = len(anchor.empty_classes())
        w = anchor.pi[choice]
        child = death_states(anchor, choice)
        log_q = self._log_move(C, False) - math.log(n_empty)
        return Trial(child, log_q, -(C - 2) * math.log1p(-w), {"class": choice})

    def density(self, anchor, state):
        info = self._chosen.info
        C = anchor.C
        if self.up:
            # reverse of a birth: delete the newborn (last) class of the anchor
            n_empty = len(anchor.empty_classes())
            w = anchor.pi[-1]
            return Trial(state, self._log_move(C, False) - math.log(n_empty), -(C - 2) * math.log1p(-w))
        e = info["class"]
        w = state.pi[e]
        log_g = math.log(C) + (C - 1) * math.log1p(-w)
        lam_prior = float(_beta_logpdf(state.lam[e], self.priors.a, self.priors.b).sum())
        return Trial(state, self._log_move(C, True) + log_g + lam_prior, (C - 1) * math.log1p(-w))

    def reverse(self, rng, anchor, current, k):
        mirror = anchor.C - 1 if self.up else None
        trials = self._trials(rng, anchor, k - 1, not self.up, mirror)
        trials.append(self.density(anchor, current))
        return trials


class ManifestWeights(WeightScheme):
    """GMTRJ-man: log w = incomplete (manifest) log likelihood of the trial's (pi, lam)."""

    tag = "GMTRJ-man"
    needs_allocation = False

    def __init__(self, data: LCData):
        self.data = data

    def log_weights(self, trials, anchor, source, target):
        return np.array([incomplete_loglik(t.state.lam, t.state.pi, self.data) for t in trials])


# ---------------------------------------------------------------------------
# single moves


@dataclass
class MoveResult:
    state: LCState
    move: str
    outcome: Outcome


def rj_split_combine(rng, state, data, target, settings) -> MoveResult:
    C, c_max = state.C, target.priors.c_max
    if rng.uniform() < _move_prob(C, c_max, up=True):
        c_star = uniform_index(rng, C)
        sp = split_proposal(rng, state, c_star, data, settings)
        log_a = split_log_acceptance(state, sp.state, c_star, sp.log_alloc, target, settings)
        ok = rng.accept(log_a)
        return MoveResult(sp.state if ok else state, "split", Outcome.ACCEPTED if ok else Outcome.REJECTED)
    a, b = _pair_from_index(uniform_index(rng, C * (C - 1) // 2), C)
    merged, _, _ = combine_proposal(rng, state, (a, b), settings)
    log_alloc = split_alloc_logprob(merged, a, state, data, a, b)
    log_a = split_log_acceptance(merged, state, a, log_alloc, target, settings, a, b)
    ok = rng.accept(-log_a)
    return MoveResult(merged if ok else state, "combine", Outcome.ACCEPTED if ok else Outcome.REJECTED)


def rj_birth_death(rng, state, data, priors) -> MoveResult:
    C = state.C
    if rng.uniform() < _move_prob(C, priors.c_max, up=True):
        empty = len(state.empty_classes())
        child, w, _ = birth_proposal(rng, state, priors)
        ok = rng.accept(birth_log_acceptance(state, w, data.n, priors, empty))
        return MoveResult(child if ok else state, "birth", Outcome.ACCEPTED if ok else Outcome.REJECTED)
    empty = state.empty_classes()
    if len(empty) == 0:
        return MoveResult(state, "death", Outcome.REJECTED)
    e = int(empty[uniform_index(rng, len(empty))])
    child = death_states(state, e)
    log_a = birth_log_acceptance(child, state.pi[e], data.n, priors, len(empty) - 1)
    ok = rng.accept(-log_a)
    return MoveResult(child if ok else state, "death", Outcome.ACCEPTED if ok else Outcome.REJECTED)


def birth_death_step(rng, state: LCState, data: LCData, priors: LCPriors | None = None):
    """One RJ birth-or-death move; returns (state, accepted)."""
    res = rj_birth_death(rng, state, data, priors or LCPriors())
    return res.state, bool(res.outcome)


def mt_move(rng, state, kind: str, k: int, policy: str, weights: WeightScheme, data, target, settings,
            lt=None) -> MoveResult:
    """Multiple-try split/combine (``kind='sc'``) or birth/death (``kind='bd'``)."""
    C, c_max = state.C, target.priors.c_max
    up = rng.uniform() < _move_prob(C, c_max, up=True)
    if kind == "sc":
        move = "split" if up else "combine"
        lazy = not getattr(weights, "needs_allocation", True)
        cls = LazySplitCombineSource if lazy else SplitCombineSource
        source = cls(up, policy, data, target.priors, settings)
    else:
        move = "birth" if up else "death"
        if not up and len(state.empty_classes()) == 0:
            return MoveResult(state, move, Outcome.REJECTED)
        source = BirthDeathSource(up, policy, data, target.priors, settings)
    new, res = multiple_try_step(rng, state, k, source, weights, target, lt)
    return MoveResult(new, move, res)


# ---------------------------------------------------------------------------
# relabeling


def relabel(pi, lam):
    """Sort classes by descending weight (ties: first-item probability, then index).

    Accepts one draw (``pi`` (C,), ``lam`` (C, J)) or stacks of draws with a
    leading axis; returns permuted copies.
    """
    pi = np.asarray(pi, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if pi.ndim == 1:
        order = np.lexsort((np.arange(len(pi)), -lam[:, 0], -pi))
        return pi[order], lam[order]
    out = [relabel(p, l) for p, l in zip(pi, lam)]
    return np.array([o[0] for o in out]), np.array([o[1] for o in out])


# ---------------------------------------------------------------------------
# chain


@dataclass
class LCConfig:
    algorithm: str = "RJ"
    k: int = 10
    sweeps: int = 300_000
    burn_in: int = 60_000
    seed: int = 0
    stream: int = 0
    c_max: int = 20
    alpha: float = 2.0
    beta: float = 2.0
    tau: float = 10.0
    delta: float = 1.0
    start_classes: int = 1
    data: str | None = None
    keep_burn_in: bool = False
    engine: str = "fast"

    def __post_init__(self):
        if self.engine not in ("fast", "generic"):
            raise ValueError("engine must be 'fast' or 'generic'")
        if self.delta < 0.1 and self.engine == "fast":
            raise ValueError("the compiled sweep needs delta >= 0.1; use engine='generic'")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.sweeps > self.burn_in >= 0:
            raise ValueError("need sweeps > burn_in >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 1 <= self.start_classes <= self.c_max:
            raise ValueError("start_classes must lie in 1..c_max")


@dataclass
class LCTrace:
    models: np.ndarray  # class count after each sweep
    moves: np.ndarray
    outcomes: np.ndarray
    burn_in: int = 0
    cpu_seconds: float = 0.0
    meta: dict = field(default_factory=dict)
    final_state: LCState | None = None


def make_lc_weights(algorithm: str, data: LCData) -> WeightScheme | None:
    if algorithm == "RJ":
        return None
    if algorithm.startswith("MTRJ-inv"):
        return MTMInvWeights()
    return ManifestWeights(data)


def lc_policy(algorithm: str) -> str:
    return VARIED_DESTINATION if algorithm.endswith("-I") else SAME_DESTINATION


def run_lc_chain(config: LCConfig, data: LCData | None = None) -> LCTrace:
    data = data if data is not None else load_lc_data(config.data)
    priors = LCPriors(config.delta, 1.0, 1.0, config.c_max)
    target = LatentClassTarget(data, priors)
    settings = MoveSettings(config.alpha, config.beta, config.tau)
    rng = RngStream(config.seed, config.stream)
    weights = make_lc_weights(config.algorithm, data)
    policy = lc_policy(config.algorithm)

    n = config.sweeps
    state = initial_state(data, config.start_classes)
    start = time.process_time()
    if config.engine == "fast":
        models, moves, outcomes, state = _loop_fast(rng, state, config, data, priors, settings)
    else:
        models, moves, outcomes, state = _loop_generic(rng, state, config, data, priors, settings, target,
                                                       weights, policy)
    cpu = time.process_time() - start

    keep = 0 if config.keep_burn_in else config.burn_in
    return LCTrace(models[keep:], moves[keep:], outcomes[keep:], burn_in=config.burn_in - keep,
                   cpu_seconds=cpu, final_state=state,
                   meta={"case": "latentclass", "algorithm": config.algorithm, "k": config.k,
                         "seed": config.seed, "stream": config.stream, "iterations": n,
                         "clamped": settings.clamped})


def _loop_generic(rng, state, config, data, priors, settings, target, weights, policy):
    n = config.sweeps
    models = np.empty(n, dtype=np.int16)
    moves = np.empty(n, dtype="U7")
    outcomes = np.empty(n, dtype="U1")
    for t in range(n):
        state = gibbs_sweep(rng, state, data, priors)
        kind = "sc" if rng.uniform() < 0.5 else "bd"
        if weights is None:
            res = (rj_split_combine(rng, state, data, target, settings) if kind == "sc"
                   else rj_birth_death(rng, state, data, priors))
        else:
            res = mt_move(rng, state, kind, config.k, policy, weights, data, target, settings)
        state = res.state
        models[t] = state.C
        moves[t] = res.move
        outcomes[t] = res.outcome.code
    return models, moves, outcomes, state


MOVE_NAMES = np.array(["split", "combine", "birth", "death"])


def _loop_fast(rng, state, config, data, priors, settings):
    from . import _latentclass_fast as fast

    n = config.sweeps
    if config.algorithm == "RJ":
        wkind = fast.W_RJ
    else:
        wkind = fast.W_INV if config.algorithm.startswith("MTRJ-inv") else fast.W_MAN
    models = np.empty(n, dtype=np.int16)
    moves = np.empty(n, dtype=np.int8)
    codes = np.empty(n, dtype=np.int8)
    clamped = np.zeros(1, dtype=np.int64)
    pi, lam, z = fast.run_sweeps(
        rng.generator, wkind, config.k, lc_policy(config.algorithm) == VARIED_DESTINATION,
        np.array(state.pi), np.array(state.lam), np.array(state.z), data.subject_pattern,
        data.patterns.astype(float), data.freq.astype(float), priors.delta, priors.a, priors.b, priors.c_max,
        settings.alpha, settings.beta, settings.tau, models, moves, codes, clamped)
    settings.clamped += int(clamped[0])
    letters = np.array([Outcome(i).code for i in range(3)])
    return models, MOVE_NAMES[moves], letters[codes], LCState(pi, lam, z)
