"""Metropolis-Hastings, reversible jump and their generalised multiple-try
versions.

Every kernel draws its randomness from an :class:`~gmtrj.core.RngStream`
through ``categorical`` (trial selection, destination choice) and ``accept``
(the Metropolis coin), plus whatever the proposal itself consumes.  The
multiple-try kernels share :func:`multiple_try_step`; trial generation is
delegated to a *trial source* so the same engine drives within-model moves,
model jumps and the latent class split/birth moves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .core import (
    NEG_INF,
    ChainState,
    Outcome,
    RngStream,
    check_log_value,
    log_target_many,
    logsumexp,
)
from .quad import log_A_many

SAME_DESTINATION = "same-destination"
VARIED_DESTINATION = "varied-destination"


class NoValidTrialError(ValueError):
    """Every trial carries zero selection weight."""


@dataclass
class Trial:
    """A candidate reached from an anchor state.

    ``log_q`` is log T(anchor, state) including the probability of picking
    the destination; ``log_jac`` is log|J| of the anchor -> state map.
    """

    state: Any
    log_q: float
    log_jac: float = 0.0
    info: Any = None


@dataclass
class TrialSet:
    trials: list
    log_weights: np.ndarray
    selected: int = -1

    @property
    def probabilities(self) -> np.ndarray:
        return selection_probabilities(self.log_weights)


def selection_probabilities(log_weights) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=float)
    if np.any(np.isnan(lw)):
        raise FloatingPointError("NaN selection weight")
    top = lw.max()
    if top == NEG_INF:
        raise NoValidTrialError("all selection weights are zero")
    w = np.exp(lw - top)
    return w / w.sum()


def select_trial(rng: RngStream, log_weights) -> int:
    """Draw an index with probability proportional to exp(log_weights)."""
    return rng.categorical(selection_probabilities(log_weights))


@dataclass
class MoveSpec:
    """Configuration of a between-model move.

    ``jump_probs[m][m2]`` is j(m, m2).  Under ``same-destination`` one model
    is drawn per step and all ``k`` trials target it; under
    ``varied-destination`` every trial draws its own destination.
    """

    jump_probs: dict
    k: int = 1
    policy: str = SAME_DESTINATION
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.policy not in (SAME_DESTINATION, VARIED_DESTINATION):
            raise ValueError(f"unknown destination policy {self.policy!r}")
        for m, row in self.jump_probs.items():
            total = math.fsum(row.values())
            if abs(total - 1.0) > 1e-12 or min(row.values()) < 0:
                raise ValueError(f"jump probabilities out of model {m} sum to {total}")

    def destinations(self, model: int):
        if model not in self._cache:
            row = self.jump_probs[model]
            dests = [d for d, p in row.items() if p > 0]
            self._cache[model] = (dests, np.array([row[d] for d in dests]))
        return self._cache[model]

    def log_j(self, model: int, dest: int) -> float:
        p = self.jump_probs[model].get(dest, 0.0)
        return math.log(p) if p > 0 else NEG_INF

    def draw(self, rng: RngStream, model: int) -> int:
        dests, probs = self.destinations(model)
        return dests[rng.categorical(probs)]


def uniform_adjacent(neighbours: dict) -> dict:
    """Jump probabilities spread evenly over each model's neighbours."""
    return {m: {d: 1.0 / len(nb) for d in nb} for m, nb in neighbours.items()}


# ---------------------------------------------------------------------------
# trial sources


class WithinModelSource:
    """Trials drawn from a proposal inside the current model."""

    def __init__(self, proposal):
        self.proposal = proposal

    def draw(self, rng, anchor: ChainState, dest: int) -> Trial:
        params, log_q = self.proposal.sample(rng, anchor, dest)
        return Trial(ChainState(dest, params), log_q)

    def forward(self, rng, anchor, k):
        return [self.draw(rng, anchor, anchor.model) for _ in range(k)]

    def density(self, anchor: ChainState, state: ChainState) -> Trial:
        return Trial(state, self.proposal.log_density(anchor, state.model, state.params))

    def reverse(self, rng, anchor, current, k):
        trials = [self.draw(rng, anchor, anchor.model) for _ in range(k - 1)]
        trials.append(self.density(anchor, current))
        return trials

    def complete(self, rng, trial):
        return trial


class JumpSource:
    """Trials for a between-model move built from a proposal and a jump map."""

    def __init__(self, move: MoveSpec, proposal, jump):
        self.move = move
        self.proposal = proposal
        self.jump = jump

    def draw(self, rng, anchor: ChainState, dest: int) -> Trial:
        u, log_q = self.proposal.sample(rng, anchor, dest)
        params, _, log_jac = self.jump.forward(anchor.params, u, anchor.model, dest)
        return Trial(ChainState(dest, params), self.move.log_j(anchor.model, dest) + log_q, log_jac)

    def _dests(self, rng, model, n, mirror=None):
        if self.move.policy == SAME_DESTINATION:
            dest = self.move.draw(rng, model) if mirror is None else mirror
            return [dest] * n
        return [self.move.draw(rng, model) for _ in range(n)]

    def forward(self, rng, anchor, k):
        return [self.draw(rng, anchor, d) for d in self._dests(rng, anchor.model, k)]

    def density(self, anchor: ChainState, state: ChainState) -> Trial:
        u = self.jump.aux_for(anchor.params, anchor.model, state.params, state.model)
        _, _, log_jac = self.jump.forward(anchor.params, u, anchor.model, state.model)
        log_q = self.move.log_j(anchor.model, state.model) + self.proposal.log_density(anchor, state.model, u)
        return Trial(state, log_q, log_jac)

    def reverse(self, rng, anchor, current, k):
        dests = self._dests(rng, anchor.model, k - 1, mirror=current.model)
        trials = [self.draw(rng, anchor, d) for d in dests]
        trials.append(self.density(anchor, current))
        return trials

    def complete(self, rng, trial):
        return trial


# ---------------------------------------------------------------------------
# weighting functions


class WeightScheme:
    """Maps trials reached from ``anchor`` to log selection weights."""

    tag = "custom"

    def log_weights(self, trials: Sequence[Trial], anchor, source, target) -> np.ndarray:
        raise NotImplementedError

    def log_weight(self, trial: Trial, anchor, source, target) -> float:
        return float(self.log_weights([trial], anchor, source, target)[0])


class MTMIWeights(WeightScheme):
    """w*(y, x) = pi(y) T(y, x)."""

    tag = "MTM-I"

    def log_weights(self, trials, anchor, source, target):
        lt = log_target_many(target, [t.state for t in trials])
        back = np.array([source.density(t.state, anchor).log_q for t in trials])
        return np.where(lt == NEG_INF, NEG_INF, lt + back)


class MTMInvWeights(WeightScheme):
    """w*(y, x) = pi(y) / T(x, y)."""

    tag = "MTM-inv"

    def log_weights(self, trials, anchor, source, target):
        lt = log_target_many(target, [t.state for t in trials])
        return np.where(lt == NEG_INF, NEG_INF, lt - np.array([t.log_q for t in trials]))


class QuadWeights(WeightScheme):
    """w*(y, x) = pi*(y) / T(x, y), pi* the quadratic approximation around x.

    For a candidate in another model the expansion is taken at the anchor
    embedded into the candidate's model.  ``expansion(model, params)`` and
    ``embed(params, from_model, to_model)`` default to the target's methods.
    """

    tag = "GMTM-quad"

    def __init__(self, expansion: Callable | None = None, embed: Callable | None = None):
        self.expansion = expansion
        self.embed = embed

    def log_weights(self, trials, anchor, source, target):
        expansion = self.expansion or target.expansion
        embed = self.embed or target.embed
        out = np.empty(len(trials))
        by_model: dict[int, list[int]] = {}
        for i, t in enumerate(trials):
            by_model.setdefault(t.state.model, []).append(i)
        for model, idx in by_model.items():
            point = embed(anchor.params, anchor.model, model)
            exp = expansion(model, point)
            cands = np.array([trials[i].state.params for i in idx]).reshape(len(idx), -1)
            vals = log_A_many(exp, cands) - np.array([trials[i].log_q for i in idx])
            if len(by_model) > 1:
                # expansions around different anchors need their own level pi(anchor)
                vals = vals + target.log_target(ChainState(model, point))
            out[idx] = vals
        return out


class CustomWeights(WeightScheme):
    """Arbitrary positive weighting ``fn(candidate_state, anchor_state) -> log w``."""

    def __init__(self, fn: Callable, tag: str = "custom"):
        self.fn = fn
        self.tag = tag

    def log_weights(self, trials, anchor, source, target):
        return np.array([check_log_value(self.fn(t.state, anchor)) for t in trials])


WEIGHT_SCHEMES = {
    "MTM-I": MTMIWeights,
    "MTM-inv": MTMInvWeights,
    "GMTM-quad": QuadWeights,
}


def make_weights(tag: str) -> WeightScheme:
    aliases = {"MTRJ-I": "MTM-I", "MTRJ-inv": "MTM-inv", "GMTRJ-quad": "GMTM-quad"}
    try:
        return WEIGHT_SCHEMES[aliases.get(tag, tag)]()
    except KeyError:
        raise ValueError(f"unknown weighting scheme {tag!r}") from None


# ---------------------------------------------------------------------------
# kernels


def _finish(rng, current, candidate, log_alpha):
    if rng.accept(log_alpha):
        return candidate, Outcome.ACCEPTED
    return current, Outcome.REJECTED


def mh_step(rng: RngStream, state: ChainState, proposal, target, log_target_state: float | None = None):
    """One Metropolis-Hastings update inside ``state.model``."""
    params, log_q = proposal.sample(rng, state, state.model)
    cand = ChainState(state.model, params)
    lt_y = target.log_target(cand)
    if lt_y == NEG_INF:
        return _finish(rng, state, cand, NEG_INF)
    lt_x = target.log_target(state) if log_target_state is None else log_target_state
    log_q_back = proposal.log_density(cand, state.model, state.params)
    return _finish(rng, state, cand, lt_y + log_q_back - lt_x - log_q)


def rj_step(rng: RngStream, state: ChainState, move: MoveSpec, proposal, jump, target,
            log_target_state: float | None = None):
    """One reversible jump update: pick m', draw u, map, accept."""
    dest = move.draw(rng, state.model)
    u, log_q = proposal.sample(rng, state, dest)
    params, u_back, log_jac = jump.forward(state.params, u, state.model, dest)
    cand = ChainState(dest, params)
    lt_y = target.log_target(cand)
    if lt_y == NEG_INF:
        return _finish(rng, state, cand, NEG_INF)
    lt_x = target.log_target(state) if log_target_state is None else log_target_state
    log_q_back = proposal.log_density(cand, state.model, u_back)
    log_alpha = (lt_y + move.log_j(dest, state.model) + log_q_back
                 - lt_x - move.log_j(state.model, dest) - log_q + log_jac)
    return _finish(rng, state, cand, log_alpha)


@dataclass
class StepRecord:
    """Details of the last multiple-try step, filled when requested."""

    forward: TrialSet | None = None
    reverse: TrialSet | None = None
    log_alpha: float = NEG_INF


def multiple_try_step(rng: RngStream, state, k: int, source, weights: WeightScheme, target,
                      log_target_state: float | None = None, record: StepRecord | None = None):
    """Generalised multiple-try transition.

    Draws ``k`` trials, selects one by weight, builds the mirrored reverse set
    whose last element is the current state, and accepts with
    pi(y) T(y,x) p_x / (pi(x) T(x,y) p_y) |J|.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    fwd = source.forward(rng, state, k)
    lw = weights.log_weights(fwd, state, source, target)
    if np.all(lw == NEG_INF):
        return state, Outcome.DEGENERATE
    probs = selection_probabilities(lw)
    j = rng.categorical(probs)
    chosen = source.complete(rng, fwd[j])
    cand = chosen.state
    lt_y = target.log_target(cand)
    if lt_y == NEG_INF:
        return _finish(rng, state, cand, NEG_INF)
    rev = source.reverse(rng, cand, state, k)
    lw_rev = weights.log_weights(rev, cand, source, target)
    log_p_y = lw[j] - logsumexp(lw)
    log_p_x = lw_rev[-1] - logsumexp(lw_rev) if lw_rev[-1] != NEG_INF else NEG_INF
    lt_x = target.log_target(state) if log_target_state is None else log_target_state
    log_alpha = (lt_y + rev[-1].log_q + log_p_x) - (lt_x + chosen.log_q + log_p_y) + chosen.log_jac
    if record is not None:
        record.forward = TrialSet(fwd, lw, j)
        record.reverse = TrialSet(rev, lw_rev, len(rev) - 1)
        record.log_alpha = log_alpha
    return _finish(rng, state, cand, log_alpha)


def gmtm_step(rng: RngStream, state: ChainState, k: int, proposal, weights: WeightScheme, target,
              log_target_state: float | None = None, record: StepRecord | None = None):
    """Generalised multiple-try Metropolis update inside ``state.model``."""
    return multiple_try_step(rng, state, k, WithinModelSource(proposal), weights, target,
                             log_target_state, record)


def gmtrj_step(rng: RngStream, state: ChainState, move: MoveSpec, proposal, jump,
               weights: WeightScheme, target, log_target_state: float | None = None,
               record: StepRecord | None = None):
    """Generalised multiple-try reversible jump update."""
    return multiple_try_step(rng, state, move.k, JumpSource(move, proposal, jump), weights, target,
                             log_target_state, record)


# ---------------------------------------------------------------------------
# stock proposals


class GaussianWalk:
    """T(x, .) = N(x, scale^2 I) inside one model."""

    def __init__(self, scale: float):
        self.scale = float(scale)

    def sample(self, rng, state, to_model):
        draw = state.params + self.scale * rng.normal(size=state.dim)
        return draw, self.log_density(state, to_model, draw)

    def log_density(self, state, to_model, draw):
        z = (np.asarray(draw) - state.params) / self.scale
        return float(-0.5 * z @ z - len(z) * (math.log(self.scale) + 0.5 * math.log(2 * math.pi)))


class GaussianAux:
    """Auxiliary u ~ N(0, scale^2 I) with one entry per destination coordinate."""

    def __init__(self, scale: float, dims: Callable[[int], int] | dict):
        self.scale = float(scale)
        self.dims = dims if callable(dims) else dims.__getitem__
        self._log_norm = math.log(self.scale) + 0.5 * math.log(2 * math.pi)

    def sample(self, rng, state, to_model):
        u = self.scale * rng.normal(size=self.dims(to_model))
        return u, self.log_density(state, to_model, u)

    def log_density(self, state, to_model, draw):
        z = np.asarray(draw) / self.scale
        return float(-0.5 * z @ z - len(z) * self._log_norm)
