"""Exact verification of the samplers on small discrete spaces.

The kernels in :mod:`gmtrj.samplers` are driven by :class:`EnumeratingRng`,
which replays the step once for every combination of discrete random
choices (trial draws, destinations, selection, the accept coin) and carries
the probability of each path.  Summing paths gives the exact transition
matrix, on which detailed balance, stationarity and the k=1 reductions are
checked.  A deliberately broken multiple-try kernel serves as a negative
control for the checker itself.

Cost: a multiple-try row enumerates up to (D*S)^(2k-1) * k * 2 paths for S
support points and D destinations per model, so k is kept at 3 or below.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import betaln

from .core import NEG_INF, ChainState, RngStream, SwapJump
from .quad import LocalExpansion
from .samplers import (
    SAME_DESTINATION,
    VARIED_DESTINATION,
    CustomWeights,
    GaussianWalk,
    JumpSource,
    MoveSpec,
    gmtm_step,
    gmtrj_step,
    make_weights,
    mh_step,
    multiple_try_step,
    rj_step,
)

MAX_STATES = 20
BALANCE_TOL = 1e-10
REDUCTION_TOL = 1e-14
NEGATIVE_CONTROL_MIN = 1e-3
DEFAULT_BUDGET = 5_000_000


class ToySpaceError(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# toy spaces


@dataclass
class DiscreteToySpace:
    """Finite transdimensional target with explicit proposal tables.

    ``points[m]`` is the scalar support of model m and ``mass[m]`` its
    unnormalised target mass.  ``proposals[(m, m2)][i, j]`` is the chance of
    proposing point j of m2 from point i of m; (m, m) tables drive
    within-model moves.  ``jumps[m][m2]`` is the probability of choosing m2.
    Jumps swap the auxiliary draw in as the new parameter, so |J| = 1.
    """

    name: str
    points: dict
    mass: dict
    proposals: dict
    jumps: dict

    def __post_init__(self):
        self.models = tuple(sorted(self.points))
        self.states = [ChainState(m, [v]) for m in self.models for v in self.points[m]]
        if len(self.states) > MAX_STATES:
            raise ToySpaceError(f"{self.name}: {len(self.states)} states exceeds the limit of {MAX_STATES}")
        self.validate()
        self._index = {s.key(): i for i, s in enumerate(self.states)}
        self._logmass = {s.key(): math.log(self.mass[s.model][i])
                         for s in self.states for i in [self.points[s.model].index(s.params[0])]}

    def validate(self):
        for m in self.models:
            if len(self.mass[m]) != len(self.points[m]):
                raise ToySpaceError(f"{self.name}: model {m} has {len(self.points[m])} points but "
                                    f"{len(self.mass[m])} masses")
            if min(self.mass[m]) <= 0:
                raise ToySpaceError(f"{self.name}: masses of model {m} must be positive")
            if (m, m) not in self.proposals:
                raise ToySpaceError(f"{self.name}: missing within-model proposal for model {m}")
        for (a, b), tab in self.proposals.items():
            tab = np.asarray(tab, dtype=float)
            if tab.shape != (len(self.points[a]), len(self.points[b])):
                raise ToySpaceError(f"{self.name}: proposal {a} -> {b} has shape {tab.shape}")
            if np.any(tab <= 0) or np.any(np.abs(tab.sum(axis=1) - 1) > 1e-12):
                raise ToySpaceError(f"{self.name}: proposal {a} -> {b} rows must be positive and sum to 1")
            self.proposals[(a, b)] = tab
        for a, row in self.jumps.items():
            if abs(math.fsum(row.values()) - 1) > 1e-12:
                raise ToySpaceError(f"{self.name}: jump probabilities from {a} must sum to 1")
            for b, p in row.items():
                if p > 0 and self.jumps.get(b, {}).get(a, 0) <= 0:
                    raise ToySpaceError(f"{self.name}: jump {a} -> {b} has no reverse move")
                if p > 0 and (a, b) not in self.proposals:
                    raise ToySpaceError(f"{self.name}: jump {a} -> {b} has no proposal table")

    # target interface
    def index(self, state: ChainState) -> int:
        return self._index[state.key()]

    def log_target(self, state: ChainState) -> float:
        return self._logmass.get(state.key(), NEG_INF)

    @property
    def pi(self) -> np.ndarray:
        w = np.array([math.exp(self.log_target(s)) for s in self.states])
        return w / w.sum()

    def expansion(self, model, point) -> LocalExpansion:
        """Moment-matched Gaussian expansion of the model's mass."""
        x = np.asarray(self.points[model], dtype=float)
        w = np.asarray(self.mass[model], dtype=float)
        w = w / w.sum()
        mean = w @ x
        var = max(w @ (x - mean) ** 2, 1e-3)
        point = np.asarray(point, dtype=float)
        return LocalExpansion(point, -(point - mean) / var, np.array([[-1.0 / var]]))

    def embed(self, params, from_model, to_model):
        """Nearest support point of ``to_model``."""
        pts = np.asarray(self.points[to_model], dtype=float)
        return pts[[int(np.argmin(np.abs(pts - params[0])))]]

    def move_spec(self, k=1, policy=SAME_DESTINATION) -> MoveSpec:
        return MoveSpec({m: dict(r) for m, r in self.jumps.items()}, k=k, policy=policy)


class TableProposal:
    """Proposal reading a toy space's tables; used both within and across models."""

    def __init__(self, space: DiscreteToySpace):
        self.space = space

    def sample(self, rng, state, to_model):
        row = self.space.proposals[(state.model, to_model)][self.space.points[state.model].index(state.params[0])]
        j = rng.categorical(row)
        return np.array([self.space.points[to_model][j]], dtype=float), math.log(row[j])

    def log_density(self, state, to_model, draw):
        pts = self.space.points[to_model]
        if len(draw) != 1 or float(draw[0]) not in pts:
            return NEG_INF
        tab = self.space.proposals[(state.model, to_model)]
        row = self.space.points[state.model].index(state.params[0])
        return math.log(tab[row, pts.index(float(draw[0]))])


def parse_toy(text: str, name: str = "toy") -> DiscreteToySpace:
    """Read a toy space from INI-style text.

    Sections ``[model M]`` (keys ``points``, ``mass``), ``[jumps]`` (keys
    ``A -> B`` with a probability) and ``[proposal A -> B]`` (key ``rows``,
    one whitespace-separated row per line).
    """
    cp = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",))
    try:
        cp.read_string(text, source=name)
    except configparser.Error as exc:
        raise ToySpaceError(f"{name}: {exc}") from None
    points, mass, proposals, jumps = {}, {}, {}, {}
    for sec in cp.sections():
        words = sec.split()
        try:
            if words[0] == "model" and len(words) == 2:
                m = int(words[1])
                points[m] = [float(v) for v in cp[sec]["points"].split()]
                mass[m] = [float(v) for v in cp[sec]["mass"].split()]
            elif words[0] == "jumps":
                for key, value in cp[sec].items():
                    a, b = _arrow(key)
                    jumps.setdefault(a, {})[b] = float(value)
            elif words[0] == "proposal":
                a, b = _arrow(" ".join(words[1:]))
                rows = [r.split() for r in cp[sec]["rows"].strip().splitlines() if r.strip()]
                proposals[(a, b)] = np.array(rows, dtype=float)
            else:
                raise ToySpaceError(f"{name}: unknown section [{sec}]")
        except (KeyError, ValueError) as exc:
            if isinstance(exc, ToySpaceError):
                raise
            raise ToySpaceError(f"{name}: bad section [{sec}]: {exc}") from None
    for m in points:
        jumps.setdefault(m, {})
    return DiscreteToySpace(name, points, mass, proposals, jumps)


def _arrow(text):
    a, sep, b = text.partition("->")
    if not sep:
        raise ValueError(f"expected 'A -> B', got {text!r}")
    return int(a), int(b)


def load_toy(path) -> DiscreteToySpace:
    path = Path(path)
    return parse_toy(path.read_text(), path.stem)


def bundled_toys() -> list[DiscreteToySpace]:
    root = resources.files("gmtrj.data").joinpath("toys")
    files = sorted(p for p in root.iterdir() if p.name.endswith(".toy"))
    return [parse_toy(p.read_text(), p.name[:-4]) for p in files]


# ---------------------------------------------------------------------------
# enumeration


class EnumeratingRng:
    """Stand-in for :class:`RngStream` that follows a scripted path.

    Choices beyond the script take the first positive option and record the
    branch so the caller can explore the alternatives.  The accept coin is
    not branched: it always says yes and stores the acceptance probability,
    which the caller splits between candidate and current state (every
    kernel tosses the coin as its last draw).  Only discrete draws are
    supported.
    """

    def __init__(self, script: Sequence[int]):
        self.script = script
        self.taken: list[int] = []
        self.options: list[list[int]] = []
        self.prob = 1.0
        self.accept_prob: float | None = None

    def categorical(self, probs) -> int:
        if self.accept_prob is not None:
            raise RuntimeError("draw after the accept coin")
        probs = probs.tolist() if isinstance(probs, np.ndarray) else list(probs)
        total = math.fsum(probs)
        pos = len(self.taken)
        live = [i for i, p in enumerate(probs) if p > 0]
        idx = self.script[pos] if pos < len(self.script) else live[0]
        self.taken.append(idx)
        self.options.append(live)
        self.prob *= probs[idx] / total
        return idx

    def accept(self, log_alpha: float) -> bool:
        self.accept_prob = 1.0 if log_alpha >= 0 else (0.0 if log_alpha == NEG_INF else math.exp(log_alpha))
        return True

    def _unsupported(self, *args, **kwargs):
        raise TypeError("enumeration supports only categorical draws and accept coins")

    uniform = normal = beta = dirichlet = integers = _unsupported


def enumerate_paths(step: Callable[[EnumeratingRng], object], current):
    """Yield (probability, next state) pairs covering every path of ``step``.

    Paths that end with a coin contribute to both the candidate and
    ``current``; paths that stop early (degenerate trial sets) return
    ``current`` outright.
    """
    stack = [[]]
    while stack:
        script = stack.pop()
        rng = EnumeratingRng(script)
        result = step(rng)
        for pos in range(len(script), len(rng.taken)):
            for alt in rng.options[pos][1:]:
                stack.append(rng.taken[:pos] + [alt])
        a = rng.accept_prob
        if a is None:
            yield rng.prob, result
        else:
            if a > 0:
                yield rng.prob * a, result
            if a < 1:
                yield rng.prob * (1.0 - a), current


@dataclass(frozen=True)
class SamplerConfig:
    """Which kernel to enumerate: MH, GMTM, RJ, GMTRJ or the broken GMTRJ."""

    kind: str
    weights: str | None = None
    k: int = 1
    policy: str = SAME_DESTINATION

    def label(self) -> str:
        parts = [self.kind]
        if self.weights:
            parts.append(self.weights)
        if self.kind.startswith("GMTRJ"):
            parts.append("same" if self.policy == SAME_DESTINATION else "varied")
        return "/".join(parts)


KINDS = ("MH", "GMTM", "RJ", "GMTRJ", "GMTRJ-broken")
SCHEMES = ("MTM-I", "MTM-inv", "GMTM-quad", "custom")


def custom_weights(space: DiscreteToySpace) -> CustomWeights:
    """An arbitrary positive weight, neither pi/T nor pi*T."""
    def fn(y, x):
        return 0.5 * space.log_target(y) + 0.3 * math.sin(3.0 * y.params[0] - x.params[0]) + 0.2 * y.model
    return CustomWeights(fn, "custom")


def weights_for(space, tag):
    return custom_weights(space) if tag == "custom" else make_weights(tag)


class OmitCurrentReverse(JumpSource):
    """Broken source: the reverse set is k fresh draws, without the current state."""

    def reverse(self, rng, anchor, current, k):
        dests = self._dests(rng, anchor.model, k, mirror=current.model)
        return [self.draw(rng, anchor, d) for d in dests]


def make_step(space: DiscreteToySpace, cfg: SamplerConfig, state: ChainState):
    """Closure running one kernel application from ``state`` with a given rng."""
    prop = TableProposal(space)
    jump = SwapJump()
    if cfg.kind not in KINDS:
        raise ValueError(f"unknown sampler kind {cfg.kind!r}")
    if cfg.kind == "MH":
        return lambda rng: mh_step(rng, state, prop, space)[0]
    if cfg.kind == "RJ":
        move = space.move_spec()
        return lambda rng: rj_step(rng, state, move, prop, jump, space)[0]
    w = weights_for(space, cfg.weights)
    if cfg.kind == "GMTM":
        return lambda rng: gmtm_step(rng, state, cfg.k, prop, w, space)[0]
    move = space.move_spec(cfg.k, cfg.policy)
    if cfg.kind == "GMTRJ":
        return lambda rng: gmtrj_step(rng, state, move, prop, jump, w, space)[0]
    source = OmitCurrentReverse(move, prop, jump)
    return lambda rng: multiple_try_step(rng, state, cfg.k, source, w, space)[0]


def path_bound(space: DiscreteToySpace, cfg: SamplerConfig) -> int:
    """Upper bound on enumerated paths per row."""
    s = max(len(p) for p in space.points.values())
    d = max(1, max(len(r) for r in space.jumps.values()))
    if cfg.kind == "MH":
        return 2 * s
    if cfg.kind == "RJ":
        return 2 * s * d
    per = s if cfg.kind == "GMTM" else s * d
    return 2 * cfg.k * per ** (2 * cfg.k - 1)


def enumerate_kernel(space: DiscreteToySpace, cfg: SamplerConfig, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Exact transition matrix over ``space.states`` (row-stochastic)."""
    n = len(space.states)
    cost = n * path_bound(space, cfg)
    if cost > budget:
        raise BudgetExceeded(f"{space.name} with {cfg.label()} k={cfg.k} may need {cost} paths; budget is {budget}")
    P = np.zeros((n, n))
    for i, x in enumerate(space.states):
        terms: dict[int, list[float]] = {}
        for prob, y in enumerate_paths(make_step(space, cfg, x), x):
            terms.setdefault(space.index(y), []).append(prob)
        for j, vals in terms.items():
            P[i, j] = math.fsum(vals)
    return P


def check_detailed_balance(space: DiscreteToySpace, P: np.ndarray) -> float:
    """max |pi(x) P(x,y) - pi(y) P(y,x)| with pi normalised."""
    flux = space.pi[:, None] * P
    return float(np.max(np.abs(flux - flux.T)))


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Left eigenvector of P for the eigenvalue closest to 1, normalised."""
    vals, vecs = np.linalg.eig(P.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return v / v.sum()


def simulate_row(space: DiscreteToySpace, cfg: SamplerConfig, start: ChainState, n: int, seed: int = 0) -> np.ndarray:
    """Empirical next-state counts from ``n`` independent steps out of ``start``."""
    rng = RngStream(seed)
    step = make_step(space, cfg, start)
    counts = np.zeros(len(space.states), dtype=np.int64)
    for _ in range(n):
        counts[space.index(step(rng))] += 1
    return counts


# ---------------------------------------------------------------------------
# verification suite


@dataclass
class CheckResult:
    space: str
    sampler: str
    k: int
    check: str
    value: float
    threshold: float
    expect_failure: bool = False

    @property
    def passed(self) -> bool:
        ok = self.value <= self.threshold
        return not ok if self.expect_failure else ok

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        tag = " (negative control, violation expected)" if self.expect_failure else ""
        return (f"{status} {self.space:<14} {self.sampler:<26} k={self.k} {self.check:<11} "
                f"max={self.value:.3e}{tag}")


def sampler_grid(ks=(1, 2, 3)):
    yield SamplerConfig("MH"), None
    yield SamplerConfig("RJ"), None
    for k in ks:
        for w in SCHEMES:
            yield SamplerConfig("GMTM", w, k), "MH"
            for policy in (SAME_DESTINATION, VARIED_DESTINATION):
                yield SamplerConfig("GMTRJ", w, k, policy), "RJ"


def verify(spaces: Sequence[DiscreteToySpace] | None = None, ks=(1, 2, 3),
           budget: int = DEFAULT_BUDGET) -> list[CheckResult]:
    """Detailed balance for every kernel, k=1 reductions, stationarity and
    the negative control, on every space."""
    spaces = bundled_toys() if spaces is None else spaces
    results = []
    for space in spaces:
        base = {}
        for cfg, ref in sampler_grid(ks):
            P = enumerate_kernel(space, cfg, budget)
            label = cfg.label()
            rowerr = float(np.max(np.abs(P.sum(axis=1) - 1)))
            results.append(CheckResult(space.name, label, cfg.k, "rows", rowerr, 1e-12))
            results.append(CheckResult(space.name, label, cfg.k, "balance", check_detailed_balance(space, P),
                                       BALANCE_TOL))
            if ref is None:
                base[cfg.kind] = P
            elif cfg.k == 1:
                results.append(CheckResult(space.name, label, 1, f"equals {ref}",
                                           float(np.max(np.abs(P - base[ref]))), REDUCTION_TOL))
            if cfg.kind == "GMTRJ" and cfg.k == max(ks):
                mix = 0.5 * (base["MH"] + P)
                results.append(CheckResult(space.name, label + "+MH", cfg.k, "stationary",
                                           float(np.max(np.abs(stationary_distribution(mix) - space.pi))),
                                           BALANCE_TOL))
        for k in [k for k in ks if k >= 2]:
            cfg = SamplerConfig("GMTRJ-broken", "MTM-inv", k)
            P = enumerate_kernel(space, cfg, budget)
            results.append(CheckResult(space.name, cfg.label(), k, "balance", check_detailed_balance(space, P),
                                       NEGATIVE_CONTROL_MIN, expect_failure=True))
    return results


# ---------------------------------------------------------------------------
# conjugate two-model case


@dataclass(frozen=True)
class BetaBinomialCase:
    """M1: p fixed at ``p0``; M2: p ~ Beta(a, b).  y successes in n trials."""

    y: int = 7
    n: int = 10
    p0: float = 0.5
    a: float = 1.0
    b: float = 1.0
    prior_m1: float = 0.5


def exact_model_posterior(case: BetaBinomialCase = BetaBinomialCase()) -> np.ndarray:
    """(P(M1|y), P(M2|y)) from the closed-form marginal likelihoods."""
    log_m1 = case.y * math.log(case.p0) + (case.n - case.y) * math.log1p(-case.p0)
    log_m2 = betaln(case.y + case.a, case.n - case.y + case.b) - betaln(case.a, case.b)
    l1 = math.log(case.prior_m1) + log_m1
    l2 = math.log1p(-case.prior_m1) + log_m2
    top = max(l1, l2)
    w = np.exp(np.array([l1, l2]) - top)
    return w / w.sum()


class BetaBinomialTarget:
    """Joint posterior over (model, p) for :class:`BetaBinomialCase`."""

    def __init__(self, case: BetaBinomialCase):
        self.case = case
        c = case
        self._l1 = math.log(c.prior_m1) + c.y * math.log(c.p0) + (c.n - c.y) * math.log1p(-c.p0)
        self._lp2 = math.log1p(-c.prior_m1) - betaln(c.a, c.b)

    def log_target(self, state: ChainState) -> float:
        if state.model == 1:
            return self._l1
        p = float(state.params[0])
        if not 0.0 < p < 1.0:
            return NEG_INF
        c = self.case
        return (self._lp2 + (c.y + c.a - 1) * math.log(p) + (c.n - c.y + c.b - 1) * math.log1p(-p))


class BetaAux:
    """Auxiliary for the two-model jump: Beta(a, b) draw into M2, nothing into M1."""

    def __init__(self, a=2.0, b=2.0):
        self.a, self.b = a, b
        self._norm = betaln(a, b)

    def sample(self, rng, state, to_model):
        if to_model == 1:
            return np.empty(0), 0.0
        u = rng.beta(self.a, self.b, size=1)
        return u, self.log_density(state, to_model, u)

    def log_density(self, state, to_model, draw):
        if to_model == 1:
            return 0.0 if len(draw) == 0 else NEG_INF
        p = float(draw[0])
        if not 0.0 < p < 1.0:
            return NEG_INF
        return (self.a - 1) * math.log(p) + (self.b - 1) * math.log1p(-p) - self._norm


def run_two_model_chain(algorithm: str = "RJ", iterations: int = 100_000, seed: int = 0, k: int = 5,
                        weights: str = "MTM-inv", case: BetaBinomialCase = BetaBinomialCase(),
                        walk_scale: float = 0.2) -> np.ndarray:
    """Model indices of a chain alternating a random-walk update of p and a jump."""
    target = BetaBinomialTarget(case)
    rng = RngStream(seed)
    aux = BetaAux()
    jump = SwapJump()
    walk = GaussianWalk(walk_scale)
    if algorithm == "RJ":
        move = MoveSpec({1: {2: 1.0}, 2: {1: 1.0}})
    elif algorithm == "GMTRJ":
        move = MoveSpec({1: {2: 1.0}, 2: {1: 1.0}}, k=k)
        w = make_weights(weights)
    else:
        raise ValueError(f"algorithm must be RJ or GMTRJ, got {algorithm!r}")
    state = ChainState(2, [case.y / case.n])
    out = np.empty(iterations, dtype=np.int8)
    for t in range(iterations):
        if state.model == 2:
            state, _ = mh_step(rng, state, walk, target)
        if algorithm == "RJ":
            state, _ = rj_step(rng, state, move, aux, jump, target)
        else:
            state, _ = gmtrj_step(rng, state, move, aux, jump, w, target)
        out[t] = state.model
    return out


# ---------------------------------------------------------------------------
# chains on toy spaces


def resolve_toy(name_or_path: str) -> DiscreteToySpace:
    """A bundled toy by name, or a toy file by path."""
    path = Path(name_or_path)
    if path.suffix == ".toy" or path.exists():
        if not path.exists():
            raise FileNotFoundError(f"toy space file {path} not found")
        return load_toy(path)
    for space in bundled_toys():
        if space.name == name_or_path:
            return space
    names = ", ".join(s.name for s in bundled_toys())
    raise FileNotFoundError(f"no bundled toy space named {name_or_path!r}; available: {names}")


def run_toy_chain(space: DiscreteToySpace, algorithm: str = "RJ", weights: str = "MTM-inv", k: int = 3,
                  policy: str = SAME_DESTINATION, iterations: int = 20_000, burn_in: int = 2_000,
                  seed: int = 0, stream: int = 0, keep_burn_in: bool = False):
    """Alternate a table MH update and a jump; returns a diagnostics Trace."""
    import time

    from .diagnostics import Trace

    rng = RngStream(seed, stream)
    prop = TableProposal(space)
    jump = SwapJump()
    if algorithm == "RJ":
        move = space.move_spec()
    elif algorithm == "GMTRJ":
        move = space.move_spec(k, policy)
        w = weights_for(space, weights)
    else:
        raise ValueError(f"algorithm must be RJ or GMTRJ, got {algorithm!r}")
    state = space.states[0]
    models = np.empty(iterations, dtype=np.int64)
    outcomes = np.empty(iterations, dtype="U1")
    start = time.process_time()
    for t in range(iterations):
        state, _ = mh_step(rng, state, prop, space)
        if algorithm == "RJ":
            state, res = rj_step(rng, state, move, prop, jump, space)
        else:
            state, res = gmtrj_step(rng, state, move, prop, jump, w, space)
        models[t] = state.model
        outcomes[t] = res.code
    cpu = time.process_time() - start
    keep = 0 if keep_burn_in else burn_in
    meta = {"case": "toy", "algorithm": algorithm, "space": space.name, "seed": seed, "stream": stream,
            "iterations": iterations}
    return Trace(models[keep:], np.full(iterations - keep, "jump"), outcomes[keep:], burn_in - keep, cpu, meta)


def model_marginals(space: DiscreteToySpace) -> dict:
    pi = space.pi
    return {m: float(sum(p for s, p in zip(space.states, pi) if s.model == m)) for m in space.models}
