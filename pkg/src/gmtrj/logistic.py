"""Bayesian variable selection over five nested logistic regressions for a
2x2 table of binomial counts."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.special import expit, gammaln, log_expit

from .core import NEG_INF, ChainState, DimensionError, NestedEmbedding, Outcome, RngStream, logsumexp
from .quad import LocalExpansion
from .samplers import (
    SAME_DESTINATION,
    GaussianAux,
    GaussianWalk,
    MoveSpec,
    QuadWeights,
    gmtm_step,
    gmtrj_step,
    make_weights,
    rj_step,
    selection_probabilities,
    uniform_adjacent,
)

# pool coordinates: intercept, condition, treatment, interaction
MODEL_COLUMNS = {1: (0,), 2: (0, 1), 3: (0, 2), 4: (0, 1, 2), 5: (0, 1, 2, 3)}
MODEL_NAMES = {1: "mu", 2: "mu+A", 3: "mu+B", 4: "mu+A+B", 5: "mu+A+B+AB"}
ADJACENT = {1: (2, 3), 2: (1, 4), 3: (1, 4), 4: (2, 3, 5), 5: (4,)}
ALGORITHMS = ("RJ", "MTRJ-I", "MTRJ-inv", "GMTRJ-quad")
SIGMA_GRID = (0.1, 0.2, 0.5, 1.0, 1.5, 2.0, 2.5)
K_GRID = (10, 50, 100)

DEFAULT_DATA = "dellaportas_forster.csv"
CODINGS = {"sum": (-1.0, 1.0), "corner": (0.0, 1.0)}


class DataFileError(FileNotFoundError):
    pass


@dataclass(frozen=True)
class BinomialTable:
    condition: np.ndarray
    treatment: np.ndarray
    survivals: np.ndarray
    totals: np.ndarray

    def __post_init__(self):
        if np.any(self.survivals < 0) or np.any(self.survivals > self.totals):
            raise ValueError("survivals must lie between 0 and the cell total")

    @property
    def size(self) -> int:
        return int(self.totals.sum())


def load_table(path: str | Path | None = None) -> BinomialTable:
    """Read ``condition,treatment,survivals,total`` rows; '#' lines are comments."""
    if path is None:
        handle = resources.files("gmtrj.data").joinpath(DEFAULT_DATA).open()
    else:
        path = Path(path)
        if not path.exists():
            raise DataFileError(
                f"logistic data file {path} not found; point 'data' at a CSV with columns "
                f"condition,treatment,survivals,total or omit it to use the bundled table"
            )
        handle = path.open()
    with handle:
        rows = list(csv.DictReader(line for line in handle if not line.lstrip().startswith("#")))
    cols = {key: np.array([int(r[key]) for r in rows]) for key in ("condition", "treatment", "survivals", "total")}
    return BinomialTable(cols["condition"], cols["treatment"], cols["survivals"], cols["total"])


class LogisticModelSpace:
    """Posterior over (model, coefficients) for the five logistic models.

    Factors use sum-to-zero coding by default (level 1 -> -1, level 2 -> +1);
    ``coding="corner"`` gives the level-1-as-baseline version (0/1).  Each
    coefficient has an independent N(0, prior_var) prior and models are
    equally likely a priori.  Binomial coefficients are dropped unless
    ``binomial_constant`` is set.
    """

    def __init__(self, table: BinomialTable | None = None, prior_var: float = 8.0,
                 binomial_constant: bool = False, coding: str = "sum"):
        self.table = table if table is not None else load_table()
        self.prior_var = float(prior_var)
        if coding not in CODINGS:
            raise ValueError(f"coding must be one of {tuple(CODINGS)}, got {coding!r}")
        self.coding = coding
        low, high = CODINGS[coding]
        a = np.where(self.table.condition == 2, high, low)
        b = np.where(self.table.treatment == 2, high, low)
        self.design = np.column_stack([np.ones_like(a), a, b, a * b])
        self.y = self.table.survivals.astype(float)
        self.n = self.table.totals.astype(float)
        self.models = tuple(MODEL_COLUMNS)
        self.embedding = NestedEmbedding(MODEL_COLUMNS, ADJACENT)
        self._X = {m: np.ascontiguousarray(self.design[:, cols]) for m, cols in MODEL_COLUMNS.items()}
        self._log_model_prior = -math.log(len(MODEL_COLUMNS))
        self._log_prior_norm = -0.5 * math.log(2 * math.pi * self.prior_var)
        self._const = 0.0
        if binomial_constant:
            self._const = float(np.sum(gammaln(self.n + 1) - gammaln(self.y + 1) - gammaln(self.n - self.y + 1)))

    def dim(self, model: int) -> int:
        return len(MODEL_COLUMNS[model])

    def embed(self, params, from_model, to_model):
        return self.embedding.embed(params, from_model, to_model)

    def _check(self, model, beta):
        if model not in MODEL_COLUMNS:
            raise DimensionError(f"unknown model {model}")
        if beta.shape[-1] != self.dim(model):
            raise DimensionError(f"model {model} has {self.dim(model)} coefficients, got {beta.shape[-1]}")

    def log_posterior(self, model: int, beta) -> float:
        beta = np.asarray(beta, dtype=float)
        self._check(model, beta)
        return float(self._log_posterior_rows(model, beta[None, :])[0])

    def _log_posterior_rows(self, model, betas):
        eta = betas @ self._X[model].T
        loglik = log_expit(eta) @ self.y + log_expit(-eta) @ (self.n - self.y)
        logprior = -0.5 * np.sum(betas * betas, axis=1) / self.prior_var + betas.shape[1] * self._log_prior_norm
        return loglik + logprior + self._log_model_prior + self._const

    def log_target(self, state: ChainState) -> float:
        return self.log_posterior(state.model, state.params)

    def log_target_many(self, states):
        out = np.empty(len(states))
        groups: dict[int, list[int]] = {}
        for i, s in enumerate(states):
            groups.setdefault(s.model, []).append(i)
        for model, idx in groups.items():
            betas = np.array([states[i].params for i in idx]).reshape(len(idx), -1)
            self._check(model, betas)
            out[idx] = self._log_posterior_rows(model, betas)
        return out

    def score_and_curvature(self, model: int, beta) -> LocalExpansion:
        """Analytic gradient and Hessian of the log posterior."""
        beta = np.asarray(beta, dtype=float)
        self._check(model, beta)
        X = self._X[model]
        p = expit(X @ beta)
        score = X.T @ (self.y - self.n * p) - beta / self.prior_var
        w = self.n * p * (1.0 - p)
        curvature = -(X.T * w) @ X - np.eye(len(beta)) / self.prior_var
        return LocalExpansion(beta.copy(), score, curvature)

    expansion = score_and_curvature


# ---------------------------------------------------------------------------
# experiment


@dataclass
class LogisticConfig:
    algorithm: str = "RJ"
    sigma_p: float = 0.5
    k: int = 10
    iterations: int = 200_000
    burn_in: int = 20_000
    seed: int = 0
    stream: int = 0
    within_trials: int | None = None
    policy: str = "same-destination"
    data: str | None = None
    keep_burn_in: bool = False
    engine: str = "fast"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.iterations > self.burn_in >= 0:
            raise ValueError("need iterations > burn_in >= 0")
        if self.k < 1 or self.sigma_p <= 0:
            raise ValueError("k must be >= 1 and sigma_p > 0")
        if self.engine not in ("fast", "generic"):
            raise ValueError("engine must be 'fast' or 'generic'")

    @property
    def trials_within(self) -> int:
        return self.k if self.within_trials is None else self.within_trials


@dataclass
class ChainTrace:
    """Per-sweep record: model after the sweep, jump move label and outcomes."""

    models: np.ndarray
    moves: np.ndarray
    outcomes: np.ndarray
    within: np.ndarray
    burn_in: int = 0
    cpu_seconds: float = 0.0
    meta: dict = field(default_factory=dict)


def run_chain(config: LogisticConfig, space: LogisticModelSpace | None = None) -> ChainTrace:
    """Run one chain: a GMTM-quad parameter update then a model jump per sweep.

    ``config.engine`` picks the array implementation (default, same-destination
    only) or the generic kernels; both give the same chain for the same seed.
    """
    if space is None:
        space = LogisticModelSpace(load_table(config.data))
    rng = RngStream(config.seed, config.stream)
    k_jump = 1 if config.algorithm == "RJ" else config.k
    move = MoveSpec(uniform_adjacent(ADJACENT), k=k_jump, policy=config.policy)

    n = config.iterations
    models = np.empty(n, dtype=np.int8)
    outcomes = np.empty(n, dtype="U1")
    within = np.empty(n, dtype="U1")

    start = time.process_time()
    if config.engine == "fast" and config.policy == SAME_DESTINATION:
        _loop_fast(rng, space, config, move, models, outcomes, within)
    else:
        _loop_generic(rng, space, config, move, models, outcomes, within)
    cpu = time.process_time() - start

    keep = 0 if config.keep_burn_in else config.burn_in
    return ChainTrace(models[keep:], np.full(n - keep, "jump", dtype="U4"), outcomes[keep:], within[keep:],
                      burn_in=config.burn_in - keep, cpu_seconds=cpu,
                      meta={"case": "logistic", "algorithm": config.algorithm, "sigma_p": config.sigma_p,
                            "k": config.k, "seed": config.seed, "stream": config.stream,
                            "iterations": n})


def _loop_fast(rng, space, config, move, models, outcomes, within):
    from . import _logistic_fast as fast

    size = 1 + max(MODEL_COLUMNS)
    pool = space.design.shape[1]
    cols = np.zeros((size, pool), dtype=np.int64)
    dims = np.zeros(size, dtype=np.int64)
    nbrs = np.zeros((size, pool), dtype=np.int64)
    nnb = np.zeros(size, dtype=np.int64)
    logj = np.full((size, size), NEG_INF)
    for m, c in MODEL_COLUMNS.items():
        cols[m, :len(c)] = c
        dims[m] = len(c)
        dests, probs = move.destinations(m)
        nbrs[m, :len(dests)] = dests
        nnb[m] = len(dests)
        if not np.allclose(probs, 1.0 / len(dests), rtol=0, atol=0):
            raise ValueError("compiled sweep assumes uniform jump probabilities")
        for d in dests:
            logj[m, d] = move.log_j(m, d)
    alg = {"RJ": fast.ALG_RJ, "MTRJ-I": fast.ALG_MTM_I, "MTRJ-inv": fast.ALG_MTM_INV,
           "GMTRJ-quad": fast.ALG_QUAD}[config.algorithm]
    codes = np.empty(len(models), dtype=np.int8)
    wcodes = np.empty(len(models), dtype=np.int8)
    const = space._log_model_prior + space._const
    fast.run_sweeps(rng.generator, alg, config.sigma_p, move.k, config.trials_within, 5, np.zeros(pool),
                    nbrs, nnb, logj, space.design, cols, dims, space.y, space.n, space.prior_var, const,
                    models, codes, wcodes)
    letters = np.array([Outcome(i).code for i in range(3)])
    outcomes[:] = letters[codes]
    within[:] = letters[wcodes]


def _loop_generic(rng, space, config, move, models, outcomes, within):
    walk = GaussianWalk(config.sigma_p)
    aux = GaussianAux(config.sigma_p, space.dim)
    within_weights = QuadWeights()
    jump_weights = None if config.algorithm == "RJ" else make_weights(config.algorithm)
    jump = space.embedding
    state = ChainState(5, np.zeros(4))
    lt = space.log_target(state)
    for t in range(len(models)):
        new, res = gmtm_step(rng, state, config.trials_within, walk, within_weights, space, lt)
        within[t] = res.code
        if new is not state:
            state, lt = new, space.log_target(new)
        if jump_weights is None:
            new, res = rj_step(rng, state, move, aux, jump, space, lt)
        else:
            new, res = gmtrj_step(rng, state, move, aux, jump, jump_weights, space, lt)
        outcomes[t] = res.code
        if new is not state:
            state, lt = new, space.log_target(new)
        models[t] = state.model
