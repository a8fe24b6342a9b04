"""Shared building blocks: chain states, randomness, and the protocols that
target densities, proposals and jump maps implement."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

NEG_INF = -math.inf


class Outcome(enum.IntEnum):
    """Result of one kernel application; truthy only when accepted."""

    REJECTED = 0
    ACCEPTED = 1
    DEGENERATE = 2

    def __bool__(self) -> bool:
        return self is Outcome.ACCEPTED

    @property
    def code(self) -> str:
        return _OUTCOME_CODES[self]

    @classmethod
    def from_code(cls, code: str) -> "Outcome":
        return {v: k for k, v in _OUTCOME_CODES.items()}[code]


_OUTCOME_CODES = {Outcome.ACCEPTED: "A", Outcome.REJECTED: "R", Outcome.DEGENERATE: "D"}


class DimensionError(ValueError):
    """A parameter vector does not match the dimension of its model."""


class UnreachableModelError(ValueError):
    """A jump was requested between models that are not adjacent."""


@dataclass(frozen=True, eq=False)
class ChainState:
    """Current model index together with that model's parameter vector."""

    model: int
    params: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        params = np.asarray(self.params, dtype=float)
        if params.ndim != 1:
            params = params.reshape(-1)
        params.flags.writeable = False
        object.__setattr__(self, "params", params)

    @property
    def dim(self) -> int:
        return self.params.shape[0]

    def key(self) -> tuple:
        """Hashable identity, used when states are enumerated."""
        return (self.model, tuple(self.params.tolist()))

    def __eq__(self, other):
        if not isinstance(other, ChainState):
            return NotImplemented
        return self.model == other.model and np.array_equal(self.params, other.params)

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"ChainState(model={self.model}, params={self.params.tolist()})"


def check_log_value(value: float) -> float:
    """Pass finite values and -inf through; NaN is a bug, never a density."""
    value = float(value)
    if math.isnan(value):
        raise FloatingPointError("log density evaluated to NaN")
    if value == math.inf:
        raise FloatingPointError("log density evaluated to +inf")
    return value


def logsumexp(values) -> float:
    """Max-shifted log-sum-exp that tolerates -inf entries."""
    arr = np.asarray(values, dtype=float)
    top = arr.max()
    if top == NEG_INF:
        return NEG_INF
    return float(top + np.log(np.sum(np.exp(arr - top))))


class RngStream:
    """Seeded random stream identified by ``(seed, stream_id)``.

    Backed by numpy's PCG64 seeded through a ``SeedSequence`` whose spawn key
    is the stream id, so distinct ids give independent streams and the same
    pair always reproduces the same draws.
    """

    def __init__(self, seed: int = 0, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def substream(self, index: int) -> "RngStream":
        """Derived stream, deterministic in (seed, stream_id, index)."""
        child = RngStream.__new__(RngStream)
        child.seed = self.seed
        child.stream_id = self.stream_id
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, int(index)))
        child.generator = np.random.Generator(np.random.PCG64(seq))
        return child

    # scalar and vector draws
    def uniform(self, size=None):
        return self.generator.random(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def beta(self, a, b, size=None):
        return self.generator.beta(a, b, size)

    def dirichlet(self, alpha):
        return self.generator.dirichlet(alpha)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def categorical(self, probs: Sequence[float]) -> int:
        """Index drawn by cumulative-sum inversion with a single uniform."""
        cum = np.cumsum(probs)
        u = self.generator.random() * cum[-1]
        idx = int(np.searchsorted(cum, u, side="right"))
        # guard against u landing on the total after rounding
        idx = min(idx, len(cum) - 1)
        while probs[idx] <= 0.0:
            idx -= 1
        return idx

    def accept(self, log_alpha: float) -> bool:
        """Metropolis coin: True with probability min(1, exp(log_alpha))."""
        if log_alpha >= 0.0:
            return True
        if log_alpha == NEG_INF:
            return False
        return math.log(self.generator.random()) < log_alpha


@runtime_checkable
class TargetDensity(Protocol):
    """Unnormalised log posterior over (model, parameters).

    Implementations return ``NEG_INF`` outside the support and raise
    :class:`DimensionError` for malformed states.
    """

    def log_target(self, state: ChainState) -> float: ...


def log_target_many(target, states: Sequence[ChainState]) -> np.ndarray:
    """Evaluate a target on many states, using a batched method if offered."""
    batched = getattr(target, "log_target_many", None)
    if batched is not None:
        return np.asarray(batched(states), dtype=float)
    return np.array([target.log_target(s) for s in states], dtype=float)


class ProposalKernel(Protocol):
    """Proposal T(state, .) toward a destination model.

    For within-model kernels the drawn vector is the candidate parameter
    vector; for jump moves it is the auxiliary vector ``u`` that a
    :class:`JumpMap` turns into destination parameters.
    ``log_density`` is the exact log density of ``sample``.
    """

    def sample(self, rng: RngStream, state: ChainState, to_model: int) -> tuple[np.ndarray, float]: ...

    def log_density(self, state: ChainState, to_model: int, draw: np.ndarray) -> float: ...


class JumpMap(Protocol):
    """Invertible map (params, u) -> (params', u') between two models.

    ``forward(params', u', to_model, from_model)`` inverts
    ``forward(params, u, from_model, to_model)`` and the two log Jacobians
    sum to zero.
    """

    def forward(self, params: np.ndarray, u: np.ndarray, from_model: int, to_model: int) -> tuple[np.ndarray, np.ndarray, float]: ...

    def aux_for(self, params: np.ndarray, from_model: int, to_params: np.ndarray, to_model: int) -> np.ndarray: ...


def jump_transform(jump: JumpMap, state: ChainState, u, target: int):
    """Apply ``jump`` to ``state``; returns (new params, u', log|J|)."""
    return jump.forward(state.params, np.asarray(u, dtype=float), state.model, target)


class NestedEmbedding:
    """Jump map for nested models whose coefficients index a shared pool.

    ``columns[m]`` lists the pool coordinates used by model ``m``.  Moving to
    ``m'`` embeds the current vector (shared coordinates kept, missing ones at
    zero) and adds ``u`` over every destination coordinate; the reverse
    auxiliary is what the reverse move would have to add.  The map is linear
    with an integer inverse, so log|J| = 0.
    """

    def __init__(self, columns: dict[int, Sequence[int]], adjacency: dict[int, Sequence[int]] | None = None):
        self.columns = {m: tuple(int(c) for c in cols) for m, cols in columns.items()}
        self.pool = 1 + max((max(c) for c in self.columns.values() if c), default=-1)
        self.adjacency = None if adjacency is None else {m: set(v) for m, v in adjacency.items()}

    def dim(self, model: int) -> int:
        return len(self.columns[model])

    def embed(self, params: np.ndarray, from_model: int, to_model: int) -> np.ndarray:
        full = np.zeros(self.pool)
        full[list(self.columns[from_model])] = params
        return full[list(self.columns[to_model])]

    def _check(self, params, from_model, to_model):
        if len(params) != self.dim(from_model):
            raise DimensionError(f"model {from_model} expects {self.dim(from_model)} params, got {len(params)}")
        if self.adjacency is not None and to_model != from_model and to_model not in self.adjacency[from_model]:
            raise UnreachableModelError(f"model {to_model} is not reachable from {from_model}")

    def forward(self, params, u, from_model, to_model):
        params = np.asarray(params, dtype=float)
        self._check(params, from_model, to_model)
        u = np.asarray(u, dtype=float)
        if len(u) != self.dim(to_model):
            raise DimensionError(f"auxiliary for model {to_model} must have {self.dim(to_model)} entries")
        new = self.embed(params, from_model, to_model) + u
        u_rev = params - self.embed(new, to_model, from_model)
        return new, u_rev, 0.0

    def inverse(self, params, u, from_model, to_model):
        """Undo ``forward(.., from_model, to_model)``; arguments are its outputs."""
        return self.forward(params, u, to_model, from_model)

    def aux_for(self, params, from_model, to_params, to_model):
        return np.asarray(to_params, dtype=float) - self.embed(np.asarray(params, dtype=float), from_model, to_model)


class SwapJump:
    """Independence-style jump: the auxiliary becomes the new parameters."""

    def forward(self, params, u, from_model, to_model):
        return np.asarray(u, dtype=float), np.asarray(params, dtype=float), 0.0

    def inverse(self, params, u, from_model, to_model):
        return self.forward(params, u, to_model, from_model)

    def aux_for(self, params, from_model, to_params, to_model):
        return np.asarray(to_params, dtype=float)
