"""Post-processing of recorded chains: ergodic model probabilities,
acceptance accounting, indicator autocorrelation, asymptotic variance and
the efficiency ratio, plus trace persistence.

Everything here is a pure function of the recorded trace, so summaries
recomputed from a trace file match the ones computed in memory exactly.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Outcome

TRACE_VERSION = "1"
_MAGIC = "# gmtrj-trace"
OUTCOME_CODES = tuple(o.code for o in Outcome)


class TraceVersionError(ValueError):
    pass


@dataclass
class Trace:
    """Per-sweep record read back from disk (or built from arrays)."""

    models: np.ndarray
    moves: np.ndarray
    outcomes: np.ndarray
    burn_in: int = 0
    cpu_seconds: float = 0.0
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# ergodic probabilities


@dataclass
class ErgodicProbs:
    labels: np.ndarray
    probs: np.ndarray
    cumulative: np.ndarray | None = None

    def as_dict(self) -> dict:
        return {int(m): float(p) for m, p in zip(self.labels, self.probs)}


def ergodic_probs(models, labels: Sequence[int] | None = None, cumulative: bool = False) -> ErgodicProbs:
    """Fraction of sweeps spent in each model.

    With ``cumulative`` the running fractions are returned too, one column
    per label; the last row equals ``probs`` exactly.
    """
    models = np.asarray(models)
    if models.size == 0:
        raise ValueError("ergodic probabilities need a non-empty trace")
    labels = np.unique(models) if labels is None else np.asarray(labels)
    hits = models[:, None] == labels[None, :]
    counts = hits.sum(axis=0)
    probs = counts / models.size
    cum = None
    if cumulative:
        steps = np.arange(1, models.size + 1)[:, None]
        cum = np.cumsum(hits, axis=0) / steps
        cum[-1] = probs
    return ErgodicProbs(labels, probs, cum)


# ---------------------------------------------------------------------------
# acceptance


@dataclass(frozen=True)
class MoveCounts:
    accepted: int
    rejected: int
    degenerate: int

    @property
    def total(self) -> int:
        return self.accepted + self.rejected + self.degenerate

    @property
    def rate(self) -> float:
        return self.accepted / self.total if self.total else math.nan


def acceptance_counts(moves, outcomes) -> dict:
    """Accepted / rejected / degenerate counts per move type."""
    moves = np.asarray(moves)
    outcomes = np.asarray(outcomes)
    if moves.shape != outcomes.shape:
        raise ValueError("moves and outcomes must have the same length")
    bad = set(np.unique(outcomes).tolist()) - set(OUTCOME_CODES)
    if bad:
        raise ValueError(f"unknown outcome codes {sorted(bad)}")
    out = {}
    for move in np.unique(moves):
        sel = outcomes[moves == move]
        out[str(move)] = MoveCounts(int(np.sum(sel == "A")), int(np.sum(sel == "R")), int(np.sum(sel == "D")))
    return out


def acceptance_rates(moves, outcomes) -> dict:
    return {m: c.rate for m, c in acceptance_counts(moves, outcomes).items()}


# ---------------------------------------------------------------------------
# autocorrelation and asymptotic variance


def autocorrelation(x, max_lag: int | None = None) -> np.ndarray:
    """Sample autocorrelation rho_0..rho_max_lag via zero-padded FFT.

    Uses the biased (1/N) autocovariance, which keeps the sequence positive
    semi-definite.  A constant series gives rho_0 = 1 and zeros after.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("autocorrelation of an empty series")
    max_lag = n - 1 if max_lag is None else min(int(max_lag), n - 1)
    d = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, size)
    acov = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1] / n
    if acov[0] <= 0:
        out = np.zeros(max_lag + 1)
        out[0] = 1.0
        return out
    return acov / acov[0]


def integrated_time(x) -> float:
    """1 + 2 sum rho_t, truncated by the initial positive sequence rule.

    Pairs Gamma_m = rho_2m + rho_2m+1 are summed while positive (and made
    monotone), the standard choice for reversible chains.
    """
    rho = autocorrelation(x)
    n_pairs = rho.size // 2
    if n_pairs == 0:
        return 1.0
    gam = rho[: 2 * n_pairs].reshape(-1, 2).sum(axis=1)
    pos = np.flatnonzero(gam <= 0)
    stop = pos[0] if pos.size else n_pairs
    gam = np.minimum.accumulate(gam[:stop])
    return float(max(-1.0 + 2.0 * gam.sum(), 1e-12))


@dataclass(frozen=True)
class VarianceEstimate:
    sigma2_a: float
    sigma2: float
    tau: float
    degenerate: bool = False


def asymptotic_variance(indicator, min_length: int = 1000) -> VarianceEstimate:
    """Asymptotic variance of the mean of a 0/1 series.

    sigma2 = p(1-p)/N is the iid variance and sigma2_a = sigma2 * tau with tau
    the integrated autocorrelation time.  A series that never (or always)
    hits gives sigma2_a = sigma2 = 0 and ``degenerate`` set.
    """
    x = np.asarray(indicator, dtype=float)
    if x.size < min_length:
        raise ValueError(f"indicator series has {x.size} points, need at least {min_length}")
    if not np.all((x == 0) | (x == 1)):
        raise ValueError("indicator series must be 0/1")
    p = x.mean()
    if p == 0.0 or p == 1.0:
        return VarianceEstimate(0.0, 0.0, math.nan, True)
    sigma2 = p * (1 - p) / x.size
    tau = integrated_time(x)
    return VarianceEstimate(sigma2 * tau, sigma2, tau)


def efficiency_ratio(sigma2_a: float, sigma2: float, cpu_seconds: float, iterations: int,
                     reference_cost: float | None = None) -> tuple[float, float]:
    """R = sigma2_a / sigma2 and its computing-time adjusted version.

    The adjusted value is R times the cost per iteration divided by
    ``reference_cost`` (seconds per iteration of the reference algorithm).
    Without a reference the cost is expressed in milliseconds per iteration.
    """
    if not sigma2 > 0:
        raise ValueError("iid variance must be positive")
    if iterations <= 0 or cpu_seconds < 0:
        raise ValueError("need iterations > 0 and cpu_seconds >= 0")
    r = sigma2_a / sigma2
    cost = cpu_seconds / iterations
    ref = 1e-3 if reference_cost is None else reference_cost
    if not ref > 0:
        raise ValueError("reference cost must be positive")
    return r, r * cost / ref


# ---------------------------------------------------------------------------
# run summary


@dataclass
class RunSummary:
    probs: dict
    acceptance: dict
    counts: dict
    acf: dict
    sigma2_a: dict
    sigma2: dict
    R: dict
    cpu_seconds: float
    iterations: int
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def time_adjusted(self, reference_cost: float | None = None) -> dict:
        out = {}
        for m, s2 in self.sigma2.items():
            if s2 > 0:
                out[m] = efficiency_ratio(self.sigma2_a[m], s2, self.cpu_seconds, self.iterations, reference_cost)[1]
            else:
                out[m] = math.nan
        return out

    @property
    def cost_per_iteration(self) -> float:
        return self.cpu_seconds / self.iterations


def summarize(trace, labels: Sequence[int] | None = None, max_lag: int = 50,
              min_length: int = 1000) -> RunSummary:
    """Diagnostics for one recorded chain (post burn-in part only)."""
    models = np.asarray(trace.models)
    keep = int(getattr(trace, "burn_in", 0))
    models = models[keep:]
    moves = np.asarray(trace.moves)[keep:]
    outcomes = np.asarray(trace.outcomes)[keep:]
    erg = ergodic_probs(models, labels)
    probs = erg.as_dict()
    acf, s2a, s2, ratio = {}, {}, {}, {}
    for m in probs:
        ind = (models == m).astype(float)
        acf[m] = autocorrelation(ind, max_lag)
        est = asymptotic_variance(ind, min_length=min(min_length, ind.size))
        s2a[m], s2[m] = est.sigma2_a, est.sigma2
        ratio[m] = est.sigma2_a / est.sigma2 if est.sigma2 > 0 else math.nan
    counts = acceptance_counts(moves, outcomes)
    meta = dict(getattr(trace, "meta", {}) or {})
    return RunSummary(probs, {k: c.rate for k, c in counts.items()}, counts, acf, s2a, s2, ratio,
                      float(trace.cpu_seconds), int(models.size), meta.get("seed"), meta)


def pool_traces(traces: Iterable) -> Trace:
    """Concatenate post burn-in parts of several chains into one record."""
    traces = list(traces)
    if not traces:
        raise ValueError("nothing to pool")
    parts = [(np.asarray(t.models)[t.burn_in:], np.asarray(t.moves)[t.burn_in:],
              np.asarray(t.outcomes)[t.burn_in:]) for t in traces]
    meta = dict(traces[0].meta)
    meta["pooled"] = len(traces)
    return Trace(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
                 np.concatenate([p[2] for p in parts]), 0, float(sum(t.cpu_seconds for t in traces)), meta)


def summary_row(summary: RunSummary, labels: Sequence[int], moves: Sequence[str], prefix: dict | None = None) -> dict:
    """Flat CSV row.  Timing is left out so reruns give identical files."""
    row = dict(prefix or {})
    row["iterations"] = summary.iterations
    for m in labels:
        row[f"p_{m}"] = _fmt(summary.probs.get(m, 0.0))
    for mv in moves:
        row[f"acc_{mv}"] = _fmt(summary.acceptance.get(mv, math.nan))
    for m in labels:
        row[f"R_{m}"] = _fmt(summary.R.get(m, math.nan))
    return row


def summary_keyvalue(summary: RunSummary, reference_cost: float | None = None) -> str:
    """Key-value text report, timing included."""
    lines = [f"iterations = {summary.iterations}", f"seed = {summary.seed}",
             f"cpu_seconds = {summary.cpu_seconds!r}"]
    for key in sorted(k for k in summary.meta if k != "seed"):
        lines.append(f"meta.{key} = {summary.meta[key]}")
    adj = summary.time_adjusted(reference_cost)
    for m in summary.probs:
        lines += [f"p.{m} = {_fmt(summary.probs[m])}", f"sigma2_a.{m} = {_fmt(summary.sigma2_a[m])}",
                  f"sigma2.{m} = {_fmt(summary.sigma2[m])}", f"R.{m} = {_fmt(summary.R[m])}",
                  f"R_time.{m} = {_fmt(adj[m])}",
                  f"acf.{m} = " + " ".join(_fmt(v) for v in summary.acf[m][:11])]
    for mv, c in summary.counts.items():
        lines.append(f"moves.{mv} = accepted {c.accepted} rejected {c.rejected} degenerate {c.degenerate}")
    return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


# ---------------------------------------------------------------------------
# trace files


def trace_text(trace, header: dict | None = None) -> str:
    """Serialise a trace: version line, ``# key=value`` lines, then CSV rows."""
    buf = io.StringIO()
    buf.write(f"{_MAGIC} version={TRACE_VERSION}\n")
    meta = dict(getattr(trace, "meta", {}) or {})
    meta.update(header or {})
    meta["burn_in"] = int(trace.burn_in)
    meta["cpu_seconds"] = repr(float(trace.cpu_seconds))
    for key in sorted(meta):
        buf.write(f"# {key}={meta[key]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "model", "move", "outcome"])
    models = np.asarray(trace.models)
    moves = np.asarray(trace.moves)
    outcomes = np.asarray(trace.outcomes)
    for i in range(models.size):
        w.writerow([i, int(models[i]), moves[i], outcomes[i]])
    return buf.getvalue()


def write_trace(path, trace, header: dict | None = None) -> Path:
    from .io import atomic_write

    return atomic_write(path, trace_text(trace, header))


def read_trace(path, expect_version: str = TRACE_VERSION) -> Trace:
    path = Path(path)
    with path.open() as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith(_MAGIC):
            raise TraceVersionError(f"{path} is not a trace file")
        version = first.split("version=", 1)[-1].strip()
        if version != expect_version:
            raise TraceVersionError(f"{path} has trace format version {version}, expected {expect_version}")
        meta = {}
        line = fh.readline()
        while line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = _parse_value(value)
            line = fh.readline()
        rows = list(csv.reader(fh))
    n = len(rows)
    models = np.array([int(r[1]) for r in rows], dtype=np.int64) if n else np.empty(0, dtype=np.int64)
    moves = np.array([r[2] for r in rows]) if n else np.empty(0, dtype="U1")
    outcomes = np.array([r[3] for r in rows]) if n else np.empty(0, dtype="U1")
    burn = int(meta.pop("burn_in", 0))
    cpu = float(meta.pop("cpu_seconds", 0.0))
    return Trace(models, moves, outcomes, burn, cpu, meta)


def _parse_value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text
