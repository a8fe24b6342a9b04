import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import betaln, gammaln, logsumexp

from gmtrj.core import RngStream
from gmtrj.diagnostics import asymptotic_variance
from gmtrj.latentclass import (
    ALGORITHMS,
    BirthDeathSource,
    DataFileError,
    LatentClassTarget,
    LCConfig,
    LCData,
    LCPriors,
    LCState,
    MoveSettings,
    SplitCombineSource,
    birth_log_acceptance,
    birth_states,
    combine_states,
    complete_loglik,
    death_states,
    gibbs_sweep,
    incomplete_loglik,
    initial_state,
    load_lc_data,
    manifest_prob,
    run_lc_chain,
    split_alloc_logprob,
    split_log_acceptance,
    split_proposal,
)
from gmtrj.samplers import SAME_DESTINATION, MTMInvWeights, StepRecord, multiple_try_step

DATA = load_lc_data()
PRIORS = LCPriors()
TARGET = LatentClassTarget(DATA, PRIORS)


def _random_state(seed, C, data=DATA):
    g = np.random.default_rng(seed)
    return LCState(g.dirichlet(np.ones(C)), g.uniform(0.05, 0.95, (C, data.items)), g.integers(0, C, data.n))


def test_bundled_data():
    assert DATA.n == 216
    assert DATA.items == 4
    assert len(DATA.freq) == 16
    assert DATA.responses.shape == (216, 4)


def test_missing_data_file(tmp_path):
    with pytest.raises(DataFileError, match="not found"):
        load_lc_data(tmp_path / "nope.csv")


@given(st.integers(0, 10_000), st.integers(1, 5))
@settings(max_examples=30, deadline=None)
def test_likelihoods_match_subject_loop(seed, C):
    s = _random_state(seed, C)
    comp = 0.0
    incomp = 0.0
    for y, zi in zip(DATA.responses, s.z):
        f = np.prod(np.where(y == 1, s.lam, 1 - s.lam), axis=1)
        comp += math.log(s.pi[zi] * f[zi])
        incomp += math.log(s.pi @ f)
    assert complete_loglik(s, DATA) == pytest.approx(comp, rel=1e-12)
    assert incomplete_loglik(s.lam, s.pi, DATA) == pytest.approx(incomp, rel=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 4))
@settings(max_examples=30, deadline=None)
def test_manifest_probabilities_sum_to_one(seed, C):
    s = _random_state(seed, C)
    every = np.array(list(itertools.product((0, 1), repeat=4)))
    assert abs(manifest_prob(s.lam, s.pi, every).sum() - 1.0) < 1e-12


@given(st.integers(0, 10_000), st.integers(1, 6))
@settings(max_examples=40, deadline=None)
def test_split_then_combine_recovers_parent(seed, C):
    parent = _random_state(seed, C)
    c_star = seed % C
    sp = split_proposal(RngStream(seed), parent, c_star, DATA, MoveSettings())
    back = combine_states(sp.state, c_star, C, parent.lam[c_star])
    np.testing.assert_allclose(back.pi, parent.pi, atol=1e-10)
    np.testing.assert_allclose(back.lam, parent.lam, atol=1e-10)
    np.testing.assert_array_equal(back.z, parent.z)


@given(st.integers(0, 10_000), st.integers(1, 6), st.floats(0.01, 0.99))
@settings(max_examples=40, deadline=None)
def test_birth_then_death_recovers_state(seed, C, w):
    s = _random_state(seed, C)
    lam_new = np.full(DATA.items, 0.3)
    back = death_states(birth_states(s, w, lam_new), C)
    np.testing.assert_allclose(back.pi, s.pi, atol=1e-10)
    np.testing.assert_allclose(back.lam, s.lam, atol=1e-10)
    np.testing.assert_array_equal(back.z, s.z)


def test_state_validation():
    with pytest.raises(ValueError):
        LCState([0.5, 0.5], [[0.5, 0.5]], [0, 1])
    with pytest.raises(ValueError):
        LCState([0.6, 0.6], [[0.5], [0.5]], [0, 1]).check()
    with pytest.raises(ValueError):
        LCConfig(algorithm="MTRJ")
    with pytest.raises(ValueError):
        LCConfig(delta=0.05)
    LCConfig(delta=0.05, engine="generic")


def _three_class_state():
    rng = RngStream(1)
    s = initial_state(DATA, 1)
    for _ in range(30):
        s = gibbs_sweep(rng, s, DATA, PRIORS)
    for _ in range(2):
        s = split_proposal(rng, s, 0, DATA, MoveSettings()).state
    for _ in range(10):
        s = gibbs_sweep(rng, s, DATA, PRIORS)
    return s


@pytest.mark.parametrize("seed", [3, 7, 11])
def test_single_try_split_combine_matches_closed_form(seed):
    s = _three_class_state()
    ms = MoveSettings()
    for up in (True, False):
        src = SplitCombineSource(up, SAME_DESTINATION, DATA, PRIORS, ms)
        rec = StepRecord()
        multiple_try_step(RngStream(seed), s, 1, src, MTMInvWeights(), TARGET, record=rec)
        trial = rec.forward.trials[0]
        y, info = trial.state, trial.info
        if up:
            ref = split_log_acceptance(s, y, info["c_star"], info["log_alloc"], TARGET, ms)
        else:
            a, b = info["pair"]
            ref = -split_log_acceptance(y, s, a, split_alloc_logprob(y, a, s, DATA, a, b), TARGET, ms, a, b)
        assert rec.log_alpha == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("seed", [3, 8])
def test_single_try_birth_death_matches_closed_form(seed):
    s = _three_class_state()
    ms = MoveSettings()
    rec = StepRecord()
    multiple_try_step(RngStream(seed), s, 1, BirthDeathSource(True, SAME_DESTINATION, DATA, PRIORS, ms),
                      MTMInvWeights(), TARGET, record=rec)
    y = rec.forward.trials[0].state
    ref = birth_log_acceptance(s, y.pi[-1], DATA.n, PRIORS, len(s.empty_classes()))
    assert rec.log_alpha == pytest.approx(ref, abs=1e-9)
    rec = StepRecord()
    multiple_try_step(RngStream(seed), y, 1, BirthDeathSource(False, SAME_DESTINATION, DATA, PRIORS, ms),
                      MTMInvWeights(), TARGET, record=rec)
    assert rec.log_alpha == pytest.approx(-ref, abs=1e-9)


@pytest.mark.parametrize("alg", ALGORITHMS)
def test_compiled_and_generic_routes_agree(alg):
    cfg = dict(algorithm=alg, k=4, sweeps=150, burn_in=0, seed=5)
    a = run_lc_chain(LCConfig(engine="fast", **cfg), DATA)
    b = run_lc_chain(LCConfig(engine="generic", **cfg), DATA)
    np.testing.assert_array_equal(a.models, b.models)
    np.testing.assert_array_equal(a.moves, b.moves)
    np.testing.assert_array_equal(a.outcomes, b.outcomes)
    np.testing.assert_allclose(a.final_state.lam, b.final_state.lam, rtol=0, atol=1e-12)
    assert a.meta["clamped"] == b.meta["clamped"]


TINY = LCData(np.array([[0, 0], [0, 1], [1, 0], [1, 1]]), np.array([3, 0, 0, 3]))
TINY_CMAX = 4


def _tiny_exact():
    """P(C | y) by summing the collapsed likelihood over every allocation."""
    y = TINY.responses
    n = len(y)
    evid = []
    for C in range(1, TINY_CMAX + 1):
        terms = []
        for z in itertools.product(range(C), repeat=n):
            z = np.array(z)
            nc = np.bincount(z, minlength=C)
            lp = gammaln(C) - gammaln(C + n) + np.sum(gammaln(1 + nc))
            for c in range(C):
                s = y[z == c].sum(axis=0)
                lp += np.sum(betaln(1 + s, 1 + nc[c] - s))
            terms.append(lp)
        evid.append(logsumexp(terms))
    evid = np.array(evid)
    return np.exp(evid - logsumexp(evid))


def test_tiny_exact_posterior_frozen():
    np.testing.assert_allclose(_tiny_exact(), [0.09408102, 0.24609778, 0.31208994, 0.34773126], atol=1e-8)


@pytest.mark.parametrize("alg", ALGORITHMS)
def test_chains_match_exact_class_posterior(alg):
    exact = np.array([0.09408102, 0.24609778, 0.31208994, 0.34773126])
    tr = run_lc_chain(LCConfig(alg, k=3, sweeps=60_000, burn_in=5_000, seed=2, c_max=TINY_CMAX), TINY)
    for C in range(1, TINY_CMAX + 1):
        ind = (tr.models == C).astype(float)
        se = math.sqrt(asymptotic_variance(ind).sigma2_a)
        assert abs(ind.mean() - exact[C - 1]) <= 4 * se, (C, ind.mean(), exact[C - 1], se)


def test_smoke_chain_invariants():
    tr = run_lc_chain(LCConfig("GMTRJ-man-II", k=5, sweeps=5_000, burn_in=1_000, seed=3), DATA)
    assert len(tr.models) == 4_000
    assert tr.models.min() >= 1 and tr.models.max() <= 20
    assert set(np.unique(tr.moves)) <= {"split", "combine", "birth", "death"}
    assert set(np.unique(tr.outcomes)) <= {"A", "R", "D"}
    tr.final_state.check()
    assert tr.final_state.C == tr.models[-1]


@given(st.integers(0, 10_000), st.integers(1, 4), st.sampled_from(["split", "birth"]))
@settings(max_examples=40, deadline=None)
def test_paired_moves_have_negated_log_acceptance(seed, C, kind):
    from conftest import paired_log_alphas

    state = _random_state(seed, C)
    cls = SplitCombineSource if kind == "split" else BirthDeathSource
    fwd, back = paired_log_alphas(cls, state, seed, DATA, PRIORS, TARGET, MoveSettings())
    if math.isfinite(fwd):
        assert abs(fwd + back) <= 1e-10
