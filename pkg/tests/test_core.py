import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmtrj.core import (
    ChainState,
    DimensionError,
    NestedEmbedding,
    Outcome,
    RngStream,
    SwapJump,
    UnreachableModelError,
    check_log_value,
    logsumexp,
)

COLS = {1: (0,), 2: (0, 1), 3: (0, 2), 4: (0, 1, 2)}
ADJ = {1: (2, 3), 2: (1, 4), 3: (1, 4), 4: (2, 3)}


def test_stream_reproducible_and_distinct():
    a = RngStream(5, 0).normal(size=4)
    np.testing.assert_array_equal(a, RngStream(5, 0).normal(size=4))
    assert not np.allclose(a, RngStream(5, 1).normal(size=4))
    assert not np.allclose(a, RngStream(6, 0).normal(size=4))


def test_substreams_deterministic():
    r = RngStream(3, 2)
    np.testing.assert_array_equal(r.substream(1).uniform(size=3), RngStream(3, 2).substream(1).uniform(size=3))
    assert not np.allclose(r.substream(1).uniform(size=3), r.substream(2).uniform(size=3))


def test_categorical_frequencies():
    rng = RngStream(11)
    p = np.array([0.1, 0.0, 0.6, 0.3])
    counts = np.bincount([rng.categorical(p) for _ in range(20000)], minlength=4)
    assert counts[1] == 0
    np.testing.assert_allclose(counts / 20000, p, atol=0.015)


@given(st.lists(st.floats(0.0, 5.0), min_size=1, max_size=8).filter(lambda v: sum(v) > 0), st.integers(0, 1000))
@settings(max_examples=60, deadline=None)
def test_categorical_never_picks_zero_mass(w, seed):
    rng = RngStream(seed)
    idx = rng.categorical(np.array(w))
    assert w[idx] > 0


def test_accept_edges():
    rng = RngStream(0)
    assert rng.accept(0.0) and rng.accept(3.0)
    assert not rng.accept(-math.inf)
    hits = sum(rng.accept(math.log(0.25)) for _ in range(20000))
    assert abs(hits / 20000 - 0.25) < 0.015


def test_outcome_codes():
    assert bool(Outcome.ACCEPTED) and not bool(Outcome.REJECTED) and not bool(Outcome.DEGENERATE)
    for o in Outcome:
        assert Outcome.from_code(o.code) is o


def test_chain_state_is_frozen_and_hashable():
    s = ChainState(2, [1.0, 2.0])
    with pytest.raises(ValueError):
        s.params[0] = 5.0
    assert s == ChainState(2, np.array([1.0, 2.0]))
    assert len({s, ChainState(2, [1.0, 2.0])}) == 1


def test_check_log_value():
    assert check_log_value(-math.inf) == -math.inf
    with pytest.raises(FloatingPointError):
        check_log_value(float("nan"))
    with pytest.raises(FloatingPointError):
        check_log_value(math.inf)


@given(st.lists(st.floats(-700, 700), min_size=1, max_size=10))
def test_logsumexp_matches_direct(v):
    ref = np.log(np.sum(np.exp(np.array(v, dtype=np.longdouble))))
    assert abs(logsumexp(v) - float(ref)) <= 1e-12 * max(1.0, abs(float(ref)))


def test_logsumexp_all_neg_inf():
    assert logsumexp([-math.inf, -math.inf]) == -math.inf


vec = st.lists(st.floats(-5, 5), min_size=3, max_size=3)


@given(vec, vec, st.sampled_from([(1, 2), (2, 1), (1, 3), (2, 4), (4, 3), (3, 4)]))
def test_embedding_round_trip(p, u, pair):
    a, b = pair
    emb = NestedEmbedding(COLS, ADJ)
    params = np.array(p[: emb.dim(a)])
    aux = np.array(u[: emb.dim(b)])
    new, u_rev, jac = emb.forward(params, aux, a, b)
    back, u_back, jac2 = emb.inverse(new, u_rev, a, b)
    np.testing.assert_allclose(back, params, atol=1e-12)
    np.testing.assert_allclose(u_back, aux, atol=1e-12)
    assert jac + jac2 == 0.0
    np.testing.assert_allclose(emb.aux_for(params, a, new, b), aux, atol=1e-12)


def test_embedding_errors():
    emb = NestedEmbedding(COLS, ADJ)
    with pytest.raises(DimensionError):
        emb.forward(np.zeros(2), np.zeros(2), 1, 2)
    with pytest.raises(UnreachableModelError):
        emb.forward(np.zeros(1), np.zeros(3), 1, 4)


def test_swap_jump_is_involution():
    j = SwapJump()
    new, u_rev, lj = j.forward(np.array([1.0]), np.array([2.0, 3.0]), 1, 2)
    back, u_back, _ = j.inverse(new, u_rev, 1, 2)
    np.testing.assert_array_equal(back, [1.0])
    np.testing.assert_array_equal(u_back, [2.0, 3.0])
    assert lj == 0.0
