import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gmtrj.core import ChainState, DimensionError, RngStream
from gmtrj.quad import LocalExpansion, log_A, log_A_many, quad_weight
from gmtrj.samplers import GaussianWalk, MTMInvWeights, QuadWeights, StepRecord, WithinModelSource, gmtm_step

finite = st.floats(-3, 3)


def _exp(d, seed):
    g = np.random.default_rng(seed)
    m = g.normal(size=(d, d))
    return LocalExpansion(g.normal(size=d), g.normal(size=d), -(m @ m.T) - np.eye(d))


@given(st.integers(1, 5), st.integers(0, 10_000))
def test_A_at_anchor_is_one(d, seed):
    e = _exp(d, seed)
    assert log_A(e, e.anchor) == 0.0


@given(st.integers(1, 4), st.integers(0, 10_000))
def test_many_matches_single(d, seed):
    e = _exp(d, seed)
    cands = np.random.default_rng(seed + 1).normal(size=(6, d))
    np.testing.assert_allclose(log_A_many(e, cands), [log_A(e, c) for c in cands], rtol=1e-12, atol=1e-12)


def test_quadratic_is_exact_for_gaussian(gauss2):
    x = ChainState(1, [0.5, 1.0])
    e = gauss2.expansion(1, x.params)
    for y in np.random.default_rng(2).normal(size=(5, 2)):
        lhs = gauss2.log_target(ChainState(1, y)) - gauss2.log_target(x)
        assert abs(log_A(e, y) - lhs) < 1e-12


def test_quad_weight_subtracts_proposal():
    e = _exp(2, 1)
    c = e.anchor + 0.1
    assert quad_weight(e, c, -1.5) == pytest.approx(log_A(e, c) + 1.5, abs=1e-14)


def test_dimension_checks():
    e = _exp(2, 0)
    with pytest.raises(DimensionError):
        log_A(e, np.zeros(3))
    with pytest.raises(DimensionError):
        log_A_many(e, np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        LocalExpansion(np.zeros(2), np.zeros(3), np.eye(2))


def test_quad_and_inv_selection_agree_on_gaussian(gauss2, origin2):
    walk = GaussianWalk(0.7)
    src = WithinModelSource(walk)
    trials = src.forward(RngStream(4), origin2, 8)
    pq = QuadWeights().log_weights(trials, origin2, src, gauss2)
    pi = MTMInvWeights().log_weights(trials, origin2, src, gauss2)
    d = pq - pi
    np.testing.assert_allclose(d - d[0], 0.0, atol=1e-10)


def test_quad_and_inv_chains_identical_on_gaussian(gauss2, origin2):
    walk = GaussianWalk(0.9)
    sa, sb = origin2, origin2
    ra, rb = RngStream(8), RngStream(8)
    for _ in range(300):
        ka, kb = StepRecord(), StepRecord()
        sa, _ = gmtm_step(ra, sa, 5, walk, QuadWeights(), gauss2, record=ka)
        sb, _ = gmtm_step(rb, sb, 5, walk, MTMInvWeights(), gauss2, record=kb)
        np.testing.assert_allclose(ka.forward.probabilities, kb.forward.probabilities, atol=1e-10)
        assert abs(ka.log_alpha - kb.log_alpha) < 1e-10
    np.testing.assert_array_equal(sa.params, sb.params)
