import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmtrj.core import NEG_INF, ChainState, NestedEmbedding, Outcome, RngStream
from gmtrj.quad import LocalExpansion
from gmtrj.samplers import (
    SAME_DESTINATION,
    VARIED_DESTINATION,
    CustomWeights,
    GaussianAux,
    GaussianWalk,
    JumpSource,
    MoveSpec,
    MTMInvWeights,
    NoValidTrialError,
    QuadWeights,
    StepRecord,
    gmtm_step,
    gmtrj_step,
    make_weights,
    mh_step,
    rj_step,
    select_trial,
    selection_probabilities,
)

COLS = {1: (0,), 2: (0, 1)}


class NestedGaussian:
    """Model 1: N(mu[:1], s^2); model 2: N(mu, s^2 I); model masses w."""

    def __init__(self, w=(0.3, 0.7), mu=(0.5, -0.4), s=0.8):
        self.logw = {1: math.log(w[0]), 2: math.log(w[1])}
        self.mu = np.array(mu)
        self.s = s
        self.emb = NestedEmbedding(COLS)

    def log_target(self, state):
        d = state.params - self.mu[: state.dim]
        return float(self.logw[state.model] - 0.5 * d @ d / self.s**2
                     - state.dim * (math.log(self.s) + 0.5 * math.log(2 * math.pi)))

    def expansion(self, model, point):
        point = np.asarray(point, dtype=float)
        d = len(point)
        return LocalExpansion(point, -(point - self.mu[:d]) / self.s**2, -np.eye(d) / self.s**2)

    def embed(self, params, a, b):
        return self.emb.embed(params, a, b)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=20))
def test_selection_probabilities_normalised(lw):
    p = selection_probabilities(lw)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(p >= 0)


@given(st.lists(st.one_of(st.floats(-30, 30), st.just(-math.inf)), min_size=1, max_size=10)
       .filter(lambda v: any(x > -math.inf for x in v)))
def test_zero_weight_trials_never_selected(lw):
    p = selection_probabilities(lw)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(p[np.array(lw) == -math.inf] == 0)


def test_selection_errors():
    with pytest.raises(NoValidTrialError):
        selection_probabilities([NEG_INF, NEG_INF])
    with pytest.raises(FloatingPointError):
        selection_probabilities([0.0, float("nan")])


def test_select_trial_frequencies():
    rng = RngStream(1)
    lw = np.log([1.0, 3.0, 6.0])
    counts = np.bincount([select_trial(rng, lw) for _ in range(20000)], minlength=3)
    np.testing.assert_allclose(counts / 20000, [0.1, 0.3, 0.6], atol=0.015)


def test_move_spec_validation():
    with pytest.raises(ValueError):
        MoveSpec({1: {2: 0.5}})
    with pytest.raises(ValueError):
        MoveSpec({1: {2: 1.0}}, k=0)
    with pytest.raises(ValueError):
        MoveSpec({1: {2: 1.0}}, policy="sideways")
    with pytest.raises(ValueError):
        make_weights("nonsense")
    m = MoveSpec({1: {2: 0.25, 3: 0.75}})
    assert m.log_j(1, 2) == pytest.approx(math.log(0.25))
    assert m.log_j(1, 4) == NEG_INF


def _moments(kernel, n=30000, seed=0):
    rng = RngStream(seed)
    state = ChainState(1, [0.0, 0.0])
    out = np.empty((n, 2))
    for t in range(n):
        state, _ = kernel(rng, state)
        out[t] = state.params
    return out[n // 10:]


@pytest.mark.parametrize("scheme", ["MH", "MTM-I", "MTM-inv", "GMTM-quad"])
def test_within_model_kernels_target_gaussian(gauss2, scheme):
    walk = GaussianWalk(1.0)
    if scheme == "MH":
        kernel = lambda r, s: mh_step(r, s, walk, gauss2)
    else:
        w = make_weights(scheme)
        kernel = lambda r, s: gmtm_step(r, s, 4, walk, w, gauss2)
    draws = _moments(kernel, 12000 if scheme != "MH" else 30000)
    np.testing.assert_allclose(draws.mean(axis=0), gauss2.means[1], atol=0.08)
    np.testing.assert_allclose(np.cov(draws.T), gauss2.covs[1], atol=0.12)


def _run_jumps(k, weights, policy=SAME_DESTINATION, n=20000, seed=3):
    target = NestedGaussian()
    walk = GaussianWalk(0.8)
    aux = GaussianAux(0.8, {1: 1, 2: 2})
    move = MoveSpec({1: {2: 1.0}, 2: {1: 1.0}}, k=k, policy=policy)
    rng = RngStream(seed)
    state = ChainState(1, [0.0])
    models = np.empty(n, dtype=int)
    for t in range(n):
        state, _ = mh_step(rng, state, walk, target)
        if weights is None:
            state, _ = rj_step(rng, state, move, aux, target.emb, target)
        else:
            state, _ = gmtrj_step(rng, state, move, aux, target.emb, weights, target)
        models[t] = state.model
    return models


@pytest.mark.parametrize("weights", [None, "MTM-I", "MTM-inv", "GMTM-quad"])
def test_jump_kernels_recover_model_masses(weights):
    w = None if weights is None else make_weights(weights)
    models = _run_jumps(1 if w is None else 4, w)
    assert abs(np.mean(models == 1) - 0.3) < 0.03


def test_k1_multiple_try_alpha_matches_rj_formula():
    target = NestedGaussian()
    aux = GaussianAux(0.8, {1: 1, 2: 2})
    move = MoveSpec({1: {2: 1.0}, 2: {1: 1.0}}, k=1)
    x = ChainState(1, [0.2])
    for seed in range(20):
        rec = StepRecord()
        gmtrj_step(RngStream(seed), x, move, aux, target.emb, MTMInvWeights(), target, record=rec)
        y = rec.forward.trials[0].state
        u = target.emb.aux_for(x.params, 1, y.params, 2)
        ref = (target.log_target(y) + aux.log_density(y, 1, x.params - target.emb.embed(y.params, 2, 1))
               - target.log_target(x) - aux.log_density(x, 2, u))
        assert abs(rec.log_alpha - ref) < 1e-12


def test_reverse_set_ends_with_current_state():
    target = NestedGaussian()
    aux = GaussianAux(0.8, {1: 1, 2: 2})
    move = MoveSpec({1: {2: 1.0}, 2: {1: 1.0}}, k=5)
    x = ChainState(2, [0.1, 0.3])
    rec = StepRecord()
    gmtrj_step(RngStream(0), x, move, aux, target.emb, MTMInvWeights(), target, record=rec)
    assert len(rec.reverse.trials) == 5
    assert rec.reverse.trials[-1].state == x
    assert all(t.state.model == 1 for t in rec.forward.trials)


def test_varied_destinations_mix_models():
    move = MoveSpec({1: {2: 0.5, 3: 0.5}}, k=30, policy=VARIED_DESTINATION)
    src = JumpSource(move, GaussianAux(1.0, {2: 1, 3: 1}), NestedEmbedding({1: (), 2: (0,), 3: (1,)}))
    trials = src.forward(RngStream(2), ChainState(1, []), 30)
    assert {t.state.model for t in trials} == {2, 3}
    same = MoveSpec({1: {2: 0.5, 3: 0.5}}, k=30)
    src = JumpSource(same, GaussianAux(1.0, {2: 1, 3: 1}), NestedEmbedding({1: (), 2: (0,), 3: (1,)}))
    assert len({t.state.model for t in src.forward(RngStream(2), ChainState(1, []), 30)}) == 1


def test_varied_policy_targets_correct_masses():
    models = _run_jumps(3, make_weights("MTM-inv"), VARIED_DESTINATION, n=15000)
    assert abs(np.mean(models == 1) - 0.3) < 0.03


def test_all_zero_weights_is_degenerate(gauss2, origin2):
    w = CustomWeights(lambda y, x: NEG_INF)
    new, res = gmtm_step(RngStream(0), origin2, 3, GaussianWalk(1.0), w, gauss2)
    assert res is Outcome.DEGENERATE and new is origin2


def test_custom_weights_reject_nan(gauss2, origin2):
    w = CustomWeights(lambda y, x: float("nan"))
    with pytest.raises(FloatingPointError):
        gmtm_step(RngStream(0), origin2, 3, GaussianWalk(1.0), w, gauss2)


def test_same_seed_same_chain():
    a = _run_jumps(3, make_weights("GMTM-quad"), n=500, seed=9)
    b = _run_jumps(3, make_weights("GMTM-quad"), n=500, seed=9)
    assert a.tobytes() == b.tobytes()


def test_outside_support_candidate_rejected():
    class HalfLine:
        def log_target(self, s):
            return -0.5 * s.params[0] ** 2 if s.params[0] > 0 else NEG_INF

    rng = RngStream(0)
    state = ChainState(1, [0.01])
    for _ in range(500):
        state, _ = mh_step(rng, state, GaussianWalk(1.0), HalfLine())
        assert state.params[0] > 0
