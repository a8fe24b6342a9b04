import math

import numpy as np
import pytest
from scipy import integrate, stats

from gmtrj.diagnostics import asymptotic_variance
from gmtrj.oracle import (
    BALANCE_TOL,
    NEGATIVE_CONTROL_MIN,
    BetaBinomialCase,
    BudgetExceeded,
    SamplerConfig,
    ToySpaceError,
    bundled_toys,
    check_detailed_balance,
    enumerate_kernel,
    exact_model_posterior,
    model_marginals,
    parse_toy,
    resolve_toy,
    run_toy_chain,
    run_two_model_chain,
    simulate_row,
    stationary_distribution,
)
from gmtrj.samplers import SAME_DESTINATION, VARIED_DESTINATION

TOYS = {s.name: s for s in bundled_toys()}
TWO = TOYS["two_models"]
THREE = TOYS["three_models"]

KERNELS = [SamplerConfig("MH"), SamplerConfig("RJ")] + [
    SamplerConfig(kind, w, 2, pol)
    for kind in ("GMTM", "GMTRJ")
    for w in ("MTM-I", "MTM-inv", "GMTM-quad", "custom")
    for pol in ((SAME_DESTINATION,) if kind == "GMTM" else (SAME_DESTINATION, VARIED_DESTINATION))
]


def test_bundled_spaces():
    assert set(TOYS) == {"two_models", "three_models"}
    assert len(THREE.states) == 7
    assert abs(THREE.pi.sum() - 1) < 1e-15


@pytest.mark.parametrize("cfg", KERNELS, ids=lambda c: f"{c.label()}-k{c.k}")
def test_kernels_are_stochastic_and_balanced(cfg):
    for space in (TWO, THREE):
        P = enumerate_kernel(space, cfg)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(P >= 0)
        assert check_detailed_balance(space, P) <= BALANCE_TOL


def test_single_try_reduces_to_base_kernels():
    for space in (TWO, THREE):
        mh = enumerate_kernel(space, SamplerConfig("MH"))
        rj = enumerate_kernel(space, SamplerConfig("RJ"))
        for w in ("MTM-I", "MTM-inv", "GMTM-quad", "custom"):
            assert np.max(np.abs(enumerate_kernel(space, SamplerConfig("GMTM", w, 1)) - mh)) <= 1e-14
            for pol in (SAME_DESTINATION, VARIED_DESTINATION):
                P = enumerate_kernel(space, SamplerConfig("GMTRJ", w, 1, pol))
                assert np.max(np.abs(P - rj)) <= 1e-14


def test_mixture_with_within_moves_has_target_as_stationary_law():
    mh = enumerate_kernel(THREE, SamplerConfig("MH"))
    P = enumerate_kernel(THREE, SamplerConfig("GMTRJ", "GMTM-quad", 3))
    np.testing.assert_allclose(stationary_distribution(0.5 * (mh + P)), THREE.pi, atol=BALANCE_TOL)


@pytest.mark.parametrize("k", [2, 3])
def test_omitting_current_state_from_reverse_set_breaks_balance(k):
    P = enumerate_kernel(THREE, SamplerConfig("GMTRJ-broken", "MTM-inv", k))
    assert check_detailed_balance(THREE, P) > NEGATIVE_CONTROL_MIN


def test_budget_guard():
    with pytest.raises(BudgetExceeded):
        enumerate_kernel(THREE, SamplerConfig("GMTRJ", "MTM-inv", 3), budget=1000)


@pytest.mark.parametrize("cfg", [SamplerConfig("RJ"), SamplerConfig("GMTRJ", "MTM-inv", 2),
                                 SamplerConfig("GMTRJ", "GMTM-quad", 2, VARIED_DESTINATION)],
                         ids=lambda c: c.label())
def test_simulated_transitions_match_enumeration(cfg):
    P = enumerate_kernel(THREE, cfg)
    start = THREE.states[3]
    n = 4000
    counts = simulate_row(THREE, cfg, start, n, seed=1)
    p = P[THREE.index(start)]
    sd = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 4 * sd + 1e-9)


BASE = """
[model 1]
points = 0 1
mass = 1 2
[model 2]
points = 0 1
mass = 3 1
[jumps]
1 -> 2 = 1
2 -> 1 = 1
[proposal 1 -> 1]
rows =
    0.5 0.5
    0.5 0.5
[proposal 2 -> 2]
rows =
    0.5 0.5
    0.5 0.5
[proposal 1 -> 2]
rows =
    0.5 0.5
    0.5 0.5
[proposal 2 -> 1]
rows =
    0.5 0.5
    0.5 0.5
"""


def test_parse_minimal_space():
    space = parse_toy(BASE, "mini")
    np.testing.assert_allclose(space.pi, np.array([1, 2, 3, 1]) / 7)
    assert model_marginals(space) == pytest.approx({1: 3 / 7, 2: 4 / 7})


@pytest.mark.parametrize("old,new,msg", [
    ("mass = 1 2", "mass = 1 -2", "positive"),
    ("mass = 3 1", "mass = 3", "masses"),
    ("2 -> 1 = 1", "2 -> 1 = 0.5", "sum to 1"),
    ("    0.5 0.5\n[proposal 2 -> 2]", "    0.7 0.5\n[proposal 2 -> 2]", "sum to 1"),
    ("[jumps]", "[leaps]", "unknown section"),
    ("1 -> 2 = 1", "1 to 2 = 1", "A -> B"),
])
def test_parse_errors(old, new, msg):
    with pytest.raises(ToySpaceError, match=msg):
        parse_toy(BASE.replace(old, new, 1), "bad")


def test_state_limit():
    pts = " ".join(str(i) for i in range(11))
    text = BASE.replace("points = 0 1\nmass = 1 2", f"points = {pts}\nmass = {' '.join(['1'] * 11)}")
    text = text.replace("points = 0 1\nmass = 3 1", f"points = {pts}\nmass = {' '.join(['1'] * 11)}")
    with pytest.raises(ToySpaceError, match="exceeds"):
        parse_toy(text, "big")


def test_resolve_toy(tmp_path):
    assert resolve_toy("three_models").name == "three_models"
    with pytest.raises(FileNotFoundError, match="available"):
        resolve_toy("four_models")
    path = tmp_path / "mini.toy"
    path.write_text(BASE)
    assert resolve_toy(str(path)).name == "mini"


def test_conjugate_posterior_against_quadrature():
    case = BetaBinomialCase()
    m1 = stats.binom.pmf(case.y, case.n, case.p0)
    m2, _ = integrate.quad(lambda p: stats.binom.pmf(case.y, case.n, p) * stats.beta.pdf(p, case.a, case.b), 0, 1,
                           epsabs=1e-14, epsrel=1e-12)
    expect = np.array([m1, m2]) / (m1 + m2)
    np.testing.assert_allclose(exact_model_posterior(case), expect, rtol=1e-10)
    np.testing.assert_allclose(exact_model_posterior(case), [0.56313993, 0.43686007], atol=1e-8)


def test_conjugate_chain_short():
    models = run_two_model_chain("GMTRJ", 20_000, seed=3, k=3)
    ind = (models == 1).astype(float)
    se = math.sqrt(asymptotic_variance(ind).sigma2_a)
    assert abs(ind.mean() - exact_model_posterior()[0]) <= 4 * se


def test_toy_chain_recovers_model_marginals():
    for alg in ("RJ", "GMTRJ"):
        tr = run_toy_chain(THREE, alg, "GMTM-quad", k=3, iterations=20_000, burn_in=1_000, seed=5)
        exact = model_marginals(THREE)
        for m, p in exact.items():
            ind = (tr.models == m).astype(float)
            se = math.sqrt(asymptotic_variance(ind).sigma2_a)
            assert abs(ind.mean() - p) <= 4 * se + 1e-3
