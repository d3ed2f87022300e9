"""Static Choquet expectations: discrete sums, density quadrature, shape checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distort import AccuracyError, DomainError, Identity, Power, Wang
from distort import normal
from distort.choquet import (
    DiscreteRV,
    MonotoneGrid,
    choquet_expectation_density,
    choquet_expectation_discrete,
    distorted_pmf,
    monotonicity_suite,
)

from test_distortion import family_strategy


# ---------------------------------------------------------------------------
# discrete law

def test_bernoulli_is_phi_of_success_probability():
    for p, d in [(0.3, Power(2.0)), (0.6, Wang(0.5)), (0.5, Power(0.5))]:
        rv = DiscreteRV(np.array([0.0, 1.0]), np.array([1.0 - p, p]))
        assert choquet_expectation_discrete(rv, d) == pytest.approx(d.eval(0.0, p), abs=1e-15)


def test_identity_gives_ordinary_mean(rng):
    support = np.sort(rng.uniform(0.0, 5.0, 7))
    support += np.arange(7) * 1e-6  # enforce strict ordering
    probs = rng.dirichlet(np.ones(7))
    probs = probs / probs.sum()
    rv = DiscreteRV(support, probs)
    assert choquet_expectation_discrete(rv, Identity()) == pytest.approx(
        float(support @ probs), abs=1e-12
    )


def test_three_point_law_with_square_distortion():
    rv = DiscreteRV(np.array([0.0, 1.0, 2.0]), np.array([0.25, 0.5, 0.25]))
    d = Power(2.0)
    pmf = distorted_pmf(rv, d)
    assert pmf == pytest.approx([7 / 16, 1 / 2, 1 / 16], abs=1e-15)
    assert choquet_expectation_discrete(rv, d) == pytest.approx(0.625, abs=1e-15)


def test_bernoulli_distorted_pmf_formula():
    p = 0.37
    rv = DiscreteRV(np.array([0.0, 1.0]), np.array([1.0 - p, p]))
    pmf = distorted_pmf(rv, Power(2.0))
    assert pmf == pytest.approx([1.0 - p**2, p**2], abs=1e-15)


def test_identity_pmf_recovers_probs(rng):
    probs = rng.dirichlet(np.ones(5))
    rv = DiscreteRV(np.arange(5.0), probs / probs.sum())
    assert distorted_pmf(rv, Identity()) == pytest.approx(rv.probs, abs=1e-12)


def test_negative_support_rejected():
    rv = DiscreteRV(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
    with pytest.raises(DomainError):
        choquet_expectation_discrete(rv, Identity())


def test_discrete_rv_validation():
    with pytest.raises(DomainError):
        DiscreteRV(np.array([1.0, 1.0]), np.array([0.5, 0.5]))  # tied support
    with pytest.raises(DomainError):
        DiscreteRV(np.array([0.0, 1.0]), np.array([0.7, 0.4]))  # sums past 1
    with pytest.raises(DomainError):
        DiscreteRV(np.array([0.0, 1.0]), np.array([1.0, 0.0]))  # zero atom


# ---------------------------------------------------------------------------
# nonlinearity witness: complementary indicators

def test_square_distortion_is_subadditive_here():
    p = 0.5
    d = Power(2.0)
    e1 = choquet_expectation_discrete(DiscreteRV(np.array([0.0, 1.0]), np.array([1 - p, p])), d)
    e2 = choquet_expectation_discrete(DiscreteRV(np.array([0.0, 1.0]), np.array([p, 1 - p])), d)
    assert e1 + e2 == pytest.approx(0.5, abs=1e-15)  # sum of parts below E[1] = 1


def test_sqrt_distortion_is_superadditive_here():
    p = 0.5
    d = Power(0.5)
    e1 = choquet_expectation_discrete(DiscreteRV(np.array([0.0, 1.0]), np.array([1 - p, p])), d)
    e2 = choquet_expectation_discrete(DiscreteRV(np.array([0.0, 1.0]), np.array([p, 1 - p])), d)
    assert e1 + e2 == pytest.approx(2 * np.sqrt(0.5), abs=1e-15)
    assert e1 + e2 > 1.0


# ---------------------------------------------------------------------------
# density route

def test_uniform_survival_square_distortion_closed_form():
    x = np.linspace(0.0, 1.0, 2001)
    survival = MonotoneGrid(x, 1.0 - x, increasing=False)
    g = MonotoneGrid(x, x.copy())
    val = choquet_expectation_density(survival, g, Power(2.0))
    assert val == pytest.approx(1.0 / 3.0, abs=1e-6)


def test_wang_of_normal_cdf_payoff_closed_form():
    # with eta standard normal and g = F, the distorted mean is F(alpha/sqrt(2))
    alpha = 0.5
    x = np.linspace(-8.0, 8.0, 4001)
    survival = MonotoneGrid(x, normal.sf(x), increasing=False)
    g = MonotoneGrid(x, normal.cdf(x))
    val = choquet_expectation_density(survival, g, Wang(alpha))
    assert val == pytest.approx(0.63816319508411847, abs=1e-6)
    assert val == pytest.approx(normal.cdf(alpha / np.sqrt(2.0)), abs=1e-6)


def test_constant_payoff_returns_constant():
    x = np.linspace(-8.0, 8.0, 1001)
    survival = MonotoneGrid(x, normal.sf(x), increasing=False)
    g = MonotoneGrid(x, np.full_like(x, 3.5))
    assert choquet_expectation_density(survival, g, Power(2.0)) == pytest.approx(3.5, abs=1e-12)


def test_density_route_rejects_bad_inputs():
    x = np.linspace(0.0, 1.0, 101)
    survival = MonotoneGrid(x, 1.0 - x, increasing=False)
    rising = MonotoneGrid(x, x.copy())
    with pytest.raises(DomainError):
        choquet_expectation_density(rising, rising, Identity())  # increasing survival
    with pytest.raises(DomainError):
        choquet_expectation_density(survival, MonotoneGrid(x, x - 2.0), Identity())  # negative g
    short = np.linspace(0.2, 0.8, 61)
    with pytest.raises(DomainError):
        choquet_expectation_density(
            MonotoneGrid(short, 1.0 - short, increasing=False),
            MonotoneGrid(short, short.copy()),
            Identity(),
        )  # survival does not span 1 .. 0


def test_quadrature_disagreement_raises():
    x = np.linspace(0.0, 1.0, 9)
    survival = MonotoneGrid(x, 1.0 - x, increasing=False)
    g = MonotoneGrid(x, x.copy())
    with pytest.raises(AccuracyError):
        choquet_expectation_density(survival, g, Power(3.0), agreement_tol=1e-30)


def test_smoothed_discrete_law_approaches_discrete_value():
    rv = DiscreteRV(np.array([0.0, 1.0, 2.0]), np.array([0.25, 0.5, 0.25]))
    d = Power(2.0)
    exact = choquet_expectation_discrete(rv, d)
    w = 1e-3
    x = np.linspace(-0.1, 2.1, 8001)
    G = sum(pk * normal.sf((x - xk) / w) for xk, pk in zip(rv.support, rv.probs))
    survival = MonotoneGrid(x, G, increasing=False)
    g = MonotoneGrid(x, np.clip(x, 0.0, 2.0))
    smoothed = choquet_expectation_density(survival, g, d)
    assert smoothed == pytest.approx(exact, abs=1e-2)


# ---------------------------------------------------------------------------
# monotonicity suite

def test_monotonicity_suite_passes():
    rv = DiscreteRV(np.array([0.0, 1.0]), np.array([0.4, 0.6]))
    lo = DiscreteRV(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    hi = DiscreteRV(np.array([0.0, 2.0]), np.array([0.5, 0.5]))
    rep = monotonicity_suite(
        Power(2.0),
        constants=[3.5, 0.0],
        scale_cases=[(2.0, rv), (0.0, rv)],
        dominated_pairs=[(lo, hi)],
    )
    assert rep.passed
    assert rep.max_constant_error < 1e-15
    assert rep.max_scaling_error < 1e-15
    assert rep.dominance_ok


def test_scaling_value_matches_formula():
    # E[c * Bernoulli] = c * phi(p)
    p, c = 0.6, 2.0
    rv = DiscreteRV(np.array([0.0, 1.0]), np.array([1 - p, p]))
    d = Power(2.0)
    scaled = DiscreteRV(rv.support * c, rv.probs)
    assert choquet_expectation_discrete(scaled, d) == pytest.approx(c * d.eval(0, p), abs=1e-15)


# ---------------------------------------------------------------------------
# property tests

@st.composite
def discrete_rv_strategy(draw):
    n = draw(st.integers(1, 8))
    gaps = draw(st.lists(st.floats(0.01, 2.0), min_size=n, max_size=n))
    support = np.cumsum(np.asarray(gaps))
    weights = draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n))
    probs = np.asarray(weights)
    probs = probs / probs.sum()
    # renormalize exactly enough for the 1e-12 gate
    probs[-1] = 1.0 - probs[:-1].sum()
    return DiscreteRV(support, probs)


@given(discrete_rv_strategy(), family_strategy())
@settings(max_examples=120, deadline=None)
def test_property_distorted_pmf_is_probability(rv, d):
    pmf = distorted_pmf(rv, d)
    assert np.all(pmf >= 0.0)
    assert float(pmf.sum()) == pytest.approx(1.0, abs=1e-12)


@given(discrete_rv_strategy(), family_strategy(), st.floats(0.0, 3.0))
@settings(max_examples=60, deadline=None)
def test_property_scaling_homogeneous(rv, d, c):
    base = choquet_expectation_discrete(rv, d)
    if c == 0.0:
        return
    scaled = DiscreteRV(rv.support * c, rv.probs)
    assert choquet_expectation_discrete(scaled, d) == pytest.approx(c * base, rel=1e-10, abs=1e-12)
