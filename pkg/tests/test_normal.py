"""Normal CDF/quantile layer against an independent mpmath oracle."""

import numpy as np
import pytest

from distort import normal

from conftest import mp_cdf, mp_pdf, mp_quantile


CDF_POINTS = [-12.65, -8.0, -3.0, -1.0, 0.0, 0.5, 2.0, 6.0, 10.0]
DEEP_TAIL_POINTS = [-37.0, -20.0, 20.0, 37.0]


@pytest.mark.parametrize("z", CDF_POINTS)
def test_cdf_matches_oracle(z):
    got = normal.cdf(z)
    ref = float(mp_cdf(z))
    assert got == pytest.approx(ref, rel=2e-14, abs=0.0)


@pytest.mark.parametrize("z", DEEP_TAIL_POINTS)
def test_cdf_deep_tail(z):
    # at the underflow edge the relative error of the erfc kernel grows to
    # about 1e-13; absolute accuracy stays far below 1e-14
    got = normal.cdf(z)
    ref = float(mp_cdf(z))
    assert got == pytest.approx(ref, rel=5e-13, abs=0.0)
    assert abs(got - ref) < 1e-14


@pytest.mark.parametrize("z", CDF_POINTS)
def test_sf_is_tail_stable(z):
    # sf keeps relative precision where 1 - cdf would cancel
    got = normal.sf(z)
    ref = float(mp_cdf(-z))
    assert got == pytest.approx(ref, rel=2e-14, abs=0.0)


def test_pdf_values():
    assert normal.pdf(0.0) == pytest.approx(0.3989422804014327, rel=1e-15)
    ref = float(mp_pdf(3.5))
    assert normal.pdf(3.5) == pytest.approx(ref, rel=1e-14)


QUANTILE_POINTS = [1e-300, 1e-100, 1e-37, 1e-12, 1e-3, 0.25, 0.5, 0.75, 0.999, 1 - 1e-12]


@pytest.mark.parametrize("p", QUANTILE_POINTS)
def test_quantile_matches_oracle(p):
    got = normal.quantile(p)
    ref = float(mp_quantile(p))
    if ref == 0.0:
        assert got == 0.0
    else:
        assert got == pytest.approx(ref, rel=5e-15, abs=0.0)


def test_quantile_endpoints():
    assert normal.quantile(0.0) == -np.inf
    assert normal.quantile(1.0) == np.inf


def test_quantile_round_trip():
    p = np.linspace(1e-6, 1 - 1e-6, 1001)
    z = normal.quantile(p)
    back = normal.cdf(z)
    assert np.max(np.abs(back - p)) < 5e-16


def test_quantile_from_pair_deep_tails():
    # p has rounded to 1.0; the complement still recovers the quantile
    comp = float(mp_cdf(-12.648521463981771))
    z = normal.quantile_from_pair(1.0, comp)
    assert z == pytest.approx(12.648521463981771, rel=1e-13)
    z2 = normal.quantile_from_pair(comp, 1.0)
    assert z2 == pytest.approx(-12.648521463981771, rel=1e-13)


def test_vectorized_shapes():
    p = np.array([[0.1, 0.5], [0.9, 0.2]])
    assert normal.quantile(p).shape == (2, 2)
    assert normal.cdf(np.zeros(3)).shape == (3,)
    assert isinstance(normal.cdf(0.0), float)
    assert isinstance(normal.quantile(0.3), float)
