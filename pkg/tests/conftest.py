"""Shared fixtures and independent high-precision oracles.

The mpmath oracles use the erfc route so they keep full relative precision
arbitrarily deep in the tails, independently of the scipy implementations
used inside the package.
"""

import mpmath as mp
import numpy as np
import pytest

mp.mp.dps = 40


def mp_cdf(z):
    return mp.erfc(-mp.mpf(z) / mp.sqrt(2)) / 2


def mp_sf(z):
    return mp.erfc(mp.mpf(z) / mp.sqrt(2)) / 2


def mp_pdf(z):
    z = mp.mpf(z)
    return mp.exp(-z * z / 2) / mp.sqrt(2 * mp.pi)


def mp_quantile(p):
    """Root of Phi(z) = p, solved in log space so tails stay well conditioned."""
    p = mp.mpf(p)
    if p <= 0 or p >= 1:
        raise ValueError("interior p required")
    if p > mp.mpf("0.5"):
        return -mp_quantile(1 - p)
    guess = -mp.sqrt(-2 * mp.log(p)) if p < mp.mpf("0.4") else mp.mpf(0)
    return mp.findroot(lambda z: mp.log(mp_cdf(z)) - mp.log(p), guess)


def mp_wang(alpha, p):
    return mp_cdf(mp_quantile(p) + mp.mpf(alpha))


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
