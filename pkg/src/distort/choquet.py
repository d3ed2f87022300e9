"""Static distorted (Choquet) expectations.

For a nonnegative random variable xi the distorted expectation is the
integral of phi(P(xi >= x)) over x > 0.  For a finitely supported law this
telescopes into a weighted sum with the distorted probability mass
q_k = phi(P(eta >= x_k)) - phi(P(eta >= x_{k+1})); for a law with a density
it becomes an integral of g * rho * phi'(G), or after integration by parts
g(min) + integral of phi(G) dg, which is the better conditioned form on
gridded survival data.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import AccuracyError, DomainError


@dataclass(frozen=True)
class DiscreteRV:
    """Finitely supported law: strictly increasing support, positive probs summing to 1."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        if support.ndim != 1 or probs.shape != support.shape or support.size < 1:
            raise DomainError("DiscreteRV: support and probs must be equal-length 1-d arrays")
        if np.any(np.diff(support) <= 0.0):
            raise DomainError("DiscreteRV: support values must be strictly increasing")
        if np.any(probs <= 0.0):
            raise DomainError("DiscreteRV: all probabilities must be positive")
        if abs(float(probs.sum()) - 1.0) > 1e-12:
            raise DomainError(f"DiscreteRV: probabilities sum to {probs.sum()}, not 1")

    def survival(self):
        """P(eta >= x_k) for each support point."""
        s = np.cumsum(self.probs[::-1])[::-1]
        # the first entry is exactly 1 by construction; summation rounding must
        # not survive here, because families with unbounded endpoint slope
        # amplify a one-ulp deficit into a visible mass defect
        s[0] = 1.0
        return s


@dataclass(frozen=True)
class MonotoneGrid:
    """A monotone function sampled on a strictly increasing grid."""

    x: np.ndarray
    values: np.ndarray
    increasing: bool = True

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", values)
        if x.ndim != 1 or values.shape != x.shape or x.size < 2:
            raise DomainError("MonotoneGrid: need matching 1-d arrays with at least 2 points")
        if np.any(np.diff(x) <= 0.0):
            raise DomainError("MonotoneGrid: abscissae must be strictly increasing")
        d = np.diff(values)
        if self.increasing and np.any(d < 0.0):
            raise DomainError("MonotoneGrid: ordinates not increasing as declared")
        if not self.increasing and np.any(d > 0.0):
            raise DomainError("MonotoneGrid: ordinates not decreasing as declared")

    def __call__(self, xq):
        return np.interp(xq, self.x, self.values)


def distorted_pmf(rv, d, t=0.0):
    """Distorted probability mass q_k; nonnegative, sums to 1 by telescoping."""
    surv = rv.survival()
    surv_next = np.append(surv[1:], 0.0)
    phi_hi = np.asarray(d.eval(t, np.clip(surv, 0.0, 1.0)))
    phi_lo = np.asarray(d.eval(t, np.clip(surv_next, 0.0, 1.0)))
    q = phi_hi - phi_lo
    return np.maximum(q, 0.0)


def choquet_expectation_discrete(rv, d, t=0.0):
    """Distorted expectation of a nonnegative finitely supported variable."""
    if rv.support[0] < 0.0:
        raise DomainError("choquet_expectation_discrete: support must be nonnegative")
    return float(rv.support @ distorted_pmf(rv, d, t))


def _trapezoid_stieltjes(phi_vals, g_vals):
    """Trapezoid approximation of the Stieltjes integral of phi(G) dg."""
    return float(np.sum(0.5 * (phi_vals[1:] + phi_vals[:-1]) * np.diff(g_vals)))


def choquet_expectation_density(survival, g, d, t=0.0, agreement_tol=None):
    """Distorted expectation of g(eta) from a gridded survival curve.

    Evaluates both the density form (integral of g * rho * phi'(G)) and the
    integration-by-parts form (g(min) + integral of phi(G) dg), returns the
    by-parts value, and raises if the two disagree beyond the estimated
    quadrature error.
    """
    if not isinstance(survival, MonotoneGrid) or survival.increasing:
        raise DomainError("choquet_expectation_density: survival must be a decreasing MonotoneGrid")
    if not isinstance(g, MonotoneGrid) or not g.increasing:
        raise DomainError("choquet_expectation_density: g must be an increasing MonotoneGrid")
    if np.any(g.values < 0.0):
        raise DomainError("choquet_expectation_density: g must be nonnegative")
    G = survival.values
    if G[0] < 1.0 - 5e-3 or G[-1] > 5e-3:
        raise DomainError(
            "choquet_expectation_density: survival grid must span from about 1 down to about 0 "
            f"(got {G[0]:.6f} .. {G[-1]:.6f})"
        )
    x = survival.x
    g_vals = g(x)
    phi_vals = np.asarray(d.eval(t, np.clip(G, 0.0, 1.0)))

    # integration-by-parts form, with Richardson error estimate from the
    # every-other-point subgrid
    by_parts = float(g_vals[0]) + _trapezoid_stieltjes(phi_vals, g_vals)
    coarse = float(g_vals[0]) + _trapezoid_stieltjes(phi_vals[::2], g_vals[::2])
    err_b = abs(by_parts - coarse) / 3.0

    # density form: rho = -dG/dx by centered differences, phi' by finite
    # differences of eval (keeps this an independent route from .derivatives)
    rho = -np.gradient(G, x)
    der = d.derivatives(t, np.clip(G, 0.0, 1.0))
    integrand = g_vals * rho * np.asarray(der.dp)
    density_form = float(np.trapezoid(integrand, x))
    density_coarse = float(np.trapezoid(integrand[::2], x[::2]))
    err_a = abs(density_form - density_coarse) / 3.0

    tol = agreement_tol if agreement_tol is not None else max(1e-8, 10.0 * (err_a + err_b))
    if abs(by_parts - density_form) > tol:
        raise AccuracyError(
            "choquet_expectation_density: quadrature forms disagree "
            f"({by_parts} vs {density_form}, tol {tol}); refine the grid"
        )
    return by_parts


@dataclass(frozen=True)
class MonotonicityReport:
    """Results of the constant / scaling / dominance checks."""

    max_constant_error: float
    max_scaling_error: float
    dominance_ok: bool
    details: list = field(default_factory=list)

    @property
    def passed(self):
        return self.dominance_ok and max(self.max_constant_error, self.max_scaling_error) < 1e-12


def monotonicity_suite(d, t=0.0, constants=(), scale_cases=(), dominated_pairs=()):
    """Check E[c] = c, E[c*xi] = c*E[xi], and xi1 <= xi2 implies E[xi1] <= E[xi2]."""
    details = []
    max_const = 0.0
    for c in constants:
        if c < 0.0:
            raise DomainError("monotonicity_suite: constants must be nonnegative")
        rv = DiscreteRV(np.array([float(c)]), np.array([1.0]))
        err = abs(choquet_expectation_discrete(rv, d, t) - c)
        max_const = max(max_const, err)
        details.append(("constant", float(c), err))

    max_scale = 0.0
    for c, rv in scale_cases:
        if c < 0.0:
            raise DomainError("monotonicity_suite: scale factors must be nonnegative")
        scaled = DiscreteRV(rv.support * float(c), rv.probs) if c > 0 else None
        base = choquet_expectation_discrete(rv, d, t)
        if scaled is None:
            err = 0.0
        else:
            err = abs(choquet_expectation_discrete(scaled, d, t) - c * base)
        max_scale = max(max_scale, err)
        details.append(("scaling", float(c), err))

    dominance_ok = True
    for lo, hi in dominated_pairs:
        if np.any(hi.support < lo.support) or not np.array_equal(lo.probs, hi.probs):
            raise DomainError(
                "monotonicity_suite: dominated pair needs identical probs and "
                "pointwise ordered support"
            )
        e_lo = choquet_expectation_discrete(lo, d, t)
        e_hi = choquet_expectation_discrete(hi, d, t)
        ok = e_lo <= e_hi + 1e-14
        dominance_ok = dominance_ok and ok
        details.append(("dominance", e_hi - e_lo, ok))

    return MonotonicityReport(
        max_constant_error=max_const,
        max_scaling_error=max_scale,
        dominance_ok=dominance_ok,
        details=details,
    )
