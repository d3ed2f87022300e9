"""Parametric probability distortion families.

A distortion is a continuous, strictly increasing map of [0,1] onto itself
with fixed endpoints.  Every family here evaluates phi_t(p), its first three
p-derivatives, and the time derivatives (zero unless the schedule is time
varying), all vectorized over numpy arrays.

Derivative evaluation clamps p into [EPS_P, 1-EPS_P] and counts the clamped
elements in a module-level diagnostics counter instead of raising, because
in every downstream use phi is composed with a survival probability that is
interior by construction.  The ``curvature_ratio`` / ``time_ratio`` methods
additionally accept the complement 1-p as a separately computed quantity,
which keeps the ratios exact deep in the tails where 1-p would round to 1
(the quantile-composition family needs this for tail drift evaluation).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import normal
from .errors import ConfigError, DomainError

EPS_P = 1e-12

# smallest positive double; interior formulas are evaluated on p clipped away
# from exact 0/1 and the endpoint values are overwritten afterwards
_TINY = 5e-324
_BELOW_ONE = 0.9999999999999999


class ClampDiagnostics:
    """Counts derivative evaluations whose p argument had to be clamped."""

    def __init__(self):
        self.count = 0

    def add(self, n):
        self.count += int(n)

    def reset(self):
        self.count = 0


CLAMP_DIAGNOSTICS = ClampDiagnostics()


@dataclass(frozen=True)
class DistortionDerivatives:
    """Partial derivatives of phi_t(p) at one point or one array of points."""

    dp: object
    dpp: object
    dppp: object
    dt: object
    dtp: object


def _asarray_prob(p, where):
    arr = np.asarray(p, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or not np.all(np.isfinite(arr)):
        raise DomainError(f"{where}: probability outside [0, 1]")
    return arr


def _clamp_counted(arr):
    mask = (arr < EPS_P) | (arr > 1.0 - EPS_P)
    n = np.count_nonzero(mask)
    if n:
        CLAMP_DIAGNOSTICS.add(n)
    return np.clip(arr, EPS_P, 1.0 - EPS_P)


def _scalar_like(value, template):
    if np.ndim(template) == 0 and np.ndim(value) == 0:
        return float(value)
    return value


class Distortion:
    """Base class; subclasses implement the interior formulas."""

    time_varying = False

    # -- interior formulas, p guaranteed in (0, 1), q = 1 - p trusted --------
    def _value(self, p, q):
        raise NotImplementedError

    def _d123(self, p, q):
        """Return (dp, dpp, dppp) on interior arrays."""
        raise NotImplementedError

    def _curvature(self, p, q):
        dp, dpp, _ = self._d123(p, q)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return dpp / dp

    # -- public API ----------------------------------------------------------
    def eval(self, t, p):
        """phi_t(p) with the endpoints pinned exactly."""
        arr = _asarray_prob(p, type(self).__name__ + ".eval")
        inner = np.clip(arr, _TINY, _BELOW_ONE)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            raw = self._value_t(t, inner, 1.0 - inner)
        out = np.where(arr == 0.0, 0.0, np.where(arr == 1.0, 1.0, raw))
        return _scalar_like(out, p)

    def _value_t(self, t, p, q):
        return self._value(p, q)

    def derivatives(self, t, p):
        arr = _asarray_prob(p, type(self).__name__ + ".derivatives")
        pc = _clamp_counted(arr)
        qc = 1.0 - pc
        dp, dpp, dppp = self._d123(pc, qc)
        zero = np.zeros_like(pc)
        return DistortionDerivatives(
            dp=_scalar_like(dp, p),
            dpp=_scalar_like(dpp, p),
            dppp=_scalar_like(dppp, p),
            dt=_scalar_like(zero, p),
            dtp=_scalar_like(zero, p),
        )

    def curvature_ratio(self, t, p, comp=None):
        """d2 phi / d1 phi at (t, p); pass comp = 1-p for tail-exact values."""
        if comp is None:
            arr = _asarray_prob(p, type(self).__name__ + ".curvature_ratio")
            pc = _clamp_counted(arr)
            out = self._curvature(pc, 1.0 - pc)
        else:
            pa = np.asarray(p, dtype=float)
            qa = np.asarray(comp, dtype=float)
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                out = self._curvature(pa, qa)
        return _scalar_like(out, p)

    def time_ratio(self, t, p, comp=None):
        """dt phi / dp phi at (t, p); identically zero for static schedules."""
        out = np.zeros_like(np.asarray(p, dtype=float))
        return _scalar_like(out, p)

    def to_dict(self):
        raise NotImplementedError

    def __repr__(self):
        items = ", ".join(f"{k}={v!r}" for k, v in self.to_dict().items() if k != "family")
        return f"{type(self).__name__}({items})"

    def __eq__(self, other):
        return isinstance(other, Distortion) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self.to_dict()))


class Identity(Distortion):
    """phi(p) = p."""

    def _value(self, p, q):
        return p

    def _d123(self, p, q):
        one = np.ones_like(p)
        zero = np.zeros_like(p)
        return one, zero, zero

    def _curvature(self, p, q):
        return np.zeros_like(p)

    def to_dict(self):
        return {"family": "identity"}


class Power(Distortion):
    """phi(p) = p**gamma, gamma > 0."""

    def __init__(self, gamma):
        gamma = float(gamma)
        if not (gamma > 0.0 and math.isfinite(gamma)):
            raise ConfigError(f"Power: gamma must be positive and finite, got {gamma}")
        self.gamma = gamma

    def _value(self, p, q):
        return p**self.gamma

    def _d123(self, p, q):
        g = self.gamma
        d1 = g * p ** (g - 1.0)
        d2 = g * (g - 1.0) * p ** (g - 2.0)
        d3 = g * (g - 1.0) * (g - 2.0) * p ** (g - 3.0)
        return d1, d2, d3

    def _curvature(self, p, q):
        return (self.gamma - 1.0) / p

    def to_dict(self):
        return {"family": "power", "gamma": self.gamma}


class KahnemanTversky(Distortion):
    """phi(p) = p**g / (p**g + (1-p)**g)**(1/g).

    The inverse-S weighting function; it is increasing only for g above
    roughly 0.279, so construction rejects gamma below 0.28.
    """

    GAMMA_FLOOR = 0.28

    def __init__(self, gamma):
        gamma = float(gamma)
        if not (self.GAMMA_FLOOR <= gamma < 1.0):
            raise ConfigError(
                "KahnemanTversky: gamma must lie in [0.28, 1); below about 0.279 "
                f"the curve stops being increasing (got {gamma})"
            )
        self.gamma = gamma

    def _value(self, p, q):
        g = self.gamma
        return p**g / (p**g + q**g) ** (1.0 / g)

    def _log_cascade(self, p, q):
        """(value, L1, L1', L1'') where L1 = phi'/phi."""
        g = self.gamma
        pg1 = p ** (g - 1.0)
        qg1 = q ** (g - 1.0)
        pg2 = p ** (g - 2.0)
        qg2 = q ** (g - 2.0)
        pg3 = p ** (g - 3.0)
        qg3 = q ** (g - 3.0)
        D = p * pg1 + q * qg1
        D1 = g * (pg1 - qg1)
        D2 = g * (g - 1.0) * (pg2 + qg2)
        D3 = g * (g - 1.0) * (g - 2.0) * (pg3 - qg3)
        val = (p * pg1) * D ** (-1.0 / g)
        L1 = g / p - D1 / (g * D)
        N = D2 * D - D1 * D1
        L1p = -g / p**2 - N / (g * D * D)
        Np = D3 * D - D1 * D2
        L1pp = 2.0 * g / p**3 - (Np / (D * D) - 2.0 * N * D1 / D**3) / g
        return val, L1, L1p, L1pp

    def _d123(self, p, q):
        val, L1, L1p, L1pp = self._log_cascade(p, q)
        d1 = val * L1
        d2 = val * (L1 * L1 + L1p)
        d3 = val * (L1**3 + 3.0 * L1 * L1p + L1pp)
        return d1, d2, d3

    def _curvature(self, p, q):
        _, L1, L1p, _ = self._log_cascade(p, q)
        return L1 + L1p / L1

    def to_dict(self):
        return {"family": "kahneman_tversky", "gamma": self.gamma}


class TverskyFox(Distortion):
    """phi(p) = a*p**g / (a*p**g + (1-p)**g), a > 0, 0 < g < 1."""

    def __init__(self, alpha, gamma):
        alpha = float(alpha)
        gamma = float(gamma)
        if not (alpha > 0.0 and math.isfinite(alpha)):
            raise ConfigError(f"TverskyFox: alpha must be positive, got {alpha}")
        if not (0.0 < gamma < 1.0):
            raise ConfigError(f"TverskyFox: gamma must lie in (0, 1), got {gamma}")
        self.alpha = alpha
        self.gamma = gamma

    def _value(self, p, q):
        a, g = self.alpha, self.gamma
        apg = a * p**g
        return apg / (apg + q**g)

    def _m_cascade(self, p, q):
        """(d1, M, M') where M = phi''/phi'."""
        a, g = self.alpha, self.gamma
        pg1 = p ** (g - 1.0)
        qg1 = q ** (g - 1.0)
        S = a * p * pg1 + q * qg1
        S1 = a * g * pg1 - g * qg1
        S2 = a * g * (g - 1.0) * pg1 / p + g * (g - 1.0) * qg1 / q
        d1 = a * g * (p * q) ** (g - 1.0) / (S * S)
        M = (g - 1.0) * (1.0 / p - 1.0 / q) - 2.0 * S1 / S
        Mp = (g - 1.0) * (-1.0 / p**2 - 1.0 / q**2) - 2.0 * (S2 * S - S1 * S1) / (S * S)
        return d1, M, Mp

    def _d123(self, p, q):
        d1, M, Mp = self._m_cascade(p, q)
        return d1, d1 * M, d1 * (M * M + Mp)

    def _curvature(self, p, q):
        _, M, _ = self._m_cascade(p, q)
        return M

    def to_dict(self):
        return {"family": "tversky_fox", "alpha": self.alpha, "gamma": self.gamma}


class Prelec(Distortion):
    """phi(p) = exp(-g * (-ln p)**a), g > 0, 0 < a < 1."""

    def __init__(self, gamma, alpha):
        gamma = float(gamma)
        alpha = float(alpha)
        if not (gamma > 0.0 and math.isfinite(gamma)):
            raise ConfigError(f"Prelec: gamma must be positive, got {gamma}")
        if not (0.0 < alpha < 1.0):
            raise ConfigError(f"Prelec: alpha must lie in (0, 1), got {alpha}")
        self.gamma = gamma
        self.alpha = alpha

    def _value(self, p, q):
        g, a = self.gamma, self.alpha
        w = -np.log(p)
        return np.exp(-g * w**a)

    def _m_cascade(self, p, q):
        g, a = self.gamma, self.alpha
        w = -np.log(p)
        wa1 = w ** (a - 1.0)
        val = np.exp(-g * w * wa1)
        d1 = val * g * a * wa1 / p
        M = g * a * wa1 / p - (a - 1.0) / (w * p) - 1.0 / p
        Mp = (
            -g * a * ((a - 1.0) * wa1 / w + wa1) / p**2
            + (a - 1.0) * (w - 1.0) / (w * w * p * p)
            + 1.0 / p**2
        )
        return d1, M, Mp

    def _d123(self, p, q):
        d1, M, Mp = self._m_cascade(p, q)
        return d1, d1 * M, d1 * (M * M + Mp)

    def _curvature(self, p, q):
        _, M, _ = self._m_cascade(p, q)
        return M

    def to_dict(self):
        return {"family": "prelec", "gamma": self.gamma, "alpha": self.alpha}


class Wang(Distortion):
    """phi(p) = F(F^{-1}(p) + alpha) with F the standard normal CDF.

    The curvature ratio phi''/phi' equals -alpha / F'(F^{-1}(p)); with the
    complement supplied it stays exact arbitrarily deep in either tail.
    """

    def __init__(self, alpha):
        alpha = float(alpha)
        if not math.isfinite(alpha):
            raise ConfigError(f"Wang: alpha must be finite, got {alpha}")
        self.alpha = alpha

    def _z(self, p, q):
        return normal.quantile_from_pair(p, q)

    def _value(self, p, q):
        return normal.cdf(self._z(p, q) + self.alpha)

    def _d123(self, p, q):
        a = self.alpha
        z = self._z(p, q)
        d1 = np.exp(a * (-z - 0.5 * a))  # pdf(z + a) / pdf(z) without underflow
        fz = normal.pdf(z)
        with np.errstate(divide="ignore", over="ignore"):
            d2 = d1 * (-a / fz)
            d3 = d1 * (a * (a - z) / (fz * fz))
        return d1, d2, d3

    def _curvature(self, p, q):
        z = self._z(p, q)
        with np.errstate(divide="ignore", over="ignore"):
            return -self.alpha / normal.pdf(z)

    def to_dict(self):
        return {"family": "wang", "alpha": self.alpha}


class TimeWeight:
    """Scalar weight f(t) with f(anchor) = 1 by construction.

    kinds: "constant" (f = 1), "exp" (f = exp(rate*(t-anchor))),
    "linear" (f = 1 + rate*(t-anchor)).
    """

    KINDS = ("constant", "exp", "linear")

    def __init__(self, kind="constant", rate=0.0, anchor=0.0):
        if kind not in self.KINDS:
            raise ConfigError(f"TimeWeight: unknown kind {kind!r}, expected one of {self.KINDS}")
        rate = float(rate)
        anchor = float(anchor)
        if not (math.isfinite(rate) and math.isfinite(anchor)):
            raise ConfigError("TimeWeight: rate and anchor must be finite")
        self.kind = kind
        self.rate = rate
        self.anchor = anchor

    def value(self, t):
        if self.kind == "constant":
            return 1.0
        if self.kind == "exp":
            return math.exp(self.rate * (t - self.anchor))
        return 1.0 + self.rate * (t - self.anchor)

    def derivative(self, t):
        if self.kind == "constant":
            return 0.0
        if self.kind == "exp":
            return self.rate * self.value(t)
        return self.rate

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate, "anchor": self.anchor}

    @classmethod
    def from_dict(cls, obj):
        extra = set(obj) - {"kind", "rate", "anchor"}
        if extra:
            raise ConfigError(f"TimeWeight: unknown keys {sorted(extra)}")
        return cls(obj.get("kind", "constant"), obj.get("rate", 0.0), obj.get("anchor", 0.0))


class SeparableProduct(Distortion):
    """Time-varying schedule phi_t(p) = f(t) * phi0(p) on the interior.

    Endpoints stay pinned to 0 and 1 exactly; for the schedule to be a valid
    distortion at time t the weight must satisfy 0 < f(t) <= 1, which eval
    enforces pointwise (larger weights would push interior values above 1).
    """

    time_varying = True

    def __init__(self, time_weight, base):
        if not isinstance(time_weight, TimeWeight):
            raise ConfigError("SeparableProduct: time_weight must be a TimeWeight")
        if not isinstance(base, Distortion):
            raise ConfigError("SeparableProduct: base must be a Distortion")
        if base.time_varying:
            raise ConfigError("SeparableProduct: base schedule must be time-invariant")
        self.time_weight = time_weight
        self.base = base

    def _weight_checked(self, t):
        f = self.time_weight.value(t)
        if not (0.0 < f <= 1.0 + 1e-12):
            raise DomainError(
                f"SeparableProduct: weight f({t}) = {f} leaves (0, 1]; the schedule is "
                "not a distortion at this time"
            )
        return min(f, 1.0)

    def _value_t(self, t, p, q):
        return self._weight_checked(t) * self.base._value(p, q)

    def _value(self, p, q):
        return self.base._value(p, q)

    def derivatives(self, t, p):
        arr = _asarray_prob(p, "SeparableProduct.derivatives")
        pc = _clamp_counted(arr)
        qc = 1.0 - pc
        f = self._weight_checked(t)
        fdot = self.time_weight.derivative(t)
        d1, d2, d3 = self.base._d123(pc, qc)
        val = self.base._value(pc, qc)
        return DistortionDerivatives(
            dp=_scalar_like(f * d1, p),
            dpp=_scalar_like(f * d2, p),
            dppp=_scalar_like(f * d3, p),
            dt=_scalar_like(fdot * val, p),
            dtp=_scalar_like(fdot * d1, p),
        )

    def _d123(self, p, q):
        raise NotImplementedError("time-varying schedule needs derivatives(t, p)")

    def curvature_ratio(self, t, p, comp=None):
        return self.base.curvature_ratio(t, p, comp)

    def time_ratio(self, t, p, comp=None):
        arr = _asarray_prob(p, "SeparableProduct.time_ratio")
        pc = _clamp_counted(arr)
        qc = 1.0 - pc
        f = self._weight_checked(t)
        fdot = self.time_weight.derivative(t)
        d1, _, _ = self.base._d123(pc, qc)
        out = (fdot / f) * self.base._value(pc, qc) / d1
        return _scalar_like(out, p)

    def to_dict(self):
        return {
            "family": "separable",
            "time_weight": self.time_weight.to_dict(),
            "base": self.base.to_dict(),
        }


# ---------------------------------------------------------------------------
# validation and serialization

@dataclass(frozen=True)
class DistortionValidation:
    """Grid maxima of the regularity ratio statistics plus shape checks."""

    curvature_stat: float  # max |dpp/dp| * p(1-p)
    third_stat: float      # max |dppp/dp| * p^2 (1-p)^2
    time_stat: float       # max |dt/dp| / (p(1-p))
    mixed_stat: float      # max |dtp/dp|
    monotone_ok: bool
    endpoints_ok: bool
    bound: float
    passed: bool


def validate_distortion(d, t_grid, p_grid, bound=10.0):
    """Evaluate the boundedness statistics of the regularity assumptions on a grid."""
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    p_grid = np.sort(np.asarray(p_grid, dtype=float))
    if t_grid.size == 0 or p_grid.size == 0:
        raise DomainError("validate_distortion: empty grid")
    if np.any(p_grid <= 0.0) or np.any(p_grid >= 1.0):
        raise DomainError("validate_distortion: p_grid must lie inside (0, 1)")

    curvature = third = time_stat = mixed = 0.0
    monotone_ok = True
    endpoints_ok = True
    pq = p_grid * (1.0 - p_grid)
    for t in t_grid:
        der = d.derivatives(t, p_grid)
        dp = np.asarray(der.dp)
        curvature = max(curvature, float(np.max(np.abs(der.dpp) / dp * pq)))
        third = max(third, float(np.max(np.abs(der.dppp) / dp * pq**2)))
        time_stat = max(time_stat, float(np.max(np.abs(der.dt) / dp / pq)))
        mixed = max(mixed, float(np.max(np.abs(der.dtp) / dp)))
        vals = np.asarray(d.eval(t, p_grid))
        if np.any(np.diff(vals) <= 0.0) or np.any(dp <= 0.0):
            monotone_ok = False
        if d.eval(t, 0.0) != 0.0 or d.eval(t, 1.0) != 1.0:
            endpoints_ok = False
    passed = bool(
        monotone_ok
        and endpoints_ok
        and max(curvature, third, time_stat, mixed) <= bound
    )
    return DistortionValidation(
        curvature_stat=curvature,
        third_stat=third,
        time_stat=time_stat,
        mixed_stat=mixed,
        monotone_ok=monotone_ok,
        endpoints_ok=endpoints_ok,
        bound=float(bound),
        passed=passed,
    )


_FAMILY_KEYS = {
    "identity": set(),
    "power": {"gamma"},
    "kahneman_tversky": {"gamma"},
    "tversky_fox": {"alpha", "gamma"},
    "prelec": {"gamma", "alpha"},
    "wang": {"alpha"},
    "separable": {"time_weight", "base"},
}


def distortion_from_dict(obj):
    """Build a Distortion from its JSON dict form; rejects unknown keys."""
    if not isinstance(obj, dict) or "family" not in obj:
        raise ConfigError("distortion spec must be a dict with a 'family' key")
    family = obj["family"]
    if family not in _FAMILY_KEYS:
        raise ConfigError(f"unknown distortion family {family!r}")
    extra = set(obj) - _FAMILY_KEYS[family] - {"family"}
    if extra:
        raise ConfigError(f"distortion family {family!r}: unknown keys {sorted(extra)}")
    missing = _FAMILY_KEYS[family] - set(obj)
    if missing:
        raise ConfigError(f"distortion family {family!r}: missing keys {sorted(missing)}")
    if family == "identity":
        return Identity()
    if family == "power":
        return Power(obj["gamma"])
    if family == "kahneman_tversky":
        return KahnemanTversky(obj["gamma"])
    if family == "tversky_fox":
        return TverskyFox(obj["alpha"], obj["gamma"])
    if family == "prelec":
        return Prelec(obj["gamma"], obj["alpha"])
    if family == "wang":
        return Wang(obj["alpha"])
    return SeparableProduct(TimeWeight.from_dict(obj["time_weight"]), distortion_from_dict(obj["base"]))


def distortion_to_dict(d):
    return d.to_dict()
