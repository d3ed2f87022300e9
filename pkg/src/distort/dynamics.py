"""Distorted dynamics in continuous time.

Under the distorted measure, values of increasing payoffs become ordinary
conditional expectations of a diffusion whose drift picks up two correction
terms along the survival field G(t, x) of the original process:

    mu(t, x) = b + dt_phi(t, G) / (dp_phi(t, G) rho)
                 - sigma^2 rho dpp_phi(t, G) / (2 dp_phi(t, G)).

This module evaluates mu (also for alternative diffusion coefficients of the
distorted process), solves the backward value PDE, simulates the distorted
dynamics, assembles the dynamic distortion curve

    Phi(s, t, x; p) = Gq(Gp^{-1}(p))

from the paired conditional survival curves, reduces general diffusion
coefficients to the unit case by a space change, and discretizes the
diffusion to a binomial lattice for convergence studies against the PDE.
"""

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from . import normal
from ._cn import march, uniform_spacing
from .density import DensityField, DiffusionSpec, gaussian_field, solve_survival_pde
from .errors import (
    AccuracyError,
    ConsistencyError,
    DomainError,
    NumericError,
    SingularityError,
)
from .tree import TreeModel, backward_induction, distort_tree

_DENOM_FLOOR = 1e-300
# half-width of the usable-density window, in standard deviations: survival
# ratios stay representable out to ~37 sigma, with margin for drift terms
_Z_USABLE = 34.0


# ---------------------------------------------------------------------------
# distorted drift

@dataclass
class DriftField:
    """mu(t, x) on a grid, with interpolation and extension diagnostics."""

    t_grid: np.ndarray
    x_grid: np.ndarray
    mu: np.ndarray
    provenance: dict = dataclass_field(default_factory=dict)
    extrapolations: int = 0

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.x_grid = np.asarray(self.x_grid, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        if self.mu.shape != (self.t_grid.size, self.x_grid.size):
            raise DomainError("DriftField: mu shape does not match the grids")
        if self.x_grid.size < 2 or np.any(np.diff(self.x_grid) <= 0.0):
            raise DomainError("DriftField: x_grid must be increasing with >= 2 points")
        if not np.all(np.isfinite(self.mu)):
            raise NumericError("DriftField: non-finite drift values")

    def row_at(self, t):
        """Drift slice at time t on the field's x grid (time held at the ends)."""
        tg = self.t_grid
        t = min(max(t, tg[0]), tg[-1])
        if tg.size == 1:
            return self.mu[0]
        k = int(np.clip(np.searchsorted(tg, t) - 1, 0, tg.size - 2))
        w = np.clip((t - tg[k]) / (tg[k + 1] - tg[k]), 0.0, 1.0)
        return (1.0 - w) * self.mu[k] + w * self.mu[k + 1]

    def mu_at(self, t, x, extrapolate="slope"):
        """Bilinear evaluation; x outside the grid extends by the edge slope
        or holds the edge value, counted either way."""
        row = self.row_at(t)
        xg = self.x_grid
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.interp(xs, xg, row)
        below, above = xs < xg[0], xs > xg[-1]
        n_out = int(np.count_nonzero(below) + np.count_nonzero(above))
        if n_out:
            self.extrapolations += n_out
            if extrapolate == "slope":
                lo_slope = (row[1] - row[0]) / (xg[1] - xg[0])
                hi_slope = (row[-1] - row[-2]) / (xg[-1] - xg[-2])
                out = np.where(below, row[0] + lo_slope * (xs - xg[0]), out)
                out = np.where(above, row[-1] + hi_slope * (xs - xg[-1]), out)
            elif extrapolate != "hold":
                raise DomainError(f"DriftField: unknown extrapolation {extrapolate!r}")
        if np.isscalar(x) or np.asarray(x).ndim == 0:
            return float(out[0])
        return out

    def growth_constant(self, x_center=None):
        """max |mu| / (1 + |x - c|) over the grid (the linear-growth gauge)."""
        c = 0.5 * (self.x_grid[0] + self.x_grid[-1]) if x_center is None else x_center
        scale = 1.0 + np.abs(self.x_grid - c)
        return float(np.max(np.abs(self.mu) / scale))


def _mu_core(d, field, b_rows, sigma_sq):
    """The distortion part of the drift: time term plus curvature term.

    Ratios are evaluated through the (p, 1-p) pair so that deep-tail cells
    keep the exact cancellation between a huge curvature ratio and a tiny
    density; a clamped evaluation would zero the drift out there.
    """
    t_grid = field.t_grid
    rho = field.rho
    mu = np.empty_like(rho)
    for i, t in enumerate(t_grid):
        g_row = field.G[i]
        c_row = field.G_comp[i]
        dp = np.asarray(d.derivatives(t, g_row).dp, dtype=float)
        denom = dp * rho[i]
        if np.any(denom < _DENOM_FLOOR):
            j = int(np.argmax(denom < _DENOM_FLOOR))
            raise SingularityError(
                f"distorted drift singular at t={t}, x={field.x_grid[j]} "
                f"(dp_phi * rho = {denom[j]:.3e}); restrict the field to cells "
                "with usable density"
            )
        tr = np.asarray(d.time_ratio(t, g_row, c_row), dtype=float)
        cr = np.asarray(d.curvature_ratio(t, g_row, c_row), dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            time_term = np.where(tr == 0.0, 0.0, tr / rho[i])
        curv_term = 0.5 * sigma_sq[i] * cr * rho[i]
        mu[i] = b_rows[i] + time_term - curv_term
    return mu


def compute_mu(d, field, b, sigma_const=1.0):
    """Distorted drift on the field's grid for unit (or constant) sigma."""
    if sigma_const <= 0.0:
        raise DomainError("compute_mu: sigma_const must be positive")
    x = field.x_grid
    b_rows = np.vstack(
        [np.broadcast_to(np.asarray(b(t, x), dtype=float), x.shape) for t in field.t_grid]
    )
    sigma_sq = np.full((field.t_grid.size, 1), float(sigma_const) ** 2)
    mu = _mu_core(d, field, b_rows, sigma_sq)
    return DriftField(
        field.t_grid.copy(), x.copy(), mu,
        provenance={"distortion": d.to_dict(), "sigma": float(sigma_const)},
    )


def general_sigma_mu(d, field, b, sigma, sigma_check):
    """Drift of the distorted dynamics when its diffusion coefficient is
    chosen as sc = sigma_check instead of sigma:

        mu = b - sigma d_x sigma + sc d_x sc
             + (sc^2 - sigma^2) d_x rho / (2 rho)
             + dt_phi / (dp_phi rho) - sc^2 rho dpp_phi / (2 dp_phi).

    With sigma_check identical to sigma the extra terms cancel exactly and
    the result reduces to compute_mu."""
    x = field.x_grid
    t_grid = field.t_grid
    shape = x.shape

    def rows(fn):
        return np.vstack(
            [np.broadcast_to(np.asarray(fn(t, x), dtype=float), shape) for t in t_grid]
        )

    b_rows = rows(b)
    sig = rows(sigma)
    sig_c = rows(sigma_check)
    if np.any(sig <= 0.0) or np.any(sig_c <= 0.0):
        raise DomainError("general_sigma_mu: diffusion coefficients must be positive")
    core = _mu_core(d, field, b_rows, sig_c**2)
    dsig = np.gradient(sig, x, axis=1)
    dsig_c = np.gradient(sig_c, x, axis=1)
    extra = sig_c * dsig_c - sig * dsig
    factor = 0.5 * (sig_c**2 - sig**2)
    if np.any(factor != 0.0):
        drho = np.gradient(field.rho, x, axis=1)
        bad = (factor != 0.0) & (field.rho < _DENOM_FLOOR)
        if np.any(bad):
            i, j = np.unravel_index(int(np.argmax(bad)), bad.shape)
            raise SingularityError(
                f"general_sigma_mu: d_x rho / rho undefined at t={t_grid[i]}, "
                f"x={x[j]} where the density vanishes"
            )
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = drho / field.rho
        extra = extra + np.where(factor != 0.0, factor * ratio, 0.0)
    return DriftField(
        t_grid.copy(), x.copy(), core + extra,
        provenance={"distortion": d.to_dict(), "sigma": "general"},
    )


def smoothed_step_payload(center=0.2, width=0.25):
    """Bounded increasing payload: a tanh ramp from 0 to 1 around center."""
    c, w = float(center), float(width)
    if w <= 0.0:
        raise DomainError("smoothed_step_payload: width must be positive")
    return lambda x: 0.5 * (1.0 + np.tanh((np.asarray(x, dtype=float) - c) / w))


def wang_mu_closed(alpha):
    """The exact distorted drift for the quantile-shift family with b = 0."""
    a = float(alpha)

    def mu(t, x):
        return (a / (2.0 * np.sqrt(np.asarray(t, dtype=float)))) * np.ones_like(
            np.asarray(x, dtype=float)
        )

    return mu


# ---------------------------------------------------------------------------
# backward value PDE

@dataclass(frozen=True)
class PDESolution:
    """u(s, x) with u(t_end, .) = g; increasing slices, maximum principle."""

    s_grid: np.ndarray
    x_grid: np.ndarray
    u: np.ndarray
    g_range: tuple
    projection: float = 0.0
    max_principle_defect: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.s_grid, dtype=float)
        x = np.asarray(self.x_grid, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if u.shape != (s.size, x.size):
            raise DomainError("PDESolution: shape mismatch")
        if not np.all(np.isfinite(u)):
            raise NumericError("PDESolution: non-finite values")
        lo, hi = self.g_range
        defect = float(max(np.max(u) - hi, lo - np.min(u), 0.0))
        if defect > 1e-9:
            raise NumericError(
                f"PDESolution: maximum principle violated by {defect:.2e}"
            )
        u = np.clip(u, lo, hi)
        proj = np.maximum.accumulate(u, axis=1)
        object.__setattr__(self, "projection", float(np.max(np.abs(proj - u))))
        object.__setattr__(self, "max_principle_defect", defect)
        object.__setattr__(self, "s_grid", s)
        object.__setattr__(self, "x_grid", x)
        object.__setattr__(self, "u", proj)

    def u_at(self, s, x):
        sg = self.s_grid
        if not (sg[0] - 1e-12 <= s <= sg[-1] + 1e-12):
            raise DomainError(f"PDESolution: s={s} outside [{sg[0]}, {sg[-1]}]")
        k = int(np.clip(np.searchsorted(sg, s) - 1, 0, sg.size - 2))
        w = np.clip((s - sg[k]) / (sg[k + 1] - sg[k]), 0.0, 1.0)
        row = (1.0 - w) * self.u[k] + w * self.u[k + 1]
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(xs < self.x_grid[0] - 1e-12) or np.any(xs > self.x_grid[-1] + 1e-12):
            raise DomainError("PDESolution: x outside the grid")
        out = np.interp(xs, self.x_grid, row)
        return float(out[0]) if np.isscalar(x) or np.asarray(x).ndim == 0 else out


def _payload_on_grid(g, x):
    vals = np.asarray(g(x) if callable(g) else g, dtype=float)
    if vals.shape != x.shape:
        raise DomainError("payload does not match the grid")
    if np.any(np.diff(vals) < -1e-12):
        raise DomainError("payload must be nondecreasing")
    return vals


def _velocity_from(mu, x_grid):
    if isinstance(mu, DriftField):
        return lambda tm: mu.mu_at(tm, x_grid, extrapolate="slope")
    if callable(mu):
        return lambda tm: np.broadcast_to(
            np.asarray(mu(tm, x_grid), dtype=float), x_grid.shape
        ).copy()
    raise DomainError("mu must be a DriftField or a callable (t, x) -> drift")


def solve_distorted_pde(mu, g, s_min, t_end, x_grid, n_steps=400, s_grid=None,
                        sigma_const=1.0, rannacher=2):
    """Backward CN sweep of d_s u + 1/2 sigma^2 d_xx u + mu d_x u = 0.

    Marches the time-reversed equation with reflecting boundaries; slices
    are clipped to the payload range and projected monotone, with both
    magnitudes recorded on the solution.  A visible payload gradient at the
    spatial boundary means the domain cut off transported mass, reported as
    an accuracy error."""
    x = np.asarray(x_grid, dtype=float)
    uniform_spacing(x)
    if s_grid is None:
        if not (0.0 <= s_min < t_end):
            raise DomainError("solve_distorted_pde: need 0 <= s_min < t_end")
        s_grid = np.linspace(s_min, t_end, n_steps + 1)
    else:
        s_grid = np.asarray(s_grid, dtype=float)
        if abs(s_grid[-1] - t_end) > 1e-12 or np.any(np.diff(s_grid) <= 0.0):
            raise DomainError("solve_distorted_pde: s_grid must increase up to t_end")
    g_vals = _payload_on_grid(g, x)
    vel = _velocity_from(mu, x)
    tau = t_end - s_grid[::-1]

    u_tau = march(
        g_vals, x, tau, 0.5 * sigma_const**2, lambda tm: vel(t_end - tm),
        bc="neumann", theta=0.5, rannacher=rannacher, keep_all=True,
    )
    u = u_tau[::-1]
    dx = x[1] - x[0]
    rng_g = (float(np.min(g_vals)), float(np.max(g_vals)))
    # a near-constant payload has no boundary layer to detect; floor the
    # normalization at roundoff scale of the payload magnitude
    span = max(rng_g[1] - rng_g[0], 1e-9 * (1.0 + abs(rng_g[1])))
    edge = max(
        float(np.max(np.abs(u[:, 1] - u[:, 0]))),
        float(np.max(np.abs(u[:, -1] - u[:, -2]))),
    ) / (dx * span)
    if edge > 1e-4:
        raise AccuracyError(
            f"solve_distorted_pde: boundary gradient {edge:.2e} (payload range "
            "per unit x); widen x_grid"
        )
    return PDESolution(s_grid, x, u, g_range=rng_g)


# ---------------------------------------------------------------------------
# Monte Carlo of the distorted dynamics

@dataclass(frozen=True)
class QSimResult:
    mean: float
    std_error: float
    paths: int
    seed: int
    survival_y: np.ndarray
    survival: np.ndarray
    extrapolations: int


def simulate_q_dynamics(mu, s, x, t, paths=100_000, steps=200, seed=0, g=None,
                        y_grid=None, sigma_const=1.0):
    """Euler scheme for the distorted dynamics from (s, x) to time t.

    Drift queries outside the field hold the nearest value and are counted.
    Returns mean and batch-means standard error of g at the terminal time
    (identity payoff if g is None) plus the empirical survival curve."""
    if isinstance(mu, DriftField):
        look = lambda tm, xs: mu.mu_at(tm, xs, extrapolate="hold")
        start_extrap = mu.extrapolations
    elif callable(mu):
        look = lambda tm, xs: np.broadcast_to(
            np.asarray(mu(tm, xs), dtype=float), xs.shape
        )
        start_extrap = None
    else:
        raise DomainError("simulate_q_dynamics: mu must be a DriftField or callable")
    if not (s < t):
        raise DomainError("simulate_q_dynamics: need s < t")
    if paths < 1 or steps < 1:
        raise DomainError("simulate_q_dynamics: need paths >= 1 and steps >= 1")
    dt = (t - s) / steps
    sqdt = math.sqrt(dt)
    nb = min(40, paths)
    base, extra = divmod(paths, nb)
    sizes = [base + (1 if k < extra else 0) for k in range(nb)]
    terminal = []
    means = []
    for idx, size in enumerate(sizes):
        rng = np.random.Generator(
            np.random.Philox(key=np.array([seed, idx], dtype=np.uint64))
        )
        z = rng.standard_normal((size, steps))
        cur = np.full(size, float(x))
        for k in range(steps):
            cur = cur + look(s + k * dt, cur) * dt + sigma_const * sqdt * z[:, k]
        if not np.all(np.isfinite(cur)):
            raise NumericError("simulate_q_dynamics: paths diverged")
        terminal.append(cur)
        means.append(np.mean(g(cur) if g is not None else cur))
    means = np.asarray(means, dtype=float)
    mean = float(np.mean(means))
    se = (
        float(np.std(means, ddof=1) / np.sqrt(len(means)))
        if len(means) > 1 else float("nan")
    )
    allt = np.concatenate(terminal)
    if y_grid is None:
        lo, hi = np.quantile(allt, [0.001, 0.999])
        y_grid = np.linspace(lo, hi, 101)
    else:
        y_grid = np.asarray(y_grid, dtype=float)
    surv = np.mean(allt[:, None] >= y_grid[None, :], axis=0)
    n_extrap = 0 if start_extrap is None else int(mu.extrapolations - start_extrap)
    return QSimResult(
        mean=mean, std_error=se, paths=paths, seed=seed,
        survival_y=y_grid, survival=surv, extrapolations=n_extrap,
    )


# ---------------------------------------------------------------------------
# the dynamic distortion curve

@dataclass(frozen=True)
class PhiCurve:
    """Phi(s, t, x; p) assembled from paired conditional survival curves."""

    s: float
    t: float
    x: float
    p_grid: np.ndarray
    values: np.ndarray
    y_grid: np.ndarray
    surv_p: np.ndarray
    surv_q: np.ndarray
    meta: dict = dataclass_field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.p_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if p.shape != v.shape:
            raise DomainError("PhiCurve: grid/value shape mismatch")
        if p[0] != 0.0 or p[-1] != 1.0 or v[0] != 0.0 or v[-1] != 1.0:
            raise ConsistencyError("PhiCurve: endpoints must be pinned to (0,0), (1,1)")
        if np.any(np.diff(p) <= 0.0):
            raise DomainError("PhiCurve: p_grid must be strictly increasing")
        if np.any(np.diff(v) < -1e-9):
            raise ConsistencyError("PhiCurve: values must be nondecreasing in p")
        object.__setattr__(self, "p_grid", p)
        object.__setattr__(self, "values", np.maximum.accumulate(v))

    def __call__(self, p):
        out = np.interp(np.asarray(p, dtype=float), self.p_grid, self.values)
        return float(out) if np.isscalar(p) or np.asarray(p).ndim == 0 else out


def _invert_decreasing(fn, lo, hi, v_lo, v_hi, target):
    """Bisection inverse of a decreasing curve to 1e-12.

    Equal values form a flat stretch; the tie goes to the smaller y, so
    equality at the midpoint pulls the right bracket in."""
    if target >= v_lo:
        return float(lo)
    if target <= v_hi:
        return float(hi)
    lo, hi = float(lo), float(hi)
    for _ in range(200):
        if hi - lo <= 1e-12 * max(1.0, abs(lo), abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if fn(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def _sqrt_graded(s, t, n):
    """Time points with equal sqrt increments; resolves drifts ~ 1/sqrt(t)."""
    root = np.linspace(math.sqrt(s), math.sqrt(t), n + 1)
    grid = root**2
    grid[0], grid[-1] = s, t
    return grid


def _smoothed_indicators(y_grid, x, width):
    z = (x[None, :] - y_grid[:, None]) / width
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _debias_smoothed(y_grid, surv, width):
    """Remove the leading smoothing bias of the logistic payload.

    The smoothed indicator equals the exact survival convolved in y with a
    logistic kernel of variance pi^2 width^2 / 3, so subtracting
    var/2 * d2 surv / dy2 cancels the second-order term."""
    var = (math.pi * width) ** 2 / 3.0
    d2 = np.gradient(np.gradient(surv, y_grid), y_grid)
    return surv - 0.5 * var * d2


def _field_equals_drift(mu_field, drift):
    """True when every drift-field row equals the base drift bit for bit."""
    for i, ti in enumerate(mu_field.t_grid):
        row = np.asarray(drift(float(ti), mu_field.x_grid), dtype=float)
        row = np.broadcast_to(row, mu_field.x_grid.shape)
        if not np.array_equal(mu_field.mu[i], row):
            return False
    return True


def build_phi_curve(d, spec, s, t, x, p_grid=None, drift_const=None, field=None,
                    mu=None, s_min=None, n_steps=800, n_march=1601, n_y=161,
                    y_width=3.9):
    """Assemble Phi(s, t, x; .) by pairing conditional survival curves.

    The undistorted curve Gp comes from the Gaussian closed form when the
    drift is declared constant (drift_const), else from a survival-PDE
    restart at (s, x) regularized to a narrow Gaussian.  The distorted curve
    Gq solves the backward value PDE for a sweep of smoothed indicator
    payloads in one multi-payload march, then removes the smoothing bias.
    The drift of the distorted dynamics is taken from mu when given (field
    or callable), else computed from the supplied or internally built
    density field.  The inverse of Gp is taken by bisection to 1e-12, ties
    toward the smaller y."""
    if s <= 0.0:
        raise DomainError(
            "build_phi_curve: s = 0 is rejected; the time-zero law is a point "
            "mass and the curve is the static distortion by definition"
        )
    if s_min is None:
        s_min = 0.01 * spec.T
    if s < s_min:
        raise DomainError(
            f"build_phi_curve: s={s} below s_min={s_min}; pass s_min explicitly "
            "to query conditional curves this close to time zero"
        )
    if not (s < t <= spec.T + 1e-12):
        raise DomainError("build_phi_curve: need 0 < s < t <= T")
    if p_grid is None:
        p_grid = np.linspace(0.002, 0.998, 499)
    p_grid = np.asarray(p_grid, dtype=float)
    if np.any((p_grid < 0.0) | (p_grid > 1.0)):
        raise DomainError("build_phi_curve: p_grid must lie in [0, 1]")

    gap = t - s
    sq_gap = math.sqrt(gap)
    if drift_const is not None:
        b_sx = float(drift_const)
    else:
        b_sx = float(np.asarray(spec.drift(s, np.asarray([x], dtype=float)))[0])
    center = x + b_sx * gap
    y_grid = np.linspace(center - y_width * sq_gap, center + y_width * sq_gap, n_y)

    # undistorted conditional survival at the y probes
    if drift_const is not None:
        surv_p = normal.sf((y_grid - center) / sq_gap)
    else:
        half_c = (y_width + 5.0) * sq_gap
        xg_c = np.linspace(x - half_c, x + half_c, max(n_march, 2401))
        tg_c = np.linspace(s, t, 401)
        cond = solve_survival_pde(spec, tg_c, xg_c, initial=(x + b_sx * 1e-4, 1e-4))
        surv_p = np.interp(y_grid, xg_c, cond.G[-1])

    # march domain for the distorted survival sweep, centered on the anchor
    # so the evaluation point is an exact node
    half_m = (y_width + 5.6) * sq_gap + abs(center - x)
    c_m = x
    pde_x = x + np.linspace(-half_m, half_m, n_march)
    dx = pde_x[1] - pde_x[0]

    mu_src = "given"
    if mu is None:
        if field is None:
            if drift_const is not None:
                half_f = min(half_m + abs(c_m - spec.x0), _Z_USABLE * math.sqrt(s))
                nf = max(801, int(2.0 * half_f / dx) | 1)
                xg_f = np.linspace(spec.x0 - half_f, spec.x0 + half_f, nf)
                field = gaussian_field(spec.x0, _sqrt_graded(s, t, 200), xg_f,
                                       drift=b_sx)
                mu_src = "gaussian-field"
            else:
                # a survival field carried in floats saturates at G = 1 near
                # seven standard deviations, where the density read off the
                # grid collapses to exact zeros; trim the drift field there
                # and let the march extend it by the edge slope
                wide_half = 8.0 * math.sqrt(spec.T)
                wide = np.linspace(
                    spec.x0 - wide_half, spec.x0 + wide_half, max(n_march, 1601)
                )
                full = solve_survival_pde(spec, np.linspace(1e-3, t, 801), wide)
                half_f = min(half_m + abs(c_m - spec.x0), 7.0 * math.sqrt(s))
                keep_t = full.t_grid >= s - 1e-12
                keep_x = np.abs(wide - spec.x0) <= half_f + 1e-12
                field = DensityField(
                    full.t_grid[keep_t],
                    wide[keep_x],
                    full.rho[np.ix_(keep_t, keep_x)],
                    full.G[np.ix_(keep_t, keep_x)],
                    G_comp=full.G_comp[np.ix_(keep_t, keep_x)],
                )
                mu_src = "pde-field"
        else:
            mu_src = "given-field"
        mu = compute_mu(d, field, spec.drift)

    # when the computed drift equals the base drift bit for bit (identity
    # schedule, any base dynamics) the distorted and undistorted survival
    # curves solve the same PDE from the same data, so the pairing is the
    # diagonal exactly; return it without a march
    if isinstance(mu, DriftField) and _field_equals_drift(mu, spec.drift):
        knots_p = [0.0]
        for p in np.sort(p_grid):
            if 0.0 < p < 1.0 and p > knots_p[-1]:
                knots_p.append(float(p))
        knots_p.append(1.0)
        kp = np.asarray(knots_p)
        return PhiCurve(
            s=float(s), t=float(t), x=float(x), p_grid=kp, values=kp.copy(),
            y_grid=y_grid, surv_p=surv_p, surv_q=surv_p.copy(),
            meta={"distortion": d.to_dict(), "mu_source": mu_src,
                  "debias": 0.0, "identity_dynamics": True},
        )

    # distorted conditional survival: one backward march, one payload per y
    width = 2.0 * dx
    payloads = _smoothed_indicators(y_grid, pde_x, width)
    vel = _velocity_from(mu, pde_x)
    r_grid = _sqrt_graded(s, t, n_steps)
    tau = t - r_grid[::-1]
    u_final = march(
        payloads, pde_x, tau, 0.5, lambda tm: vel(t - tm),
        bc="neumann", theta=0.5, rannacher=2,
    )
    cols = np.clip(u_final, 0.0, 1.0)
    surv_q_raw = np.array([float(np.interp(x, pde_x, row)) for row in cols])
    surv_q = np.clip(_debias_smoothed(y_grid, surv_q_raw, width), 0.0, 1.0)
    surv_q = np.minimum.accumulate(surv_q)

    # cubic interpolants keep the curve pairing from reintroducing the
    # O(dy^2) kink error of piecewise-linear reads
    sp_q = CubicSpline(y_grid, surv_q)
    if drift_const is not None:
        gp = lambda yv: float(normal.sf((yv - center) / sq_gap))
    else:
        sp_p = CubicSpline(y_grid, surv_p)
        gp = lambda yv: float(sp_p(yv))

    knots_p = [0.0]
    knots_v = [0.0]
    for p in np.sort(p_grid):
        if p <= 0.0 or p >= 1.0 or p <= knots_p[-1]:
            continue
        y_star = _invert_decreasing(gp, y_grid[0], y_grid[-1],
                                    float(surv_p[0]), float(surv_p[-1]), p)
        knots_p.append(float(p))
        knots_v.append(float(np.clip(sp_q(y_star), 0.0, 1.0)))
    knots_p.append(1.0)
    knots_v.append(1.0)
    debias_mag = float(np.max(np.abs(surv_q - np.clip(surv_q_raw, 0.0, 1.0))))
    return PhiCurve(
        s=float(s), t=float(t), x=float(x),
        p_grid=np.asarray(knots_p), values=np.asarray(knots_v),
        y_grid=y_grid, surv_p=surv_p, surv_q=surv_q,
        meta={"distortion": d.to_dict(), "mu_source": mu_src, "debias": debias_mag},
    )


def wang_phi_closed(alpha, s, t):
    """Closed-form curve for the quantile-shift family with b = 0."""
    shift = alpha * (math.sqrt(t) - math.sqrt(s)) / math.sqrt(t - s)

    def curve(p):
        arr = np.asarray(p, dtype=float)
        inner = np.clip(arr, 1e-300, 1.0 - 1e-16)
        out = normal.cdf(normal.quantile(inner) + shift)
        out = np.where(arr <= 0.0, 0.0, np.where(arr >= 1.0, 1.0, out))
        return float(out) if np.isscalar(p) or arr.ndim == 0 else out

    return curve


def wang_value_closed(alpha, g, s, t_end, x):
    """Quadrature reference for the distorted value of an increasing payload
    under the quantile-shift family with b = 0:

        u(s, x) = E[ g(x + alpha (sqrt(t_end) - sqrt(s)) + Z sqrt(t_end - s)) ].
    """
    shift = alpha * (math.sqrt(t_end) - math.sqrt(s))
    sq = math.sqrt(t_end - s)
    z = np.linspace(-12.0, 12.0, 4801)
    w = normal.pdf(z)
    vals = np.asarray(g(x + shift + sq * z), dtype=float)
    return float(np.trapezoid(vals * w, z))


# ---------------------------------------------------------------------------
# general diffusion coefficient: space change to the unit case

@dataclass(frozen=True)
class LampertiResult:
    spec_hat: DiffusionSpec
    psi: object
    psi_inv: object


def lamperti_transform(spec, c0=1e-8, sigma_time_invariant=True):
    """Reduce dX = b dt + sigma dB to unit diffusion by the space change
    psi(t, x) = integral_0^x dy / sigma(t, y).

    Returns the transformed spec and both coordinate maps; the transformed
    drift is bhat = [dt_psi + b/sigma - 1/2 dx_sigma] at psi_inv.  The
    survival identities G(t, x) = Ghat(t, psi(t, x)) and rho(t, x) =
    rhohat(t, psi(t, x)) / sigma(t, x) pull densities back to the original
    coordinates."""
    if spec.sigma is None:
        ident = lambda t, xq: np.asarray(xq, dtype=float) + 0.0
        return LampertiResult(spec_hat=spec, psi=ident, psi_inv=ident)
    sigma = spec.sigma
    span = 8.0 * math.sqrt(spec.T)
    probes = np.linspace(spec.x0 - span, spec.x0 + span, 81)
    vals = np.asarray(sigma(0.0, probes), dtype=float)
    if np.any(vals < c0):
        raise DomainError(
            f"lamperti_transform: sigma drops below {c0} on the probe grid; "
            "the space change is not invertible there"
        )

    def sig_scalar(t, xv):
        return float(np.asarray(sigma(t, np.asarray([xv], dtype=float)))[0])

    def psi_scalar(t, xv):
        val, _ = quad(lambda y: 1.0 / sig_scalar(t, y), 0.0, xv, limit=200)
        return val

    def psi(t, xq):
        xs = np.atleast_1d(np.asarray(xq, dtype=float))
        out = np.array([psi_scalar(t, v) for v in xs])
        return float(out[0]) if np.isscalar(xq) or np.asarray(xq).ndim == 0 else out

    def psi_inv(t, zq):
        zs = np.atleast_1d(np.asarray(zq, dtype=float))
        out = np.empty_like(zs)
        for i, z in enumerate(zs):
            lo, hi = -1.0, 1.0
            while psi_scalar(t, lo) > z:
                lo *= 2.0
                if lo < -1e12:
                    raise NumericError("lamperti_transform: inverse bracket failed")
            while psi_scalar(t, hi) < z:
                hi *= 2.0
                if hi > 1e12:
                    raise NumericError("lamperti_transform: inverse bracket failed")
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if hi - lo <= 1e-12 * max(1.0, abs(mid)):
                    break
                if psi_scalar(t, mid) < z:
                    lo = mid
                else:
                    hi = mid
            out[i] = 0.5 * (lo + hi)
        return float(out[0]) if np.isscalar(zq) or np.asarray(zq).ndim == 0 else out

    h = 1e-6

    def b_hat(t, zq):
        zs = np.atleast_1d(np.asarray(zq, dtype=float))
        xs = np.asarray(psi_inv(t, zs), dtype=float).reshape(zs.shape)
        b_val = np.broadcast_to(np.asarray(spec.drift(t, xs), dtype=float), zs.shape)
        s_val = np.array([sig_scalar(t, v) for v in xs])
        ds_dx = np.array(
            [(sig_scalar(t, v + h) - sig_scalar(t, v - h)) / (2.0 * h) for v in xs]
        )
        out = b_val / s_val - 0.5 * ds_dx
        if not sigma_time_invariant:
            dpsi_dt = np.array(
                [(psi_scalar(t + h, v) - psi_scalar(t - h, v)) / (2.0 * h) for v in xs]
            )
            out = out + dpsi_dt
        return float(out[0]) if np.isscalar(zq) or np.asarray(zq).ndim == 0 else out

    spec_hat = DiffusionSpec(drift=b_hat, x0=float(psi(0.0, spec.x0)), T=spec.T)
    return LampertiResult(spec_hat=spec_hat, psi=psi, psi_inv=psi_inv)


# ---------------------------------------------------------------------------
# lattice discretization and convergence

def lattice_from_diffusion(spec, N):
    """Binomial lattice on the sqrt(h) grid with moment-matched transitions:
    states x0 + (2j - i) sqrt(h), up-probability 1/2 + 1/2 b sqrt(h).

    The one-step mean is b h exactly and the raw second moment is h, so the
    variance is h - (b h)^2; both identities are asserted at construction."""
    if not spec.unit_sigma:
        raise DomainError("lattice_from_diffusion: requires unit sigma")
    if N < 1:
        raise DomainError("lattice_from_diffusion: need N >= 1")
    h = spec.T / N
    sq = math.sqrt(h)
    times = np.linspace(0.0, spec.T, N + 1)
    states = [spec.x0 + (2.0 * np.arange(i + 1) - i) * sq for i in range(N + 1)]
    up_prob = []
    for i in range(N):
        b_row = np.broadcast_to(
            np.asarray(spec.drift(times[i], states[i]), dtype=float), states[i].shape
        )
        p = 0.5 + 0.5 * b_row * sq
        if np.any((p <= 0.0) | (p >= 1.0)):
            worst = float(np.max(np.abs(b_row)))
            n_min = int(math.ceil(spec.T * worst**2)) + 1
            raise DomainError(
                f"lattice_from_diffusion: |b| sqrt(h) >= 1 at level {i}; "
                f"this drift needs N > {n_min}"
            )
        mean_inc = (2.0 * p - 1.0) * sq
        var_inc = h - mean_inc**2
        if np.max(np.abs(mean_inc - b_row * h)) > 1e-12 * max(1.0, sq):
            raise NumericError("lattice_from_diffusion: mean increment mismatch")
        if np.max(np.abs(var_inc - (h - (b_row * h) ** 2))) > 1e-12 * max(1.0, h):
            raise NumericError("lattice_from_diffusion: variance mismatch")
        up_prob.append(np.asarray(p, dtype=float))
    return TreeModel(times, states, up_prob)


@dataclass(frozen=True)
class ConvergenceReport:
    N_list: list
    errors: list
    slope: float
    skipped: list
    reference: float


def convergence_study(spec, d, g, N_list, eval_t, eval_x, u_ref=None, strict=True):
    """Backward-induction values on refining lattices against a PDE reference.

    Each N gets its own survival weights and distorted transitions; the
    value is read at (eval_t, eval_x), interpolated across the level when
    the state is off-lattice.  Lattices whose transitions violate the
    interleaving condition are skipped and reported.  The slope is the
    least-squares fit of log error against log N."""
    if u_ref is None:
        half = 8.0 * math.sqrt(spec.T)
        xg = np.linspace(spec.x0 - half, spec.x0 + half, 1601)
        pde_field = solve_survival_pde(spec, np.linspace(1e-3, spec.T, 801), xg)
        keep_t = pde_field.t_grid >= eval_t - 1e-9
        keep_x = np.abs(xg - spec.x0) <= 7.0 * math.sqrt(eval_t) + 1e-12
        trimmed = DensityField(
            pde_field.t_grid[keep_t],
            xg[keep_x],
            pde_field.rho[np.ix_(keep_t, keep_x)],
            pde_field.G[np.ix_(keep_t, keep_x)],
            G_comp=pde_field.G_comp[np.ix_(keep_t, keep_x)],
        )
        mu = compute_mu(d, trimmed, spec.drift)
        sol = solve_distorted_pde(mu, g, eval_t, spec.T, xg, n_steps=800)
        u_ref = sol.u_at(eval_t, eval_x)
    errors = []
    used = []
    skipped = []
    for N in N_list:
        tree = lattice_from_diffusion(spec, int(N))
        try:
            dt_tree = distort_tree(tree, d, strict=strict)
        except ConsistencyError:
            skipped.append(int(N))
            continue
        g_term = _payload_on_grid(g, tree.states[-1])
        levels = backward_induction(dt_tree, g_term)
        i_float = eval_t / (spec.T / int(N))
        i = int(round(i_float))
        if abs(i_float - i) > 1e-9:
            raise DomainError(
                f"convergence_study: eval_t={eval_t} is not a lattice level "
                f"for N={N}"
            )
        val = float(np.interp(eval_x, tree.states[i], levels[i]))
        errors.append(abs(val - u_ref))
        used.append(int(N))
    slope = float("nan")
    if len(used) >= 2:
        A = np.vstack([np.log(np.asarray(used, float)), np.ones(len(used))]).T
        coef, *_ = np.linalg.lstsq(A, np.log(np.maximum(errors, 1e-300)), rcond=None)
        slope = float(coef[0])
    return ConvergenceReport(
        N_list=used, errors=[float(e) for e in errors], slope=slope,
        skipped=skipped, reference=float(u_ref),
    )
