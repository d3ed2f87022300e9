"""Survival/density fields for dX = b dt + dB and their estimators.

Three independent routes to rho(t, x) and G(t, x) = P(X_t >= x):

  * closed form (driftless or constant drift): Gaussian kernels;
  * a forward finite-difference solve of d_t G = 1/2 d_xx G - b d_x G,
    started from a narrow Gaussian bump because the time-zero point mass has
    no density;
  * Monte Carlo over Brownian bridges pinned at (t, x): the density equals
    the Gaussian kernel times E[exp(I)], where I integrates the drift along
    the bridge.  When an antiderivative of b is registered the exponent is
    integrated by parts, which removes the stochastic integral; for constant
    drift that route is fully deterministic (zero variance).

The routes share no code, so pairwise agreement is a real check.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import normal
from ._cn import march, uniform_spacing
from .errors import AccuracyError, ConfigError, DomainError, NumericError
from .report import read_csv, write_csv

_T_INIT_MIN = 1e-3
_RHO_FLOOR = 1e-10
_MAGIC = b"DFLD"
_BINARY_VERSION = 1


@dataclass(frozen=True)
class DiffusionSpec:
    """Coefficients of dX = b(t, X) dt + sigma(t, X) dB from (x0, 0) to T.

    drift and sigma must accept (t, x) with array x and broadcast; sigma=None
    means the unit coefficient (the solvers below require exactly that; use
    lamperti_transform to reduce a general sigma first).
    """

    drift: object
    x0: float
    T: float
    sigma: object = None

    def __post_init__(self):
        if not callable(self.drift):
            raise DomainError("DiffusionSpec: drift must be callable")
        if self.sigma is not None and not callable(self.sigma):
            raise DomainError("DiffusionSpec: sigma must be callable or None")
        if not (np.isfinite(self.T) and self.T > 0.0):
            raise DomainError("DiffusionSpec: T must be positive")
        if not np.isfinite(self.x0):
            raise DomainError("DiffusionSpec: x0 must be finite")
        b0 = np.asarray(self.drift(0.0, np.array([self.x0])), dtype=float)
        if not np.all(np.isfinite(b0)):
            raise DomainError("DiffusionSpec: drift is not finite at (0, x0)")

    @property
    def unit_sigma(self):
        return self.sigma is None


def constant_drift(c):
    c = float(c)
    return lambda t, x: np.full_like(np.asarray(x, dtype=float), c)


def default_grids(spec, nt=800, nx=1601, t_init=_T_INIT_MIN, width=8.0):
    half = width * np.sqrt(spec.T)
    x_grid = np.linspace(spec.x0 - half, spec.x0 + half, nx)
    t_grid = np.linspace(t_init, spec.T, nt)
    return t_grid, x_grid


@dataclass(frozen=True)
class DensityField:
    """rho and G on a (t, x) grid, with G projected monotone in x.

    G_comp holds 1 - G computed by whatever accurate route the producer had
    available (the complement loses all precision near G = 1 if formed by
    subtraction, which is exactly where the tail diagnostics need it).
    """

    t_grid: np.ndarray
    x_grid: np.ndarray
    rho: np.ndarray
    G: np.ndarray
    G_comp: np.ndarray = None
    projection: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        x = np.asarray(self.x_grid, dtype=float)
        rho = np.asarray(self.rho, dtype=float)
        G = np.asarray(self.G, dtype=float)
        if t.ndim != 1 or x.ndim != 1 or np.any(np.diff(t) <= 0) or np.any(np.diff(x) <= 0):
            raise DomainError("DensityField: grids must be 1-D increasing")
        if rho.shape != (t.size, x.size) or G.shape != rho.shape:
            raise DomainError("DensityField: field shapes do not match the grids")
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(G))):
            raise NumericError("DensityField: non-finite field values")
        if np.any(rho < -1e-9):
            raise NumericError("DensityField: density has significant negative values")
        rho = np.maximum(rho, 0.0)
        proj = np.minimum.accumulate(np.clip(G, 0.0, 1.0), axis=1)
        object.__setattr__(self, "projection", float(np.max(np.abs(proj - G))))
        comp = self.G_comp if self.G_comp is not None else 1.0 - proj
        comp = np.clip(np.asarray(comp, dtype=float), 0.0, 1.0)
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "x_grid", x)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "G", proj)
        object.__setattr__(self, "G_comp", comp)

    def _locate(self, grid, v):
        if grid.size < 2:
            raise DomainError("interpolation needs at least two grid entries")
        if not (grid[0] - 1e-12 <= v <= grid[-1] + 1e-12):
            raise DomainError(f"query {v} outside grid [{grid[0]}, {grid[-1]}]")
        k = int(np.clip(np.searchsorted(grid, v) - 1, 0, grid.size - 2))
        w = (v - grid[k]) / (grid[k + 1] - grid[k])
        return k, float(np.clip(w, 0.0, 1.0))

    def slice_at(self, t):
        """(rho_row, G_row) at time t by linear blending of adjacent rows."""
        k, w = self._locate(self.t_grid, t)
        return (
            (1.0 - w) * self.rho[k] + w * self.rho[k + 1],
            (1.0 - w) * self.G[k] + w * self.G[k + 1],
        )

    def rho_at(self, t, x):
        return self._bilinear(self.rho, t, x)

    def G_at(self, t, x):
        return self._bilinear(self.G, t, x)

    def _bilinear(self, M, t, x):
        k, w = self._locate(self.t_grid, t)
        row = (1.0 - w) * M[k] + w * M[k + 1]
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.interp(xs, self.x_grid, row)
        lo, hi = self.x_grid[0], self.x_grid[-1]
        if np.any(xs < lo - 1e-12) or np.any(xs > hi + 1e-12):
            raise DomainError("query outside the x grid")
        return float(out[0]) if np.isscalar(x) or np.asarray(x).ndim == 0 else out

    def mass(self):
        """Integral of rho over x for every time slice."""
        return np.trapezoid(self.rho, self.x_grid, axis=1)


def gaussian_field(x0, t_grid, x_grid, drift=0.0):
    """Closed-form field for unit diffusion: X_t ~ N(x0 + drift*t, t)."""
    t = np.asarray(t_grid, dtype=float)
    x = np.asarray(x_grid, dtype=float)
    if np.any(t <= 0.0):
        raise DomainError("gaussian_field: all grid times must be positive")
    sd = np.sqrt(t)[:, None]
    z = (x[None, :] - x0 - drift * t[:, None]) / sd
    rho = normal.pdf(z) / sd
    return DensityField(t, x, rho, normal.sf(z), G_comp=normal.cdf(z))


def solve_survival_pde(spec, t_grid, x_grid, initial=None):
    """Forward CN solve of d_t G = 1/2 d_xx G - b d_x G with G(t, -inf)=1.

    The march starts at t_grid[0] from a Gaussian bump: by default the
    driftless kernel at t_grid[0] shifted by b(0, x0) * t_grid[0]; a custom
    (mean, variance) pair supports conditional restarts from later states.
    rho comes from centered differencing of G.
    """
    if not spec.unit_sigma:
        raise DomainError("solve_survival_pde: requires sigma = 1; apply lamperti_transform")
    t = np.asarray(t_grid, dtype=float)
    x = np.asarray(x_grid, dtype=float)
    uniform_spacing(x)
    if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0.0):
        raise DomainError("solve_survival_pde: t_grid must be increasing")
    if initial is None:
        if t[0] < _T_INIT_MIN:
            raise DomainError(
                f"solve_survival_pde: first grid time {t[0]} below {_T_INIT_MIN}; "
                "the time-zero law is a point mass and has no density"
            )
        b0 = float(np.asarray(spec.drift(0.0, np.array([spec.x0])), dtype=float)[0])
        mean, var = spec.x0 + b0 * t[0], t[0]
    else:
        mean, var = float(initial[0]), float(initial[1])
        if var <= 0.0:
            raise DomainError("solve_survival_pde: initial variance must be positive")
    z0 = (x - mean) / np.sqrt(var)
    g0 = normal.sf(z0)
    if g0[0] < 1.0 - 1e-9 or g0[-1] > 1e-9:
        raise AccuracyError("solve_survival_pde: initial bump touches the boundary; widen x_grid")

    def velocity(tm):
        return -np.asarray(spec.drift(tm, x), dtype=float)

    # two implicit start steps damp the high frequencies of the initial bump
    # (it can sit on just a few cells after a conditional restart)
    G = march(
        g0, x, t, 0.5, velocity, bc="dirichlet", bc_values=(1.0, 0.0),
        rannacher=2, keep_all=True,
    )
    G = np.clip(G, 0.0, 1.0)
    rho = -np.gradient(G, x, axis=1)
    # mass conservation is automatic with pinned boundary values (the density
    # integral telescopes to G_left - G_right), so a leak shows up as the
    # solution visibly touching the boundary instead
    leak = float(max(np.max(1.0 - G[:, 1]), np.max(G[:, -2])))
    if leak > 1e-3:
        raise AccuracyError(
            f"solve_survival_pde: solution reaches the boundary (leak {leak:.2e}); "
            "widen x_grid"
        )
    return DensityField(t, x, rho, G)


# ---------------------------------------------------------------------------
# Brownian bridge Monte Carlo

@dataclass(frozen=True)
class SmoothDriftData:
    """Antiderivative data enabling the integrated-by-parts bridge exponent.

    antiderivative(t, x) = integral of b(t, y) dy from 0 to x; drift_dx is
    the x-derivative of b; antiderivative_dt is the t-derivative of the
    antiderivative (None for time-invariant drift).
    """

    antiderivative: object
    drift_dx: object
    antiderivative_dt: object = None


@dataclass(frozen=True)
class BridgeEstimate:
    value: float
    std_error: float
    paths: int
    seed: int
    route: str


def _bridge_batches(paths, max_batches=40):
    sizes = []
    nb = min(max_batches, paths)
    base, extra = divmod(paths, nb)
    for k in range(nb):
        sizes.append(base + (1 if k < extra else 0))
    return sizes


def _sample_bridge(rng, size, steps, t, x0, x):
    """Exact sequential draw of the bridge from (0, x0) to (t, x); the
    conditional law of the next point is Gaussian, so no scheme error enters
    the path law itself, only the exponent quadrature."""
    dt = t / steps
    path = np.empty((size, steps + 1))
    path[:, 0] = x0
    z = rng.standard_normal((size, steps))
    cur = np.full(size, x0)
    for k in range(steps):
        remain = t - k * dt
        mean = cur + (x - cur) * (dt / remain)
        var = dt * (remain - dt) / remain
        cur = mean + np.sqrt(max(var, 0.0)) * z[:, k]
        path[:, k + 1] = cur
    path[:, -1] = x
    return path


def bridge_density_mc(spec, t, x, paths=100_000, steps=200, seed=0, smooth=None):
    """Estimate rho(t, x) as Gaussian kernel times E[exp(I)] over bridges.

    I is the drift functional along the bridge: by-parts form when smooth
    drift data is given, left-point Ito sums otherwise.  Standard error by
    batch means over counter-keyed generators, so the estimate is identical
    regardless of how batches would be scheduled.
    """
    if not spec.unit_sigma:
        raise DomainError("bridge_density_mc: requires sigma = 1")
    if not (0.0 < t <= spec.T):
        raise DomainError(f"bridge_density_mc: t={t} outside (0, T]")
    if paths < 1 or steps < 2:
        raise DomainError("bridge_density_mc: need paths >= 1 and steps >= 2")
    x0 = spec.x0
    kernel = np.exp(-((x - x0) ** 2) / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)
    dt = t / steps
    s_left = dt * np.arange(steps)
    means = []
    sizes = _bridge_batches(paths)
    for idx, size in enumerate(sizes):
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, idx], dtype=np.uint64)))
        path = _sample_bridge(rng, size, steps, t, x0, x)
        left = path[:, :-1]
        b_left = np.asarray(spec.drift(s_left, left), dtype=float)
        if smooth is None:
            incr = np.diff(path, axis=1)
            with np.errstate(over="ignore", invalid="ignore"):
                expo = np.sum(b_left * incr, axis=1) - 0.5 * dt * np.sum(b_left**2, axis=1)
        else:
            bbar = smooth.antiderivative
            head = bbar(t, np.array([x]))[0] - bbar(0.0, np.array([x0]))[0]
            core = 0.5 * np.asarray(smooth.drift_dx(s_left, left), dtype=float)
            core = core + 0.5 * b_left**2
            if smooth.antiderivative_dt is not None:
                core = core + np.asarray(smooth.antiderivative_dt(s_left, left), dtype=float)
            expo = head - dt * np.sum(core, axis=1)
        if not np.all(np.isfinite(expo)):
            raise NumericError(
                f"bridge_density_mc: non-finite exponent in batch {idx} "
                f"(drift blowup along the bridge near t={t}, x={x})"
            )
        means.append(np.mean(np.exp(expo)))
    means = np.asarray(means)
    est = float(kernel * np.mean(means))
    if len(means) > 1:
        se = float(kernel * np.std(means, ddof=1) / np.sqrt(len(means)))
    else:
        se = float("nan")
    route = "direct" if smooth is None else "by-parts"
    return BridgeEstimate(value=est, std_error=se, paths=paths, seed=seed, route=route)


def bridge_martingale_variance(t, s_values, paths=20_000, steps=400, seed=0):
    """Empirical variances of the bridge martingale M_s = int dB_r / (t - r).

    Increments are independent Gaussians with exact variances
    1/(t - s_next) - 1/(t - s_prev), so this checks the time-change claim
    Var M_s = s / (t (t - s)) without any quadrature error.
    """
    s_values = np.asarray(s_values, dtype=float)
    if np.any((s_values <= 0.0) | (s_values >= t)):
        raise DomainError("bridge_martingale_variance: need 0 < s < t")
    s_grid = np.unique(np.concatenate([np.linspace(0.0, s_values.max(), steps), s_values]))
    var_inc = 1.0 / (t - s_grid[1:]) - 1.0 / (t - s_grid[:-1])
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
    z = rng.standard_normal((paths, var_inc.size))
    m = np.cumsum(np.sqrt(var_inc) * z, axis=1)
    out = []
    for s in s_values:
        k = int(np.searchsorted(s_grid, s)) - 1
        out.append(float(np.var(m[:, k], ddof=1)))
    return np.asarray(out)


# ---------------------------------------------------------------------------
# tail diagnostics

@dataclass(frozen=True)
class TailDiagnostics:
    max_grad_log_rho: float
    ratio_min: float
    ratio_max: float
    scaled_floor: float
    cells_used: int
    cells_skipped: int


def tail_ratio_diagnostics(field, t0, x_center=None):
    """Grid evidence for the tail regularity of the field at times >= t0.

    Reports max |d_x rho| / rho and the range of r = G (1-G) / rho over
    cells with rho above a floor, together with min of r * (1 + |x - c|)
    (the quantity the theory keeps bounded away from zero).
    """
    t = field.t_grid
    if not (t[0] - 1e-12 <= t0 <= t[-1] + 1e-12):
        raise DomainError("tail_ratio_diagnostics: t0 outside the field's time grid")
    c = field.x_grid[len(field.x_grid) // 2] if x_center is None else float(x_center)
    sel = t >= t0 - 1e-12
    rho = field.rho[sel]
    G = field.G[sel]
    comp = field.G_comp[sel]
    drho = np.gradient(rho, field.x_grid, axis=1)
    keep = rho >= _RHO_FLOOR
    if not np.any(keep):
        raise DomainError("tail_ratio_diagnostics: no cells above the density floor")
    grad = float(np.max(np.abs(drho[keep]) / rho[keep]))
    ratio = G[keep] * comp[keep] / rho[keep]
    scale = 1.0 + np.abs(np.broadcast_to(field.x_grid, rho.shape)[keep] - c)
    return TailDiagnostics(
        max_grad_log_rho=grad,
        ratio_min=float(ratio.min()),
        ratio_max=float(ratio.max()),
        scaled_floor=float((ratio * scale).min()),
        cells_used=int(keep.sum()),
        cells_skipped=int(keep.size - keep.sum()),
    )


# ---------------------------------------------------------------------------
# serialization

def field_to_csv(field, path):
    nt, nx = field.rho.shape
    tt = np.repeat(field.t_grid, nx)
    xx = np.tile(field.x_grid, nt)
    write_csv(path, ["t", "x", "rho", "G"], [tt, xx, field.rho.ravel(), field.G.ravel()])


def field_from_csv(path):
    header, cols = read_csv(path)
    if header != ["t", "x", "rho", "G"]:
        raise ConfigError(f"field_from_csv: unexpected header {header}")
    tt, xx, rho, G = cols
    t_grid = np.unique(tt)
    x_grid = np.unique(xx)
    nt, nx = t_grid.size, x_grid.size
    if nt * nx != rho.size:
        raise ConfigError("field_from_csv: grid is not rectangular")
    return DensityField(t_grid, x_grid, rho.reshape(nt, nx), G.reshape(nt, nx))


def field_to_binary(field, path):
    nt, nx = field.rho.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", _MAGIC, _BINARY_VERSION, nt, nx))
        for arr in (field.t_grid, field.x_grid, field.rho, field.G):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def field_from_binary(path):
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16:
            raise ConfigError("field_from_binary: truncated header")
        magic, version, nt, nx = struct.unpack("<4sIII", head)
        if magic != _MAGIC:
            raise ConfigError(f"field_from_binary: bad magic {magic!r}")
        if version != _BINARY_VERSION:
            raise ConfigError(f"field_from_binary: unsupported version {version}")
        body = np.frombuffer(fh.read(), dtype="<f8")
    want = nt + nx + 2 * nt * nx
    if body.size != want:
        raise ConfigError(f"field_from_binary: expected {want} doubles, found {body.size}")
    t_grid = body[:nt]
    x_grid = body[nt : nt + nx]
    rho = body[nt + nx : nt + nx + nt * nx].reshape(nt, nx)
    G = body[nt + nx + nt * nx :].reshape(nt, nx)
    return DensityField(t_grid, x_grid, rho, G)
