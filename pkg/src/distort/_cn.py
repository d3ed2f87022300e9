"""Shared theta-scheme stepper for the 1-D parabolic solvers.

Discretizes L u = D u'' + v u' on a uniform grid with centered differences,
switching to one-sided advection in cells where |v| dx > 2 D (the centered
stencil loses positivity there and Crank-Nicolson would oscillate).  Both
survival and value equations march through here; they differ only in the
sign convention of the velocity and the boundary treatment.
"""

import numpy as np
from scipy.linalg import solve_banded

from .errors import DomainError


def uniform_spacing(x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise DomainError("grid must be 1-D with at least 3 points")
    dx = np.diff(x)
    if np.any(dx <= 0.0) or (dx.max() - dx.min()) > 1e-9 * dx.mean():
        raise DomainError("grid must be uniform and increasing")
    return float(dx.mean())


def operator_bands(x, diffusion, velocity=None, bc="dirichlet"):
    """Tridiagonal bands (lower, diag, upper) of L u = D u'' + v u'.

    Dirichlet rows are zeroed so boundary values stay frozen; Neumann rows
    use a reflected ghost node (zero normal derivative)."""
    dx = uniform_spacing(x)
    n = x.size
    d = np.broadcast_to(np.asarray(diffusion, dtype=float), (n,)).copy()
    if np.any(d <= 0.0):
        raise DomainError("diffusion coefficient must be positive")
    v = np.zeros(n) if velocity is None else np.broadcast_to(
        np.asarray(velocity, dtype=float), (n,)
    ).copy()
    if not np.all(np.isfinite(v)):
        raise DomainError("velocity contains non-finite entries")
    base = d / dx**2
    lower = base - v / (2.0 * dx)
    upper = base + v / (2.0 * dx)
    diag = -2.0 * base
    wind = np.abs(v) * dx > 2.0 * d
    if np.any(wind):
        pos = wind & (v > 0.0)
        neg = wind & (v < 0.0)
        lower[pos] = base[pos]
        upper[pos] = base[pos] + v[pos] / dx
        diag[pos] = -2.0 * base[pos] - v[pos] / dx
        lower[neg] = base[neg] - v[neg] / dx
        upper[neg] = base[neg]
        diag[neg] = -2.0 * base[neg] + v[neg] / dx
    if bc == "dirichlet":
        lower[-1] = diag[0] = diag[-1] = upper[0] = 0.0
    elif bc == "neumann":
        diag[0] = -2.0 * base[0]
        upper[0] = 2.0 * base[0]
        lower[-1] = 2.0 * base[-1]
        diag[-1] = -2.0 * base[-1]
    else:
        raise DomainError(f"unknown boundary condition {bc!r}")
    lower[0] = upper[-1] = 0.0
    return lower, diag, upper


def apply_operator(u, bands):
    lower, diag, upper = bands
    out = diag * u
    out[..., :-1] += upper[:-1] * u[..., 1:]
    out[..., 1:] += lower[1:] * u[..., :-1]
    return out


def theta_step(u, bands, dt, theta=0.5, bc_values=None):
    """Advance (I - theta dt L) u_next = (I + (1-theta) dt L) u by one step.

    u may be (n,) or (k, n) for several payloads sharing the operator."""
    lower, diag, upper = bands
    n = diag.size
    rhs = u + ((1.0 - theta) * dt) * apply_operator(u, bands) if theta < 1.0 else u.copy()
    ab = np.zeros((3, n))
    ab[0, 1:] = -theta * dt * upper[:-1]
    ab[1, :] = 1.0 - theta * dt * diag
    ab[2, :-1] = -theta * dt * lower[1:]
    out = solve_banded((1, 1), ab, rhs.T if u.ndim == 2 else rhs)
    if u.ndim == 2:
        out = out.T
    if bc_values is not None:
        out[..., 0] = bc_values[0]
        out[..., -1] = bc_values[1]
    return out


def march(u0, x, times, diffusion, velocity=None, bc="dirichlet", bc_values=None,
          theta=0.5, rannacher=0, keep_all=False):
    """March u0 across ``times``.

    velocity: None, a fixed array over x, or a callable t -> array over x
    (evaluated at interval midpoints).  The first ``rannacher`` intervals are
    integrated with two fully implicit half steps to damp rough payloads.
    Returns the final slice, or the full (nt, nx) history when keep_all.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0.0):
        raise DomainError("times must be increasing with at least 2 entries")
    u = np.array(u0, dtype=float)
    if u.shape[-1] != np.asarray(x).size:
        raise DomainError("initial data does not match the grid")
    if keep_all and u.ndim != 1:
        raise DomainError("keep_all supports a single payload")
    static = velocity is None or not callable(velocity)
    bands = operator_bands(x, diffusion, velocity, bc) if static else None
    history = [u.copy()] if keep_all else None
    for k in range(times.size - 1):
        dt = times[k + 1] - times[k]
        if not static:
            v = velocity(0.5 * (times[k] + times[k + 1]))
            bands = operator_bands(x, diffusion, v, bc)
        if k < rannacher:
            u = theta_step(u, bands, 0.5 * dt, theta=1.0, bc_values=bc_values)
            u = theta_step(u, bands, 0.5 * dt, theta=1.0, bc_values=bc_values)
        else:
            u = theta_step(u, bands, dt, theta=theta, bc_values=bc_values)
        if keep_all:
            history.append(u.copy())
    return np.vstack(history) if keep_all else u
