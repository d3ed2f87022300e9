"""Recombining binomial trees and the time-consistent distorted measure.

Applying a distortion naively to each one-step conditional expectation is not
consistent with the static distorted expectation (the two-period example
below exhibits the gap).  Consistency is restored by distorting the marginal
survival weights instead: with G_ij the survival P(X_i >= x_ij), the
distorted up-probabilities

    q_ij = [phi_{t_{i+1}}(G_{i+1,j+1}) - phi_{t_i}(G_{i,j+1})]
           / [phi_{t_i}(G_ij) - phi_{t_i}(G_{i,j+1})]

define an equivalent measure under which plain linear backward induction
reproduces the static Choquet value of every increasing terminal payoff, and
the induced node-wise distortion curves satisfy the tower property.  The
construction needs the interleaving condition ("mon2")

    phi_{t_i}(G_{i,j+1}) < phi_{t_{i+1}}(G_{i+1,j+1}) < phi_{t_i}(G_ij)

at every edge, which holds automatically for time-invariant schedules.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .choquet import DiscreteRV
from .errors import ConsistencyError, DomainError
from .report import canonical_json

# occupation masses below this underflow double precision so badly that the
# distorted-transition quotient becomes 0/0; such edges fall back to the
# undistorted transition (their contribution to any value is < 1e-280)
_DEGENERATE_DENOMINATOR = 1e-280
# near the other end of the scale, survival weights a few ulps below 1 map to
# phi values one ulp apart; a denominator at roundoff level relative to phi
# carries no information either (deep lattices hit this at the top tail)
_SATURATION_ULPS = 16.0 * np.finfo(float).eps
_PERMISSIVE_EPS = 1e-9


@dataclass(frozen=True)
class TreeModel:
    """Recombining binomial tree: level i has states x_i0 < ... < x_ii."""

    times: np.ndarray
    states: list
    up_prob: list

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = [np.asarray(s, dtype=float) for s in self.states]
        up_prob = [np.asarray(p, dtype=float) for p in self.up_prob]
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "up_prob", up_prob)
        n = times.size - 1
        if n < 1:
            raise DomainError("TreeModel: need at least two time points")
        if np.any(np.diff(times) <= 0.0):
            raise DomainError("TreeModel: times must be strictly increasing")
        if len(states) != n + 1 or len(up_prob) != n:
            raise DomainError(
                f"TreeModel: expected {n + 1} state levels and {n} transition levels, "
                f"got {len(states)} and {len(up_prob)}"
            )
        for i, s in enumerate(states):
            if s.shape != (i + 1,):
                raise DomainError(f"TreeModel: level {i} must hold {i + 1} states")
            if np.any(np.diff(s) <= 0.0):
                raise DomainError(f"TreeModel: states at level {i} not strictly increasing")
        for i, p in enumerate(up_prob):
            if p.shape != (i + 1,):
                raise DomainError(f"TreeModel: up_prob at level {i} must hold {i + 1} entries")
            if np.any((p <= 0.0) | (p >= 1.0)):
                raise DomainError(f"TreeModel: up_prob at level {i} must lie strictly in (0, 1)")
        for i in range(n):
            lo, hi = states[i + 1][:-1], states[i + 1][1:]
            if np.any(lo > states[i]) or np.any(hi < states[i]):
                raise DomainError(
                    f"TreeModel: children at level {i + 1} must straddle their parent states"
                )

    @property
    def n_periods(self):
        return self.times.size - 1

    def to_dict(self):
        return {
            "times": [float(t) for t in self.times],
            "states": [[float(x) for x in level] for level in self.states],
            "up_prob": [[float(p) for p in level] for level in self.up_prob],
        }

    @classmethod
    def from_dict(cls, obj):
        extra = set(obj) - {"times", "states", "up_prob"}
        if extra:
            raise DomainError(f"TreeModel: unknown keys {sorted(extra)}")
        try:
            return cls(obj["times"], obj["states"], obj["up_prob"])
        except KeyError as exc:
            raise DomainError(f"TreeModel: missing key {exc}") from exc


def save_tree(tree, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(tree.to_dict()))
        fh.write("\n")


def load_tree(path):
    with open(path, encoding="utf-8") as fh:
        return TreeModel.from_dict(json.load(fh))


def occupation_probabilities(tree):
    """Node occupation masses under the base measure, level by level."""
    levels = [np.array([1.0])]
    for i in range(tree.n_periods):
        w = levels[-1]
        p = tree.up_prob[i]
        nxt = np.zeros(i + 2)
        nxt[: i + 1] += w * (1.0 - p)
        nxt[1:] += w * p
        levels.append(nxt)
    return levels


def survival_probabilities(tree):
    """G_ij = P(X_i >= x_ij) for every node, as a list of level arrays."""
    out = []
    for w in occupation_probabilities(tree):
        g = np.cumsum(w[::-1])[::-1]
        g[0] = 1.0  # exactly, by construction
        out.append(g)
    return out


@dataclass(frozen=True)
class DistortedTree:
    """A TreeModel together with its distorted transition data."""

    base: TreeModel
    schedule: object
    survival: list
    q_up: list
    mon2_ok: list
    violations: list
    degenerate_edges: int

    @property
    def times(self):
        return self.base.times

    @property
    def states(self):
        return self.base.states

    @property
    def n_periods(self):
        return self.base.n_periods


def _phi_levels(tree, schedule, survival):
    """phi_{t_i}(G_i) per level; at the root time the distortion acts as the
    identity (G there is {1}, where every schedule is pinned anyway)."""
    out = [np.array([1.0])]
    for i in range(1, tree.n_periods + 1):
        out.append(np.asarray(schedule.eval(tree.times[i], np.clip(survival[i], 0.0, 1.0))))
    return out


def distort_tree(tree, schedule, strict=True):
    """Build the distorted transitions q_ij from the marginal survival weights.

    In strict mode an interleaving violation raises ConsistencyError naming
    the first offending node; otherwise the quotient is clamped into
    [1e-9, 1 - 1e-9] and the node is recorded in ``violations``.
    """
    survival = survival_probabilities(tree)
    phi = _phi_levels(tree, schedule, survival)
    q_up = []
    mon2_ok = []
    violations = []
    degenerate = 0
    for i in range(tree.n_periods):
        hi = phi[i]                      # phi_{t_i}(G_ij), j = 0..i
        lo = np.append(phi[i][1:], 0.0)  # phi_{t_i}(G_{i,j+1}), convention G_{i,i+1} = 0
        mid = phi[i + 1][1:]             # phi_{t_{i+1}}(G_{i+1,j+1})
        den = hi - lo
        num = mid - lo
        ok = (lo < mid) & (mid < hi)
        roundoff_scale = np.maximum(_DEGENERATE_DENOMINATOR, _SATURATION_ULPS * hi)
        dead = den < roundoff_scale
        # a tie or inversion whose magnitude is itself at roundoff scale is a
        # representation artifact, not a schedule violation: the interior
        # value provably lies strictly between its neighbours whenever the
        # exact phi values do, and here they differ by a few ulps at most
        dead |= ~ok & (np.maximum(lo - mid, mid - hi) <= roundoff_scale)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = num / den
        if np.any(dead):
            q = np.where(dead, tree.up_prob[i], q)
            ok = ok | dead
            degenerate += int(np.count_nonzero(dead))
        bad = ~ok
        if np.any(bad):
            if strict:
                j = int(np.argmax(bad))
                raise ConsistencyError(
                    f"distorted transition at node (i={i}, j={j}) leaves (0, 1): the "
                    "schedule moves too fast between these levels (interleaving "
                    "condition failed)"
                )
            violations.extend((i, int(j)) for j in np.nonzero(bad)[0])
            q = np.clip(q, _PERMISSIVE_EPS, 1.0 - _PERMISSIVE_EPS)
        q_up.append(q)
        mon2_ok.append(ok)
    return DistortedTree(
        base=tree,
        schedule=schedule,
        survival=survival,
        q_up=q_up,
        mon2_ok=mon2_ok,
        violations=violations,
        degenerate_edges=degenerate,
    )


def _check_increasing(values, where, tol=1e-12):
    if np.any(np.diff(values) < -tol):
        raise DomainError(f"{where}: values must be nondecreasing")


def backward_induction(dt, terminal_values, horizon=None):
    """Linear backward induction under the distorted transitions.

    terminal_values: payoff at every level-``horizon`` state, nondecreasing
    and nonnegative.  Returns the value arrays u_i for i = 0 .. horizon; each
    level is a convex combination of the next, so monotonicity propagates.
    """
    n = dt.n_periods if horizon is None else int(horizon)
    g = np.asarray(terminal_values, dtype=float)
    if g.shape != (n + 1,):
        raise DomainError(f"backward_induction: expected {n + 1} terminal values")
    _check_increasing(g, "backward_induction terminal payoff")
    if np.any(g < 0.0):
        raise DomainError("backward_induction: terminal payoff must be nonnegative")
    levels = [None] * (n + 1)
    levels[n] = g.copy()
    for i in range(n - 1, -1, -1):
        q = dt.q_up[i]
        nxt = levels[i + 1]
        levels[i] = (1.0 - q) * nxt[: i + 1] + q * nxt[1:]
        _check_increasing(levels[i], f"backward_induction level {i}")
    return levels


def _conditional_survival(trans, i, j, n):
    """Survival of X_n over level-n states given node (i, j), under ``trans``."""
    w = np.zeros(n + 1)
    w[j] = 1.0
    for k in range(i, n):
        p = trans[k]
        nxt = np.zeros(n + 1)
        nxt[: k + 1] += w[: k + 1] * (1.0 - p)
        nxt[1 : k + 2] += w[: k + 1] * p
        w = nxt
    surv = np.cumsum(w[::-1])[::-1]
    surv[: j + 1] = 1.0  # states at or below the current one are certain
    return surv


def q_conditional_survival(dt, i, j, n=None):
    """Q(X_n >= x_nk | X_i = x_ij) over k, under the distorted transitions."""
    n = dt.n_periods if n is None else int(n)
    if not (0 <= i < n <= dt.n_periods) or not (0 <= j <= i):
        raise DomainError(f"q_conditional_survival: invalid indices (i={i}, j={j}, n={n})")
    return _conditional_survival(dt.q_up, i, j, n)


def p_conditional_survival(dt, i, j, n=None):
    """P(X_n >= x_nk | X_i = x_ij) over k, under the base transitions."""
    n = dt.n_periods if n is None else int(n)
    if not (0 <= i < n <= dt.n_periods) or not (0 <= j <= i):
        raise DomainError(f"p_conditional_survival: invalid indices (i={i}, j={j}, n={n})")
    return _conditional_survival(dt.base.up_prob, i, j, n)


@dataclass(frozen=True)
class NodePhiTable:
    """The node-wise distortion curve: paired conditional survivals.

    The curve is uniquely determined at the attained base-measure survival
    probabilities and extended by linear interpolation in between, with the
    endpoints pinned to (0,0) and (1,1).
    """

    i: int
    j: int
    horizon: int
    p_surv: np.ndarray  # base-measure conditional survival, decreasing in k
    q_surv: np.ndarray  # distorted-measure conditional survival, decreasing in k
    knots_p: np.ndarray = field(repr=False, default=None)
    knots_q: np.ndarray = field(repr=False, default=None)

    def __call__(self, p):
        return np.interp(p, self.knots_p, self.knots_q)


def phi_at_node(dt, i, j, n=None):
    """Distortion curve of the consistent construction at node (i, j), horizon n.

    Reads only the transition data of the subtree rooted at (i, j)."""
    n = dt.n_periods if n is None else int(n)
    p_surv = p_conditional_survival(dt, i, j, n)
    q_surv = q_conditional_survival(dt, i, j, n)
    pts = {0.0: 0.0, 1.0: 1.0}
    for pk, qk in zip(p_surv, q_surv):
        pk = min(max(float(pk), 0.0), 1.0)
        qk = min(max(float(qk), 0.0), 1.0)
        if pk in pts and abs(pts[pk] - qk) > 1e-9:
            raise ConsistencyError(
                f"phi_at_node: node (i={i}, j={j}) maps survival {pk} to two values"
            )
        pts[pk] = qk
    knots_p = np.array(sorted(pts))
    knots_q = np.array([pts[k] for k in sorted(pts)])
    if np.any(np.diff(knots_q) < -1e-12):
        raise ConsistencyError(f"phi_at_node: curve at (i={i}, j={j}) is not increasing")
    return NodePhiTable(
        i=i, j=j, horizon=n, p_surv=p_surv, q_surv=q_surv, knots_p=knots_p, knots_q=knots_q
    )


def _choquet_with_curve(curve, p_surv, values):
    """Choquet sum of an increasing payoff against a node distortion curve."""
    w_hi = curve(np.clip(p_surv, 0.0, 1.0))
    w_lo = np.append(w_hi[1:], 0.0)
    return float(values @ (w_hi - w_lo))


def verify_tower(dt, terminal_values, r=0, s=None, n=None):
    """Max discrepancy between the direct and the composed distorted expectations.

    Both are evaluated two ways at every level-r node: linear backward
    induction under the distorted transitions, and explicit Choquet sums
    against the node distortion curves (direct over [r, n], and composed over
    [r, s] of the inner values over [s, n]).
    """
    n = dt.n_periods if n is None else int(n)
    s = (r + n) // 2 if s is None else int(s)
    if not (0 <= r < s < n <= dt.n_periods):
        raise DomainError(f"verify_tower: need r < s < n, got ({r}, {s}, {n})")
    g = np.asarray(terminal_values, dtype=float)
    levels = backward_induction(dt, g, horizon=n)
    u_r, u_s = levels[r], levels[s]

    worst = 0.0
    for j in range(s + 1):
        curve = phi_at_node(dt, s, j, n)
        inner = _choquet_with_curve(curve, curve.p_surv, g)
        worst = max(worst, abs(inner - u_s[j]))
    inner_vals = u_s
    for j in range(r + 1):
        direct_curve = phi_at_node(dt, r, j, n)
        direct = _choquet_with_curve(direct_curve, direct_curve.p_surv, g)
        outer_curve = phi_at_node(dt, r, j, s)
        composed = _choquet_with_curve(outer_curve, outer_curve.p_surv, inner_vals)
        worst = max(worst, abs(direct - u_r[j]))
        worst = max(worst, abs(composed - direct))
    return worst


def verify_initial_consistency(dt):
    """Max over all levels and states of |phi_{t_n}(G_nk) - Q(X_n >= x_nk)|."""
    phi = _phi_levels(dt.base, dt.schedule, dt.survival)
    worst = 0.0
    for n in range(1, dt.n_periods + 1):
        q_surv = _conditional_survival(dt.q_up, 0, 0, n)
        worst = max(worst, float(np.max(np.abs(phi[n] - q_surv))))
    return worst


def naive_nested_expectation(tree, d, terminal_values):
    """Level-by-level one-step distorted expectations, composed backward.

    This is the naive construction that fails the tower property; it is
    defined here for time-invariant schedules (each one-step expectation uses
    the distortion at the child's time)."""
    g = np.asarray(terminal_values, dtype=float)
    n = tree.n_periods
    if g.shape != (n + 1,):
        raise DomainError(f"naive_nested_expectation: expected {n + 1} terminal values")
    _check_increasing(g, "naive_nested_expectation terminal payoff")
    u = g.copy()
    for i in range(n - 1, -1, -1):
        p = tree.up_prob[i]
        w = np.asarray(d.eval(tree.times[i + 1], p))
        lo, hi = u[: i + 1], u[1 : i + 2]
        u = lo + (hi - lo) * w
        _check_increasing(u, f"naive_nested_expectation level {i}")
    return float(u[0])


def static_distorted_value(tree, d, terminal_values):
    """Static Choquet expectation of an increasing terminal payoff."""
    g = np.asarray(terminal_values, dtype=float)
    _check_increasing(g, "static_distorted_value terminal payoff")
    surv = survival_probabilities(tree)[-1]
    t_n = float(tree.times[-1])
    w_hi = np.asarray(d.eval(t_n, np.clip(surv, 0.0, 1.0)), dtype=float)
    w_lo = np.append(w_hi[1:], 0.0)
    return float(g @ (w_hi - w_lo))


def crossing_tree_residual(p1, p2, d1, d2, t1=1.0, t2=2.0):
    """Consistency residual of the two-period tree with crossing middle edges.

    Zero is necessary for a time-consistent node distortion to exist on that
    (non-recombining) geometry; the square distortion at p1 = p2 = 1/2 gives
    -1/8, the identity gives 0 for every (p1, p2)."""
    if not (0.0 < p1 < 1.0 and 0.0 < p2 < 1.0):
        raise DomainError("crossing_tree_residual: probabilities must lie in (0, 1)")
    a = d2.eval(t2, (1.0 + p2) / 2.0)
    b = d2.eval(t2, (1.0 - p1 + p2) / 2.0)
    c = d2.eval(t2, (1.0 - p1) / 2.0)
    return float(d1.eval(t1, 0.5) - (a - b + c))


# ---------------------------------------------------------------------------
# generators for randomized suites

def random_tree(rng, n_periods, p_range=(0.2, 0.8), dt=1.0, step=1.0):
    """Symmetric lattice states with independently drawn up-probabilities."""
    times = np.arange(n_periods + 1, dtype=float) * dt
    states = [np.array([(2 * j - i) * step for j in range(i + 1)]) for i in range(n_periods + 1)]
    up_prob = [rng.uniform(p_range[0], p_range[1], size=i + 1) for i in range(n_periods)]
    return TreeModel(times, states, up_prob)


def random_monotone_payoff(rng, n_states, scale=1.0):
    """Nonnegative nondecreasing payoff: normalized cumulative positive increments."""
    inc = rng.uniform(0.0, 1.0, size=n_states)
    g = np.cumsum(inc)
    top = g[-1]
    if top <= 0.0:
        return np.zeros(n_states)
    return scale * g / top


def terminal_law(tree, terminal_values=None):
    """The level-N law as a DiscreteRV (of the payoff if given, else the state)."""
    w = occupation_probabilities(tree)[-1]
    x = tree.states[-1] if terminal_values is None else np.asarray(terminal_values, float)
    keep = w > 0.0
    return DiscreteRV(x[keep], w[keep] / w[keep].sum())
