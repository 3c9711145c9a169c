"""Monotonicity, convexity and inequality monitors with explicit verdicts.

Every monitor produces either a MonitorSeries (values over an abscissa with a
direction or convexity verdict at a stated additive slack) or a small report
dataclass.  Verdicts are pure functions of (values, property, slack), so
re-evaluation is deterministic.  Discretization bias is budgeted through the
slacks: transport-backed checks default to 1e-3, curve-identity checks to
1e-4.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import geodesics, transport
from .diffusion import DiffusionState
from .errors import (
    ConfigError,
    InvalidFieldEntry,
    NoConvergence,
    NonPositiveDensity,
)

WEAKLY_DECREASING = "weakly-decreasing"
CONVEX = "convex"
LE_BOUND = "le-bound"

TRANSPORT_SLACK = 1e-3
IDENTITY_SLACK = 1e-4


@dataclass(frozen=True)
class MonitorSeries:
    """Values over an abscissa together with the property they must satisfy."""

    name: str
    abscissa_kind: str       # "tau" | "s" | "inv_sqrt_tau" | "pair"
    abscissa: np.ndarray
    values: np.ndarray
    property: str
    slack: float
    bound: Optional[np.ndarray] = None

    def worst_violation(self) -> float:
        v = self.values
        if self.property == WEAKLY_DECREASING:
            return float(np.max(np.diff(v))) if v.size >= 2 else -np.inf
        if self.property == CONVEX:
            if v.size < 3:
                return -np.inf
            d2 = v[:-2] - 2 * v[1:-1] + v[2:]
            return float(-np.min(d2))
        if self.property == LE_BOUND:
            bound = 0.0 if self.bound is None else self.bound
            return float(np.max(v - bound))
        raise ConfigError(f"unknown monitor property {self.property!r}")

    def passed(self) -> bool:
        return self.worst_violation() <= self.slack

    @property
    def verdict(self) -> str:
        return "pass" if self.passed() else "fail"

    def to_csv(self, path):
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write("abscissa,value\n")
            for x, v in zip(self.abscissa, self.values):
                fh.write(f"{x:.17g},{v:.17g}\n")

    def summary(self) -> dict:
        return {
            "name": self.name,
            "property": self.property,
            "slack": self.slack,
            "verdict": self.verdict,
            "worst_violation": self.worst_violation(),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


# ---------------------------------------------------------------------------
# scalar functionals

def shannon_entropy(geom, density, tau: float) -> float:
    """Integral of f log f against the volume measure, with 0 log 0 = 0."""
    f = np.asarray(density, dtype=float)
    if np.any(f < 0):
        raise NonPositiveDensity("entropy needs a nonnegative density")
    w = geom.volume_weights(tau)
    terms = np.where(f > 0, f * np.log(np.where(f > 0, f, 1.0)), 0.0)
    return float(np.dot(w, terms))


def w_entropy(geom, state: DiffusionState) -> float:
    """Perelman-style entropy of a positive density at its time."""
    u = state.u
    tau = state.tau
    if np.any(u <= 0):
        raise NonPositiveDensity("w_entropy needs a strictly positive density")
    n = geom.dim
    f = -np.log(u) - 0.5 * n * np.log(4 * np.pi * tau)
    h = geom.spacing
    df = (np.roll(f, -1) - np.roll(f, 1)) / (2 * h)
    grad_sq = df ** 2 / geom.curve_metric(geom.nodes, tau)
    s = np.asarray(geom.trace_s(geom.nodes, tau), dtype=float)
    w = geom.volume_weights(tau)
    integrand = (tau * (s + grad_sq) + f - n) * u
    return float(np.dot(w, integrand))


def w_entropy_series(geom, state0: DiffusionState, tau_grid, name="w_entropy",
                     slack=TRANSPORT_SLACK) -> MonitorSeries:
    """Entropy values along one diffusion, evaluated at the exact grid times."""
    from .diffusion import evolve_density

    tau_grid = np.sort(np.asarray(tau_grid, dtype=float))
    if tau_grid[0] < state0.tau - 1e-12:
        raise ConfigError("tau_grid precedes the diffusion's start time")
    vals = np.empty(tau_grid.size)
    cur = state0
    for k, t in enumerate(tau_grid):
        cur = evolve_density(geom, cur, float(t))
        vals[k] = w_entropy(geom, cur)
    return MonitorSeries(name=name, abscissa_kind="tau", abscissa=tau_grid,
                         values=vals, property=WEAKLY_DECREASING, slack=slack)


def reduced_volume(geom, field: geodesics.LDistanceField, tau: float) -> float:
    """Gaussian-weighted volume of a distance field at one time.

    The field's small base offset is removed to first order using the stored
    base speeds, so the value estimates the zero-base-time quantity.
    """
    j = int(np.argmin(np.abs(field.taus - tau)))
    if abs(field.taus[j] - tau) > 1e-9:
        raise InvalidFieldEntry(f"tau={tau} not in the field grid")
    if not np.all(field.valid[:, j]):
        raise InvalidFieldEntry(f"field has invalid entries at tau={tau}")
    sqrt_eps = np.sqrt(field.base_tau)
    l_hat = field.values[:, j] - sqrt_eps * 0.5 * field.base_speed_sq[:, j]
    n = geom.dim
    w = geom.volume_weights(tau)
    return float(np.dot(w, (4 * np.pi * tau) ** (-n / 2.0)
                        * np.exp(-l_hat / (2 * np.sqrt(tau)))))


def reduced_volume_series(geom, field, name="reduced_volume",
                          slack=TRANSPORT_SLACK) -> MonitorSeries:
    vals = np.array([reduced_volume(geom, field, t) for t in field.taus])
    return MonitorSeries(name=name, abscissa_kind="tau", abscissa=field.taus.copy(),
                         values=vals, property=WEAKLY_DECREASING, slack=slack)


def scaled_distance_gap(geom, field: geodesics.LDistanceField, name="scaled_distance_gap",
                        slack=TRANSPORT_SLACK) -> MonitorSeries:
    """Minimum over nodes of 2 sqrt(tau) L - 2 n tau, as a series over tau."""
    vals = np.empty(field.taus.size)
    for j, tau in enumerate(field.taus):
        ok = field.valid[:, j]
        if not np.any(ok):
            raise InvalidFieldEntry(f"no valid entries at tau={tau}")
        vals[j] = np.min(field.scaled[ok, j]) - 2.0 * geom.dim * tau
    return MonitorSeries(name=name, abscissa_kind="tau", abscissa=field.taus.copy(),
                         values=vals, property=WEAKLY_DECREASING, slack=slack)


# ---------------------------------------------------------------------------
# transport-backed series

def renormalized_cost_series(geom, table1, table2, taubar1, taubar2, s_grid,
                             name="renormalized_cost", slack=TRANSPORT_SLACK,
                             mode="exact", m_sigma=geodesics.DEFAULT_M,
                             seed=0) -> MonitorSeries:
    s_grid = np.asarray(s_grid, dtype=float)
    vals = np.array([
        transport.renormalized_cost(geom, table1, table2, taubar1, taubar2,
                                    float(s), mode=mode, m_sigma=m_sigma, seed=seed)
        for s in s_grid
    ])
    return MonitorSeries(name=name, abscissa_kind="s", abscissa=s_grid,
                         values=vals, property=WEAKLY_DECREASING, slack=slack)


def _refined_min_over_mesh(values, spacing):
    """Minimum over the periodic mesh with three-point parabolic refinement.

    ``values``: (N, P) columns to minimize over the first axis.  Refinement
    removes the sawtooth error from minimizing a smooth function on a grid.
    """
    n = values.shape[0]
    jstar = np.argmin(values, axis=0)
    cols = np.arange(values.shape[1])
    v0 = values[jstar, cols]
    vm = values[(jstar - 1) % n, cols]
    vp = values[(jstar + 1) % n, cols]
    curv = vp - 2 * v0 + vm
    corr = np.where(curv > 1e-14, (vp - vm) ** 2 / (8 * np.where(curv > 1e-14, curv, 1.0)), 0.0)
    return v0 - corr


def convexity_profile(geom, nu1: transport.DiscreteMeasure, phi, tau1, tau2,
                      grid_points=9, name="convexity_profile",
                      slack=TRANSPORT_SLACK, m_sigma=geodesics.DEFAULT_M,
                      seed=0) -> MonitorSeries:
    """Entropy plus inf-convolution potential along a potential pushforward.

    Profiled on a uniform grid in 1/sqrt(tau) and tested for convexity by
    second differences.
    """
    if nu1.density is None:
        raise ConfigError("convexity profile needs a mesh measure with density")
    if np.any(nu1.density <= 0):
        raise NonPositiveDensity("profile entropy needs positive densities")
    if callable(phi):
        phi_mesh = np.asarray(phi(geom.nodes), dtype=float)
    else:
        phi_mesh = np.asarray(phi, dtype=float)
    w_grid = np.linspace(tau2 ** -0.5, tau1 ** -0.5, grid_points)
    taus = w_grid ** -2.0
    n = geom.dim
    base_entropy = shannon_entropy(geom, nu1.density, tau1)
    vals = np.empty(grid_points)
    for k, tau in enumerate(taus):
        if abs(tau - tau1) < 1e-12:
            e_term = base_entropy
            pot_term = float(np.dot(nu1.weights, -phi_mesh / (2 * np.sqrt(tau1))))
        else:
            pf = transport.push_forward_geodesic(geom, nu1, phi_mesh, tau1, float(tau),
                                                 m_sigma=m_sigma)
            e_term = float(np.dot(pf.weights, np.log(pf.density_target)))
            cost = transport.cost_matrix(geom, geom.nodes, tau1, pf.targets, float(tau),
                                         m_sigma=m_sigma, seed=seed)
            shifted = cost - phi_mesh[:, None]
            phi_at = _refined_min_over_mesh(shifted, geom.spacing) / (2 * np.sqrt(tau))
            pot_term = float(np.dot(pf.weights, phi_at))
        vals[k] = e_term + pot_term + 0.5 * n * np.log(tau)
    return MonitorSeries(name=name, abscissa_kind="inv_sqrt_tau", abscissa=w_grid,
                         values=vals, property=CONVEX, slack=slack)


# ---------------------------------------------------------------------------
# inequality reports

@dataclass(frozen=True)
class PLReport:
    """Product-integral inequality report for a constructed middle function."""

    taubar: float
    lam: float
    lhs: float
    rhs: float
    margin: float
    passed: bool
    v: np.ndarray
    n_pairs: int


def prekopa_leindler_check(geom, u1, u2, lam: float, tau1: float, tau2: float,
                           slack=TRANSPORT_SLACK, m_sigma: int = 34,
                           seed: int = 0) -> PLReport:
    """Build the minimal admissible middle function over all mesh-pair curves.

    The middle time satisfies the harmonic relation in sqrt(tau); deposits
    round up onto both neighbor nodes, so a pass is conservative.
    """
    if not 0 < lam < 1:
        raise ConfigError("need 0 < lambda < 1")
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if np.any(u1 < 0) or np.any(u2 < 0):
        raise NonPositiveDensity("inputs must be nonnegative")
    inv_sqrt = (1 - lam) / np.sqrt(tau1) + lam / np.sqrt(tau2)
    taubar = inv_sqrt ** -2.0
    sbar = np.sqrt(taubar)

    nodes = geom.nodes
    nn = nodes.size
    xs = np.repeat(nodes, nn)
    ys = np.tile(nodes, nn)
    out = geodesics.solve_pairs(geom, xs, tau1, ys, tau2, m=m_sigma, seed=seed)
    if not np.all(out["converged"]):
        k = int(np.argmin(out["converged"]))
        raise NoConvergence(f"pair geodesic failed at x={xs[k]:.6g}, y={ys[k]:.6g}")
    sigma = out["sigma"]
    theta = out["theta"]
    cum = geodesics.cumulative_action_rows(geom, sigma, theta)

    at = (sbar - sigma[0]) / (sigma[1] - sigma[0])
    k0 = int(np.clip(np.floor(at), 0, sigma.size - 2))
    frac = at - k0
    z = theta[:, k0] * (1 - frac) + theta[:, k0 + 1] * frac
    q_a = cum[:, k0] * (1 - frac) + cum[:, k0 + 1] * frac
    q_b = out["length"] - q_a

    prefactor = (tau1 ** (1 - lam) * tau2 ** lam / taubar) ** (geom.dim / 2.0)
    log_req = (-(1 - lam) * q_a / (2 * np.sqrt(tau1))
               + lam * q_b / (2 * np.sqrt(tau2)))
    with np.errstate(divide="ignore"):
        log_u = (1 - lam) * np.log(u1[np.repeat(np.arange(nn), nn)]) \
            + lam * np.log(u2[np.tile(np.arange(nn), nn)])
    req = prefactor * np.exp(log_req + log_u)

    v = np.zeros(nn)
    zi = np.mod(z / geom.spacing, nn)
    lo = np.floor(zi).astype(int) % nn
    hi = (lo + 1) % nn
    np.maximum.at(v, lo, req)
    np.maximum.at(v, hi, req)

    w_bar = geom.volume_weights(taubar)
    lhs = float(np.dot(w_bar, v))
    rhs = float(np.dot(geom.volume_weights(tau1), u1) ** (1 - lam)
                * np.dot(geom.volume_weights(tau2), u2) ** lam)
    margin = np.inf if rhs == 0 else lhs / rhs
    return PLReport(taubar=float(taubar), lam=float(lam), lhs=lhs, rhs=rhs,
                    margin=float(margin), passed=bool(margin >= 1.0 - slack),
                    v=v, n_pairs=nn * nn)


def distance_identity_check(geom, n_pairs: int, tau1: float, tau2: float,
                            name="distance_identity", slack=IDENTITY_SLACK,
                            m_sigma: int = 1281, seed: int = 0) -> MonitorSeries:
    """Residuals of the endpoint-time derivative identity on random pairs.

    Near-tie pairs (numerically non-unique minimizers) are resampled; the
    series records absolute residuals against a zero bound.
    """
    rng = np.random.default_rng(seed)
    residuals = []
    attempts = 0
    while len(residuals) < n_pairs and attempts < 20 * n_pairs:
        attempts += 1
        x, y = rng.uniform(0, 2 * np.pi, size=2)
        res = geodesics.l_distance(geom, x, tau1, y, tau2, m=m_sigma,
                                   seed=int(rng.integers(1 << 31)))
        if res.near_cut:
            continue
        p = geodesics.l_distance_partials(geom, res)
        kappa = float(geodesics.harnack_integral_rows(
            geom, res.curve.sigma, res.curve.theta[None, :], refine=True)[0])
        s_x = float(geom.trace_s(x, tau1))
        s_y = float(geom.trace_s(y, tau2))
        lhs = tau2 * p.dtau2 + tau1 * p.dtau1
        rhs = (2 * tau2 ** 1.5 * s_y - 2 * tau1 ** 1.5 * s_x + kappa - 0.5 * res.length)
        residuals.append(abs(lhs - rhs))
    if len(residuals) < n_pairs:
        raise NoConvergence("too many near-tie pairs; could not collect samples")
    vals = np.asarray(residuals)
    return MonitorSeries(name=name, abscissa_kind="pair",
                         abscissa=np.arange(n_pairs, dtype=float), values=vals,
                         property=LE_BOUND, slack=slack)


@dataclass(frozen=True)
class PlanBoundReport:
    """Integrated curve-derivative bound along an optimal coupling."""

    lhs: float
    bound: float
    passed: bool
    slack: float
    n_support: int
    n_excluded: int
    note: str = "inputs are arbitrary density pairs, not geodesic endpoints"


def plan_bound_check(geom, nu1: transport.DiscreteMeasure,
                     nu2: transport.DiscreteMeasure, tau1: float, tau2: float,
                     slack=TRANSPORT_SLACK, m_sigma: int = geodesics.DEFAULT_M,
                     seed: int = 0) -> PlanBoundReport:
    """Check the integrated bound on an optimal plan between two densities."""
    for nu in (nu1, nu2):
        if nu.density is None or np.any(nu.density <= 0):
            raise NonPositiveDensity("plan bound needs strictly positive densities")
    cost = transport.cost_matrix(geom, nu1.points, tau1, nu2.points, tau2,
                                 m_sigma=m_sigma, seed=seed)
    plan = transport.solve_transport(nu1, nu2, cost, mode="exact")
    sup_i, sup_j = np.nonzero(plan.matrix > 1e-15)
    xs = nu1.points[sup_i]
    ys = nu2.points[sup_j]
    out = geodesics.solve_pairs(geom, xs, tau1, ys, tau2, m=m_sigma, seed=seed)
    if not np.all(out["converged"]):
        raise NoConvergence("support-pair geodesic failed")
    keep = ~out["near_cut"]
    n_excluded = int(np.sum(~keep))

    h = geom.spacing
    def log_grad(nu, tau):
        logf = np.log(nu.density)
        d = (np.roll(logf, -1) - np.roll(logf, 1)) / (2 * h)
        return d / geom.curve_metric(nu.points, tau)   # contravariant component

    gl1 = log_grad(nu1, tau1)[sup_i]
    gl2 = log_grad(nu2, tau2)[sup_j]
    x1 = out["v_sigma1"] / (2 * np.sqrt(tau1))
    x2 = out["v_sigma2"] / (2 * np.sqrt(tau2))
    grad1 = -2 * np.sqrt(tau1) * x1
    grad2 = 2 * np.sqrt(tau2) * x2
    a1 = np.asarray(geom.curve_metric(xs, tau1), dtype=float)
    a2 = np.asarray(geom.curve_metric(ys, tau2), dtype=float)
    kappa = geodesics.harnack_integral_rows(geom, out["sigma"], out["theta"])
    s1 = np.asarray(geom.trace_s(xs, tau1), dtype=float)
    s2 = np.asarray(geom.trace_s(ys, tau2), dtype=float)
    terms = (kappa - 2 * tau1 ** 1.5 * s1 - tau1 * a1 * grad1 * gl1
             + 2 * tau2 ** 1.5 * s2 - tau2 * a2 * grad2 * gl2)
    weights = plan.matrix[sup_i, sup_j]
    lhs = float(np.dot(weights[keep], terms[keep]))
    bound = geom.dim * (np.sqrt(tau2) - np.sqrt(tau1))
    return PlanBoundReport(lhs=lhs, bound=float(bound),
                           passed=bool(lhs <= bound + slack), slack=slack,
                           n_support=int(sup_i.size), n_excluded=n_excluded)
