"""Minimizing curves of the square-root-time action, and derived quantities.

With sigma = sqrt(tau) the curve functional

    integral over tau of sqrt(tau) * (trace_s + |velocity|^2)

becomes a regular first-order action

    integral over sigma of ( 2 sigma^2 trace_s + 0.5 |d(curve)/d(sigma)|^2 ),

which this module discretizes on a uniform sigma grid and minimizes by
preconditioned gradient descent with backtracking line search (the
preconditioner is the tridiagonal kinetic Hessian, so homogeneous models
converge in one step and the iteration budget is never a constraint).
Multiple starts cover the winding classes of the circle; near-ties between
distinct minimizers are flagged so derivative formulas are never evaluated at
numerically non-unique minima.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import ConfigError, ConjugatePoint, DomainError, NearCutLocus, NoConvergence

_trapz = getattr(np, "trapezoid", None) or np.trapz

TWO_PI = 2.0 * np.pi
DEFAULT_M = 64
MIN_M = 32
GRAD_TOL = 1e-10
MAX_ITER = 10_000
TIE_REL_TOL = 1e-6
DISTINCT_SEP = 0.05


@dataclass(frozen=True)
class DiscreteCurve:
    """A curve sampled on a uniform sigma = sqrt(tau) grid."""

    sigma: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        theta = np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "theta", theta)
        if sigma.size < MIN_M:
            raise ConfigError(f"need at least {MIN_M} sigma samples, got {sigma.size}")
        if sigma.shape != theta.shape:
            raise ConfigError("sigma and theta shapes differ")
        d = np.diff(sigma)
        if np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-9, atol=1e-12):
            raise ConfigError("sigma grid must be uniform and increasing")

    @property
    def m(self) -> int:
        return self.sigma.size

    @property
    def dsigma(self) -> float:
        return float(self.sigma[1] - self.sigma[0])

    @property
    def taus(self) -> np.ndarray:
        return self.sigma ** 2


@dataclass(frozen=True)
class GeodesicResult:
    """A converged minimizing curve with its action value and endpoint data."""

    curve: DiscreteCurve
    length: float                  # action value of the winner
    grad_norm: float
    converged: bool
    near_cut: bool
    start_lengths: tuple           # action of every multistart, for diagnostics
    v_sigma1: float                # d(theta)/d(sigma) at the endpoints
    v_sigma2: float

    @property
    def x_tau1(self) -> float:
        """Coordinate velocity d(theta)/d(tau) at the first endpoint."""
        return self.v_sigma1 / (2.0 * self.curve.sigma[0])

    @property
    def x_tau2(self) -> float:
        return self.v_sigma2 / (2.0 * self.curve.sigma[-1])


@dataclass(frozen=True)
class DistancePartials:
    """First variations of the minimal action in its four arguments."""

    dtau1: float
    dtau2: float
    grad1: float     # contravariant component at the first endpoint
    grad2: float


def sigma_grid(tau1: float, tau2: float, m: int) -> np.ndarray:
    if not tau1 < tau2:
        raise DomainError(f"need tau1 < tau2, got {tau1} >= {tau2}")
    return np.linspace(np.sqrt(tau1), np.sqrt(tau2), m)


# ---------------------------------------------------------------------------
# action evaluation

def _potential_profile(geom, sigma, theta=None):
    """Trapezoid-weighted potential term 2 sigma^2 trace_s along the grid.

    For homogeneous models this is independent of positions and returns a
    scalar; otherwise an array shaped like ``theta``.
    """
    ds = sigma[1] - sigma[0]
    w = np.full(sigma.size, ds)
    w[0] = w[-1] = 0.5 * ds
    if geom.is_homogeneous:
        vals = 2.0 * sigma ** 2 * geom.trace_s(0.0, sigma ** 2)
        return float(np.dot(w, vals))
    vals = 2.0 * sigma ** 2 * geom.trace_s(theta, sigma ** 2)
    return np.sum(w * vals, axis=-1)


def _interval_metric(geom, sigma, theta_rows=None):
    """Metric coefficient at interval midpoints (shared across a batch when
    homogeneous)."""
    smid = 0.5 * (sigma[:-1] + sigma[1:])
    if geom.is_homogeneous:
        return np.asarray(geom.curve_metric(0.0, smid ** 2), dtype=float)
    mids = 0.5 * (theta_rows[:, :-1] + theta_rows[:, 1:])
    return geom.curve_metric(mids, smid ** 2)


def curve_action(geom, curve: DiscreteCurve) -> float:
    """Action value of one discrete curve (trapezoid potential + midpoint kinetic)."""
    geom.require_tau(curve.taus[[0, -1]])
    sigma, theta = curve.sigma, curve.theta
    inv_ds = 1.0 / curve.dsigma
    if geom.is_homogeneous:
        gbar = _interval_metric(geom, sigma)
        act, _ = kernels.kinetic_action_grad(theta[None, :], gbar, inv_ds)
        return float(act[0] + _potential_profile(geom, sigma))
    gbar = _interval_metric(geom, sigma, theta[None, :])[0]
    d = np.diff(theta)
    kinetic = 0.5 * inv_ds * np.sum(gbar * d * d)
    return float(kinetic + _potential_profile(geom, sigma, theta[None, :])[0])


def l_length(geom, curve: DiscreteCurve) -> float:
    """Length functional of a curve between two backward times."""
    return curve_action(geom, curve)


# ---------------------------------------------------------------------------
# batched fixed-endpoint minimization

def _generic_action_grad(geom, sigma, theta):
    """Action and interior gradient for position-dependent models."""
    inv_ds = 1.0 / (sigma[1] - sigma[0])
    smid = 0.5 * (sigma[:-1] + sigma[1:])
    mids = 0.5 * (theta[:, :-1] + theta[:, 1:])
    gbar = geom.curve_metric(mids, smid ** 2)
    dgbar = geom.curve_metric_dtheta(mids, smid ** 2)
    d = np.diff(theta, axis=1)
    kinetic = 0.5 * inv_ds * np.sum(gbar * d * d, axis=1)
    ds = sigma[1] - sigma[0]
    w = np.full(sigma.size, ds)
    w[0] = w[-1] = 0.5 * ds
    pot_vals = 2.0 * sigma ** 2 * geom.trace_s(theta, sigma ** 2)
    action = kinetic + np.sum(w * pot_vals, axis=1)

    p = gbar * d * inv_ds
    grad = p[:, :-1] - p[:, 1:]
    grad = grad + 0.25 * inv_ds * (dgbar[:, :-1] * d[:, :-1] ** 2 + dgbar[:, 1:] * d[:, 1:] ** 2)
    dpot = 2.0 * sigma[1:-1] ** 2 * geom.trace_s_dtheta(theta[:, 1:-1], sigma[1:-1] ** 2)
    grad = grad + w[1:-1] * dpot
    return action, grad


class _BatchProblem:
    """Shared data for one (tau1, tau2, m) batch of fixed-endpoint solves."""

    def __init__(self, geom, tau1, tau2, m):
        geom.require_tau(np.array([tau1, tau2]))
        if not 0 < tau1 < tau2:
            raise DomainError(f"need 0 < tau1 < tau2, got ({tau1}, {tau2})")
        self.geom = geom
        self.sigma = sigma_grid(tau1, tau2, m)
        self.inv_ds = 1.0 / (self.sigma[1] - self.sigma[0])
        if geom.is_homogeneous:
            self.gbar = _interval_metric(geom, self.sigma)
            self.pot_const = _potential_profile(geom, self.sigma)
        else:
            # preconditioner: node-averaged metric per sigma interval, which
            # captures the (dominant) time variation of tabulated models
            smid = 0.5 * (self.sigma[:-1] + self.sigma[1:])
            cols = geom.curve_metric(geom.nodes[:, None], smid[None, :] ** 2)
            self.gbar = np.mean(cols, axis=0)
            self.pot_const = 0.0
        self.factors = kernels.thomas_factor(self.gbar, self.inv_ds)

    def action_grad(self, theta):
        if self.geom.is_homogeneous:
            act, grad = kernels.kinetic_action_grad(theta, self.gbar, self.inv_ds)
            return act + self.pot_const, grad
        return _generic_action_grad(self.geom, self.sigma, theta)

    def minimize(self, theta, gtol=GRAD_TOL, max_iter=MAX_ITER):
        """Preconditioned descent with backtracking; rows converge independently."""
        theta = np.array(theta, dtype=float)
        # an absolute tolerance is unreachable once below the roundoff floor of
        # the gradient assembly, so the effective tolerance is scale-aware
        span = float(np.max(np.abs(theta[:, -1] - theta[:, 0]), initial=1.0))
        floor = (64.0 * np.finfo(float).eps * self.inv_ds
                 * float(np.max(self.gbar)) * (1.0 + span)
                 * np.sqrt(self.sigma.size))
        tol = max(gtol, floor)
        act, grad = self.action_grad(theta)
        gnorm = np.linalg.norm(grad, axis=1)
        stalled = np.zeros(theta.shape[0], dtype=bool)
        for _ in range(max_iter):
            active = (gnorm > tol) & ~stalled
            if not np.any(active):
                break
            direction = kernels.thomas_solve(self.factors, -grad)
            # a step below spacing roundoff cannot move the iterate: stop
            tiny = np.max(np.abs(direction), axis=1) < 1e-13 * (1.0 + span)
            stalled |= active & tiny
            active &= ~tiny
            if not np.any(active):
                break
            slope = np.einsum("bk,bk->b", grad, direction)
            step = np.where(active, 1.0, 0.0)
            trial = theta.copy()
            for _ in range(60):
                rows = np.nonzero(step > 0)[0]
                if rows.size == 0:
                    break
                trial[rows, 1:-1] = theta[rows, 1:-1] + step[rows, None] * direction[rows]
                t_act, _ = self.action_grad(trial[rows])
                ok = t_act <= act[rows] + 1e-4 * step[rows] * slope[rows]
                good = rows[ok]
                theta[good, 1:-1] = trial[good, 1:-1]
                step[good] = 0.0
                bad = rows[~ok]
                step[bad] *= 0.5
                too_small = bad[step[bad] < 1e-14]
                stalled[too_small] = True
                step[too_small] = 0.0
            act, grad = self.action_grad(theta)
            gnorm = np.linalg.norm(grad, axis=1)
        # rows pinned by roundoff are stationary to machine precision provided
        # their gradient sits within a few orders of the assembly floor
        converged = (gnorm <= tol) | (stalled & (gnorm <= 1e3 * tol))
        return theta, act, gnorm, converged


def _multistart_rows(x, y, sigma, seed):
    """Three start curves per pair: short way, long way, perturbed short way."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    delta = np.mod(y - x + np.pi, TWO_PI) - np.pi
    long_delta = np.where(delta > 0, delta - TWO_PI, delta + TWO_PI)
    long_delta = np.where(delta == 0.0, TWO_PI, long_delta)
    t = (sigma - sigma[0]) / (sigma[-1] - sigma[0])
    rng = np.random.default_rng(seed)
    amp = rng.uniform(-0.35, 0.35, size=x.shape)
    rows = np.stack([
        x[:, None] + delta[:, None] * t[None, :],
        x[:, None] + long_delta[:, None] * t[None, :],
        x[:, None] + delta[:, None] * t[None, :] + amp[:, None] * np.sin(np.pi * t)[None, :],
    ], axis=0)  # (3, P, M)
    return rows


def solve_pairs(geom, x, tau1, y, tau2, m=DEFAULT_M, seed=0,
                gtol=GRAD_TOL, max_iter=MAX_ITER):
    """Fixed-endpoint minimization for arrays of endpoint pairs.

    Returns a dict of arrays over pairs: theta (winner curves), length,
    grad_norm, converged, near_cut, v_sigma1, v_sigma2, start_lengths.
    """
    prob = _BatchProblem(geom, float(tau1), float(tau2), int(m))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ConfigError("endpoint arrays must have matching shapes")
    p = x.size
    rows = _multistart_rows(x, y, prob.sigma, seed).reshape(3 * p, -1)
    theta, act, gnorm, conv = prob.minimize(rows, gtol=gtol, max_iter=max_iter)

    theta = theta.reshape(3, p, -1)
    act = act.reshape(3, p)
    gnorm = gnorm.reshape(3, p)
    conv = conv.reshape(3, p)

    act_masked = np.where(conv, act, np.inf)
    winner = np.argmin(act_masked, axis=0)
    idx = np.arange(p)
    best_theta = theta[winner, idx]
    best_act = act[winner, idx]
    best_gnorm = gnorm[winner, idx]
    best_conv = conv[winner, idx]

    # a near-tie between distinct converged minimizers marks the pair as
    # numerically non-unique
    near_cut = np.zeros(p, dtype=bool)
    for s in range(3):
        other = np.where(conv[s], act[s], np.inf)
        tie = np.abs(other - best_act) <= TIE_REL_TOL * np.maximum(1.0, np.abs(best_act))
        distinct = np.max(np.abs(theta[s] - best_theta), axis=1) > DISTINCT_SEP
        near_cut |= tie & distinct

    ds = prob.sigma[1] - prob.sigma[0]
    # third-order one-sided endpoint slopes: the endpoint-derivative formulas
    # they feed are the accuracy bottleneck of the identity checks
    v1 = (-11.0 * best_theta[:, 0] + 18.0 * best_theta[:, 1]
          - 9.0 * best_theta[:, 2] + 2.0 * best_theta[:, 3]) / (6 * ds)
    v2 = (11.0 * best_theta[:, -1] - 18.0 * best_theta[:, -2]
          + 9.0 * best_theta[:, -3] - 2.0 * best_theta[:, -4]) / (6 * ds)

    return {
        "sigma": prob.sigma,
        "theta": best_theta,
        "length": best_act,
        "grad_norm": best_gnorm,
        "converged": best_conv,
        "near_cut": near_cut,
        "v_sigma1": v1,
        "v_sigma2": v2,
        "start_lengths": act,
    }


def l_distance(geom, x: float, tau1: float, y: float, tau2: float,
               m: int = DEFAULT_M, seed: int = 0, gtol: float = GRAD_TOL,
               max_iter: int = MAX_ITER) -> GeodesicResult:
    """Minimal action between (x, tau1) and (y, tau2) over fixed-endpoint curves."""
    out = solve_pairs(geom, [x], tau1, [y], tau2, m=m, seed=seed,
                      gtol=gtol, max_iter=max_iter)
    if not out["converged"][0]:
        raise NoConvergence(
            f"no multistart converged for x={x}, y={y}, tau=({tau1}, {tau2})"
        )
    curve = DiscreteCurve(sigma=out["sigma"], theta=out["theta"][0])
    return GeodesicResult(
        curve=curve,
        length=float(out["length"][0]),
        grad_norm=float(out["grad_norm"][0]),
        converged=True,
        near_cut=bool(out["near_cut"][0]),
        start_lengths=tuple(float(v) for v in out["start_lengths"][:, 0]),
        v_sigma1=float(out["v_sigma1"][0]),
        v_sigma2=float(out["v_sigma2"][0]),
    )


# ---------------------------------------------------------------------------
# first variations, Harnack integral

def l_distance_partials(geom, result: GeodesicResult) -> DistancePartials:
    """Endpoint derivatives of the minimal action from the winner's velocities."""
    if result.near_cut:
        raise NearCutLocus("minimizer numerically non-unique; partials undefined")
    if not result.converged:
        raise NoConvergence("cannot differentiate an unconverged result")
    sigma = result.curve.sigma
    tau1, tau2 = sigma[0] ** 2, sigma[-1] ** 2
    x, y = result.curve.theta[0], result.curve.theta[-1]
    a1 = float(geom.curve_metric(x, tau1))
    a2 = float(geom.curve_metric(y, tau2))
    s1 = float(geom.trace_s(x, tau1))
    s2 = float(geom.trace_s(y, tau2))
    x1, x2 = result.x_tau1, result.x_tau2
    return DistancePartials(
        dtau1=np.sqrt(tau1) * (a1 * x1 ** 2 - s1),
        dtau2=np.sqrt(tau2) * (s2 - a2 * x2 ** 2),
        grad1=-2.0 * np.sqrt(tau1) * x1,
        grad2=2.0 * np.sqrt(tau2) * x2,
    )


def harnack_along(geom, theta, tau, x_theta):
    """Harnack expression along a curve, with tangential direction components."""
    h = (-geom.trace_s_dtau(theta, tau)
         - geom.trace_s(theta, tau) / np.asarray(tau, dtype=float)
         - 2.0 * x_theta * geom.trace_s_dtheta(theta, tau)
         + 2.0 * geom.s_curve_component(theta, tau) * x_theta ** 2)
    return h


def positivity_along(geom, theta, tau, x_theta):
    """Positivity form along a curve (homogeneous models), tangential direction."""
    if not geom.is_homogeneous:
        raise ConfigError("positivity_along supports the closed-form models only")
    a = geom.curve_metric(theta, tau)
    s_coef = geom.s_curve_component(theta, tau)
    ric_coef = 1.0 if geom.dim == 2 else 0.0
    s_norm2 = geom.dim * (s_coef / a) ** 2
    return (-geom.trace_s_dtau(theta, tau) - 2.0 * s_norm2
            + 2.0 * (ric_coef - s_coef) * x_theta ** 2)


def _sigma_velocity(theta_rows, ds):
    """Centered sigma-derivative along rows, one-sided second order at ends."""
    v = np.empty_like(theta_rows)
    v[..., 1:-1] = (theta_rows[..., 2:] - theta_rows[..., :-2]) / (2 * ds)
    v[..., 0] = (-3 * theta_rows[..., 0] + 4 * theta_rows[..., 1] - theta_rows[..., 2]) / (2 * ds)
    v[..., -1] = (3 * theta_rows[..., -1] - 4 * theta_rows[..., -2] + theta_rows[..., -3]) / (2 * ds)
    return v


def harnack_integral_rows(geom, sigma, theta_rows, refine: bool = False) -> np.ndarray:
    """Trapezoid integral of tau^{3/2} times the Harnack expression, per row.

    With ``refine`` (and an odd sample count) the trapezoid value is
    extrapolated against its half-resolution restriction, removing the
    leading quadrature and velocity-sampling error; identity checks use this.
    """
    theta_rows = np.atleast_2d(theta_rows)

    def plain(sig, rows):
        ds = sig[1] - sig[0]
        v = _sigma_velocity(rows, ds)
        x_theta = v / (2.0 * sig[None, :])
        integrand = 2.0 * sig[None, :] ** 4 * harnack_along(
            geom, rows, sig[None, :] ** 2, x_theta)
        return _trapz(integrand, dx=ds, axis=1)

    fine = plain(sigma, theta_rows)
    if not refine or sigma.size % 2 == 0:
        return fine
    coarse = plain(sigma[::2], theta_rows[:, ::2])
    return (4.0 * fine - coarse) / 3.0


def harnack_integral(geom, result: GeodesicResult) -> float:
    """Trapezoid integral of tau^{3/2} times the Harnack expression along a curve."""
    if not result.converged:
        raise NoConvergence("cannot integrate along an unconverged result")
    return float(harnack_integral_rows(geom, result.curve.sigma,
                                       result.curve.theta[None, :])[0])


def cumulative_action_rows(geom, sigma, theta_rows):
    """Running action from the first sample to every sigma node, per row.

    Kinetic contributions use the midpoint scheme; the potential term is
    accumulated with the trapezoid rule, matching curve_action at the end.
    """
    theta_rows = np.atleast_2d(theta_rows)
    ds = sigma[1] - sigma[0]
    smid = 0.5 * (sigma[:-1] + sigma[1:])
    mids = 0.5 * (theta_rows[:, :-1] + theta_rows[:, 1:])
    if geom.is_homogeneous:
        gbar = np.asarray(geom.curve_metric(0.0, smid ** 2), dtype=float)[None, :]
    else:
        gbar = geom.curve_metric(mids, smid ** 2)
    d = np.diff(theta_rows, axis=1)
    kinetic = 0.5 * gbar * d * d / ds
    pot = 2.0 * sigma[None, :] ** 2 * geom.trace_s(theta_rows, sigma[None, :] ** 2)
    seg = kinetic + 0.5 * ds * (pot[:, :-1] + pot[:, 1:])
    cum = np.zeros_like(theta_rows)
    cum[:, 1:] = np.cumsum(seg, axis=1)
    return cum


# ---------------------------------------------------------------------------
# the endpoint map with a given initial velocity datum

def exp_map_batch(geom, x, tau1, z, tau2, m=DEFAULT_M):
    """Curves with initial datum z = sqrt(tau1) * velocity, integrated forward.

    Solves the stationarity recurrence of the discrete action: the momentum
    gbar_k * d(theta)_k / d(sigma) is corrected interval by interval (constant
    for homogeneous models).  Returns (sigma, theta_rows).
    """
    geom.require_tau(np.array([tau1, tau2]))
    if not tau1 < tau2:
        raise DomainError(f"need tau1 < tau2, got ({tau1}, {tau2})")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    sigma = sigma_grid(tau1, tau2, m)
    ds = sigma[1] - sigma[0]
    p0 = geom.curve_metric(x, tau1) * 2.0 * z
    if geom.is_homogeneous:
        smid = 0.5 * (sigma[:-1] + sigma[1:])
        gbar = np.asarray(geom.curve_metric(0.0, smid ** 2), dtype=float)
        steps = ds * p0[:, None] / gbar[None, :]
        theta = np.concatenate([x[:, None], x[:, None] + np.cumsum(steps, axis=1)], axis=1)
        return sigma, theta
    theta = np.empty((x.size, m))
    theta[:, 0] = x
    smid = 0.5 * (sigma[:-1] + sigma[1:])
    # initialize the first interval with a frozen-metric midpoint fix
    guess = x + ds * p0 / geom.curve_metric(x, smid[0] ** 2)
    for _ in range(3):
        mid = 0.5 * (x + guess)
        guess = x + ds * p0 / geom.curve_metric(mid, smid[0] ** 2)
    theta[:, 1] = guess
    w_pot = ds
    for k in range(1, m - 1):
        prev_mid = 0.5 * (theta[:, k - 1] + theta[:, k])
        g_prev = geom.curve_metric(prev_mid, smid[k - 1] ** 2)
        dg_prev = geom.curve_metric_dtheta(prev_mid, smid[k - 1] ** 2)
        d_prev = theta[:, k] - theta[:, k - 1]
        pot_grad = (2.0 * sigma[k] ** 2
                    * geom.trace_s_dtheta(theta[:, k], sigma[k] ** 2)) * w_pot
        # solve the interior stationarity equation for theta_{k+1}; the
        # first-order metric-derivative terms cancel in d(f)/d(next), so
        # -g_next/ds is an exact-enough Newton slope
        nxt = theta[:, k] + d_prev
        for _ in range(12):
            mid = 0.5 * (theta[:, k] + nxt)
            g_next = geom.curve_metric(mid, smid[k] ** 2)
            dg_next = geom.curve_metric_dtheta(mid, smid[k] ** 2)
            d_next = nxt - theta[:, k]
            f = ((g_prev * d_prev - g_next * d_next) / ds
                 + 0.25 * (dg_prev * d_prev ** 2 + dg_next * d_next ** 2) / ds
                 + pot_grad)
            upd = f / (-g_next / ds)
            nxt = nxt - upd
            if np.max(np.abs(upd)) < 1e-14:
                break
        theta[:, k + 1] = nxt
    return sigma, theta


def l_exp(geom, x: float, tau1: float, z: float, tau2: float, m: int = DEFAULT_M) -> float:
    """Endpoint of the stationary curve with initial datum z at tau1."""
    sigma, theta = exp_map_batch(geom, [x], tau1, [z], tau2, m=m)
    return float(theta[0, -1])


def exp_curve(geom, x: float, tau1: float, z: float, tau2: float,
              m: int = DEFAULT_M) -> DiscreteCurve:
    sigma, theta = exp_map_batch(geom, [x], tau1, [z], tau2, m=m)
    return DiscreteCurve(sigma=sigma, theta=theta[0])


# ---------------------------------------------------------------------------
# distance fields and the volume Jacobian of the endpoint map

@dataclass(frozen=True)
class LDistanceField:
    """Minimal-action values from one base point over a (node, tau) grid."""

    base_theta: float
    base_tau: float          # small positive stand-in for base time zero
    taus: np.ndarray         # (T,)
    node_thetas: np.ndarray  # (N,)
    values: np.ndarray       # (N, T) minimal actions L
    scaled: np.ndarray       # (N, T) 2 sqrt(tau) L
    valid: np.ndarray        # (N, T) bool
    base_speed_sq: np.ndarray  # (N, T) |d(curve)/d(sigma)|^2_g at the base

    def to_csv(self, path):
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write("node_index,tau,L,Lbar,valid\n")
            for i in range(self.node_thetas.size):
                for j, tau in enumerate(self.taus):
                    fh.write(
                        f"{i},{tau:.17g},{self.values[i, j]:.17g},"
                        f"{self.scaled[i, j]:.17g},{int(self.valid[i, j])}\n"
                    )


def l_distance_field(geom, x: float, base_eps: float, tau_grid, node_thetas=None,
                     m: int = DEFAULT_M, seed: int = 0) -> LDistanceField:
    """Assemble minimal actions from (x, base_eps) to every (node, tau) pair.

    Entries that fail to converge are marked invalid rather than aborting the
    whole field.
    """
    tau_grid = np.atleast_1d(np.asarray(tau_grid, dtype=float))
    if not 0 < base_eps < tau_grid.min():
        raise DomainError("need 0 < base_eps < min(tau_grid)")
    geom.require_tau(base_eps)
    geom.require_tau(tau_grid)
    if node_thetas is None:
        node_thetas = geom.nodes
    node_thetas = np.asarray(node_thetas, dtype=float)
    n, t = node_thetas.size, tau_grid.size
    values = np.full((n, t), np.nan)
    speed = np.full((n, t), np.nan)
    valid = np.zeros((n, t), dtype=bool)
    for j, tau in enumerate(tau_grid):
        out = solve_pairs(geom, np.full(n, x), base_eps, node_thetas, float(tau),
                          m=m, seed=seed)
        values[:, j] = out["length"]
        a_base = geom.curve_metric(x, base_eps)
        speed[:, j] = a_base * out["v_sigma1"] ** 2
        valid[:, j] = out["converged"]
    scaled = 2.0 * np.sqrt(tau_grid)[None, :] * values
    return LDistanceField(
        base_theta=float(x), base_tau=float(base_eps), taus=tau_grid,
        node_thetas=node_thetas, values=values, scaled=scaled, valid=valid,
        base_speed_sq=speed,
    )


@dataclass(frozen=True)
class JacobianSeries:
    """Negative log volume-Jacobian of the endpoint map along a time grid."""

    taus: np.ndarray
    values: np.ndarray       # -log det of the endpoint-map volume Jacobian
    coord_derivative: np.ndarray
    step: float


def log_jacobian_series(geom, x: float, tau1: float, z: float, tau_grid,
                        m: int = 128, h: float = 1e-3) -> JacobianSeries:
    """Finite-difference volume Jacobian of the endpoint map, as a -log series.

    The base point is perturbed with the same initial datum z; the step h is
    shrunk until successive determinant estimates agree to one part in 1e4.
    On the sphere the transverse direction contributes the closed-form factor
    cos(angular displacement) times the metric scale.
    """
    tau_grid = np.atleast_1d(np.asarray(tau_grid, dtype=float))
    geom.require_tau(tau_grid)
    geom.require_tau(tau1)
    if np.any(tau_grid < tau1 - 1e-12):
        raise DomainError("tau_grid must not precede tau1")
    # a grid that stops at tau1 is the degenerate identity map; keep the
    # integration horizon strictly ahead so the recurrence is well posed
    horizon = max(float(tau_grid.max()), tau1 * (1.0 + 1e-9) + 1e-12)

    def coord_derivative(step):
        sig, rows = exp_map_batch(geom, [x - step, x, x + step], tau1,
                                  [z, z, z], horizon, m=m)
        at = np.interp(np.sqrt(tau_grid), sig, np.arange(sig.size))
        idx = np.clip(at.astype(int), 0, sig.size - 2)
        frac = at - idx
        vals = rows[:, idx] * (1 - frac) + rows[:, idx + 1] * frac
        return (vals[2] - vals[0]) / (2 * step), vals[1]

    d_prev, center = coord_derivative(h)
    for _ in range(8):
        d_next, center = coord_derivative(h / 2)
        if np.max(np.abs(d_next - d_prev) / np.maximum(1.0, np.abs(d_next))) < 1e-4:
            d_prev = d_next
            break
        h /= 2
        d_prev = d_next
    dcoord = d_prev

    a_ratio = np.asarray(geom.curve_metric(0.0, tau_grid), dtype=float) \
        / float(geom.curve_metric(x, tau1))
    if np.any(dcoord <= 0):
        raise ConjugatePoint("endpoint-map derivative lost positivity")
    alpha = -(np.log(dcoord) + 0.5 * np.log(a_ratio))
    if geom.dim == 2:
        beta = center - x
        trans = np.cos(beta)
        if np.any(trans <= 0):
            raise ConjugatePoint("transverse Jacobian factor crossed zero")
        alpha = alpha - (np.log(trans) + 0.5 * np.log(a_ratio))
    return JacobianSeries(taus=tau_grid, values=alpha, coord_derivative=dcoord, step=h)
