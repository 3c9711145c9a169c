"""Pure-numpy implementations of the hot kernels.

Semantics match ``levolve._core`` (the compiled twin); the backend module
picks whichever is available.  Keep the two in lockstep when editing.
"""

import numpy as np

BACKEND = "pure"


def _law(code, p0, p1, tau):
    """Metric coefficient a(tau) and trace s(tau) for the built-in models."""
    if code == 0:
        return p0, 0.0
    if code == 1:
        a = p0 + 2.0 * tau
        return a, 2.0 / a
    a = p0 - p1 * tau
    return a, -(0.5 * p1) / a


def rk2_diffusion(u, tau0, dtau, n_steps, kappa_hat, w_hat, code, p0, p1):
    """Midpoint RK2 for du/dtau = (1/a(tau)) * Lhat(u) - s(tau) * u.

    Lhat is the conductance stencil built from (kappa_hat, w_hat).  Returns
    (u_final, tau_final); the input array is not modified.
    """
    u = np.array(u, dtype=float)
    inv_w = 1.0 / w_hat

    def rate(v, tau):
        a, s = _law(code, p0, p1, tau)
        flux = kappa_hat * (np.roll(v, -1) - v)
        return (flux - np.roll(flux, 1)) * (inv_w / a) - s * v

    tau = float(tau0)
    for _ in range(n_steps):
        mid = u + 0.5 * dtau * rate(u, tau)
        u = u + dtau * rate(mid, tau + 0.5 * dtau)
        tau += dtau
    return u, tau


def kinetic_action_grad(theta, gbar, inv_ds):
    """Batched kinetic action and its interior gradient.

    theta: (B, M) curve positions; gbar: (M-1,) interval metric coefficients.
    Returns (action (B,), grad (B, M-2)).
    """
    d = np.diff(theta, axis=1)
    p = d * (gbar * inv_ds)
    action = 0.5 * np.einsum("bk,bk->b", d, p)
    grad = p[:, :-1] - p[:, 1:]
    return action, grad


def thomas_factor(gbar, inv_ds):
    """LU data for the symmetric tridiagonal kinetic Hessian (interior nodes)."""
    diag = (gbar[:-1] + gbar[1:]) * inv_ds
    off = -gbar[1:-1] * inv_ds
    m = diag.size
    denom = np.empty(m)
    cprime = np.empty(max(m - 1, 0))
    denom[0] = diag[0]
    for k in range(m - 1):
        cprime[k] = off[k] / denom[k]
        denom[k + 1] = diag[k + 1] - off[k] * cprime[k]
    return off, denom, cprime


def thomas_solve(factors, rhs):
    """Solve T x = rhs for a batch of right-hand sides (B, M-2)."""
    off, denom, cprime = factors
    rhs = np.asarray(rhs, dtype=float)
    b, m = rhs.shape
    y = np.empty_like(rhs)
    y[:, 0] = rhs[:, 0] / denom[0]
    for k in range(1, m):
        y[:, k] = (rhs[:, k] - off[k - 1] * y[:, k - 1]) / denom[k]
    x = y
    for k in range(m - 2, -1, -1):
        x[:, k] = y[:, k] - cprime[k] * x[:, k + 1]
    return x
