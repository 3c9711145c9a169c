"""Discrete optimal transport with action costs between two time slices.

The exact solver is a primal network simplex on the dense bipartite
transportation graph, with Bland's entering rule for anti-cycling; it is the
reference for every acceptance tolerance.  The entropic solver is a
log-domain Sinkhorn iteration with step-down regularization and a feasibility
rounding pass, reported together with its regularization strength.  Costs may
be negative (metrics can shrink), so neither solver assumes nonnegativity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import geodesics
from .errors import (
    ConfigError,
    ConjugatePoint,
    DomainError,
    NoConvergence,
    NonFiniteCost,
    TransportInfeasible,
)

MARGINAL_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted points at one time slice; weights normalized to unit mass."""

    points: np.ndarray
    weights: np.ndarray
    tau: float
    density: Optional[np.ndarray] = None   # w.r.t. the volume measure, on-mesh only

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if pts.shape != w.shape:
            raise ConfigError("points and weights must have matching shapes")
        if np.any(w < -1e-15):
            raise ConfigError("weights must be nonnegative")
        w = np.maximum(w, 0.0)
        total = float(w.sum())
        if abs(total - 1.0) > 1e-6:
            raise ConfigError(f"weights sum to {total}, expected 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w / total)


def measure_from_density(geom, density, tau: float) -> DiscreteMeasure:
    """Mesh-supported measure with weights density * volume_weights(tau)."""
    density = np.asarray(density, dtype=float)
    w = density * geom.volume_weights(tau)
    return DiscreteMeasure(points=geom.nodes.copy(), weights=w, tau=float(tau),
                           density=density)


def dirac(point: float, tau: float) -> DiscreteMeasure:
    return DiscreteMeasure(points=np.array([point]), weights=np.array([1.0]), tau=float(tau))


@dataclass(frozen=True)
class TransportPlan:
    """A coupling with its marginals, cost, and solver certificate data."""

    matrix: np.ndarray
    cost: float
    mode: str                 # "exact" | "entropic"
    epsilon: Optional[float]
    row_marginals: np.ndarray
    col_marginals: np.ndarray
    dual_row: Optional[np.ndarray]
    dual_col: Optional[np.ndarray]
    iterations: int

    def marginal_error(self, a, b) -> float:
        return max(float(np.abs(self.matrix.sum(axis=1) - a).sum()),
                   float(np.abs(self.matrix.sum(axis=0) - b).sum()))

    def to_csv(self, path, cost_matrix=None):
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write("i,j,pi_ij,cost_ij\n")
            m, n = self.matrix.shape
            for i in range(m):
                for j in range(n):
                    if self.matrix[i, j] != 0.0:
                        c = cost_matrix[i, j] if cost_matrix is not None else np.nan
                        fh.write(f"{i},{j},{self.matrix[i, j]:.17g},{c:.17g}\n")
            fh.write(f"# total_cost={self.cost:.17g} mode={self.mode}"
                     + (f" epsilon={self.epsilon:.17g}" if self.epsilon else "")
                     + "\n")


# ---------------------------------------------------------------------------
# cost assembly

def cost_matrix(geom, supp1, tau1, supp2, tau2, m_sigma=geodesics.DEFAULT_M,
                seed=0, return_details=False):
    """Minimal-action cost between every support pair.

    Entries are solved in one batch; a non-converged entry raises
    NoConvergence naming its coordinates rather than silently padding.
    """
    supp1 = np.atleast_1d(np.asarray(supp1, dtype=float))
    supp2 = np.atleast_1d(np.asarray(supp2, dtype=float))
    xs = np.repeat(supp1, supp2.size)
    ys = np.tile(supp2, supp1.size)
    out = geodesics.solve_pairs(geom, xs, tau1, ys, tau2, m=m_sigma, seed=seed)
    if not np.all(out["converged"]):
        k = int(np.argmin(out["converged"]))
        raise NoConvergence(
            f"cost entry failed at x={xs[k]:.6g}, y={ys[k]:.6g}, tau=({tau1}, {tau2})"
        )
    shape = (supp1.size, supp2.size)
    matrix = out["length"].reshape(shape)
    if return_details:
        details = {
            "near_cut": out["near_cut"].reshape(shape),
            "v_sigma1": out["v_sigma1"].reshape(shape),
            "v_sigma2": out["v_sigma2"].reshape(shape),
            "theta": out["theta"].reshape(shape + (out["theta"].shape[-1],)),
            "sigma": out["sigma"],
        }
        return matrix, details
    return matrix


# ---------------------------------------------------------------------------
# exact solver: primal network simplex on the transportation graph

class _SimplexState:
    __slots__ = ("m", "n", "flow", "basic", "row_adj", "col_adj", "pivots")

    def __init__(self, m, n):
        self.m, self.n = m, n
        self.flow = np.zeros((m, n))
        self.basic = np.zeros((m, n), dtype=bool)
        self.row_adj = [[] for _ in range(m)]   # basic sinks of each source
        self.col_adj = [[] for _ in range(n)]   # basic sources of each sink
        self.pivots = 0

    def add(self, i, j, q):
        self.flow[i, j] = q
        self.basic[i, j] = True
        self.row_adj[i].append(j)
        self.col_adj[j].append(i)

    def remove(self, i, j):
        self.flow[i, j] = 0.0
        self.basic[i, j] = False
        self.row_adj[i].remove(j)
        self.col_adj[j].remove(i)


def _least_cost_basis(a, b, cost, st):
    """Initial spanning-tree flow by the least-cost allocation rule.

    One line (row or column) is crossed out per allocation, the last
    allocation crossing both, which yields exactly m + n - 1 basic cells
    forming a tree.
    """
    m, n = st.m, st.n
    ra, rb = a.copy(), b.copy()
    work = cost.copy()
    rows_left, cols_left = m, n
    big = np.inf
    for _ in range(m + n - 1):
        flat = int(np.argmin(work))
        i, j = divmod(flat, n)
        q = min(ra[i], rb[j])
        st.add(i, j, q)
        if (ra[i] <= rb[j] and rows_left > 1) or cols_left == 1:
            ra[i] = 0.0
            rb[j] = max(rb[j] - q, 0.0)
            work[i, :] = big
            rows_left -= 1
        else:
            rb[j] = 0.0
            ra[i] = max(ra[i] - q, 0.0)
            work[:, j] = big
            cols_left -= 1


def _tree_potentials(cost, st):
    """Node potentials with u_i + v_j = c_ij on every basic arc."""
    m, n = st.m, st.n
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    u[0] = 0.0
    stack = [(True, 0)]
    while stack:
        is_row, k = stack.pop()
        if is_row:
            uk = u[k]
            for j in st.row_adj[k]:
                if np.isnan(v[j]):
                    v[j] = cost[k, j] - uk
                    stack.append((False, j))
        else:
            vk = v[k]
            for i in st.col_adj[k]:
                if np.isnan(u[i]):
                    u[i] = cost[i, k] - vk
                    stack.append((True, i))
    if np.any(np.isnan(u)) or np.any(np.isnan(v)):
        raise NoConvergence("basis lost connectivity (degenerate tree)")
    return u, v


def _find_cycle_path(st, i_ent, j_ent):
    """Alternating node path from sink j_ent back to source i_ent in the tree."""
    start = (False, j_ent)
    target = (True, i_ent)
    parent = {start: None}
    stack = [start]
    found = False
    while stack:
        node = stack.pop()
        if node == target:
            found = True
            break
        is_row, k = node
        if is_row:
            for j in st.row_adj[k]:
                nxt = (False, j)
                if nxt not in parent:
                    parent[nxt] = node
                    stack.append(nxt)
        else:
            for i in st.col_adj[k]:
                nxt = (True, i)
                if nxt not in parent:
                    parent[nxt] = node
                    stack.append(nxt)
    if not found:
        raise NoConvergence("tree path not found (corrupt basis)")
    path = [target]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def _network_simplex(a, b, cost, max_pivots=None):
    """Primal simplex on the dense transportation graph.

    Entering arcs follow the most-negative reduced cost; after a run of
    degenerate pivots the entering rule switches to Bland's smallest-index
    rule, which precludes cycling, until a real flow change occurs.
    """
    m, n = cost.shape
    st = _SimplexState(m, n)
    _least_cost_basis(a, b, cost, st)
    scale = max(1.0, float(np.max(np.abs(cost))))
    enter_tol = 1e-12 * scale
    if max_pivots is None:
        max_pivots = 400 * (m + n) ** 2
    degenerate_run = 0
    while True:
        u, v = _tree_potentials(cost, st)
        reduced = cost - u[:, None] - v[None, :]
        reduced[st.basic] = 0.0
        if degenerate_run < 32:
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -enter_tol:
                return st, u, v
        else:
            violating = (reduced < -enter_tol).ravel()
            if not violating.any():
                return st, u, v
            flat = int(np.argmax(violating))
        i_ent, j_ent = divmod(flat, n)
        path = _find_cycle_path(st, i_ent, j_ent)
        # entering arc gets +delta; walking from the entering sink back to the
        # entering source, path arcs alternate -delta, +delta, ...
        arcs = []
        for t in range(len(path) - 1):
            (ra, ka), (_, kb) = path[t], path[t + 1]
            arc = (kb, ka) if not ra else (ka, kb)
            arcs.append((arc, -1.0 if t % 2 == 0 else 1.0))
        delta = min(st.flow[arc] for arc, sgn in arcs if sgn < 0)
        leaving = min(
            (arc for arc, sgn in arcs if sgn < 0 and st.flow[arc] <= delta),
            key=lambda arc: arc[0] * n + arc[1],
        )
        for arc, sgn in arcs:
            st.flow[arc] = max(st.flow[arc] + sgn * delta, 0.0)
        st.add(i_ent, j_ent, delta)
        st.remove(*leaving)
        st.pivots += 1
        degenerate_run = degenerate_run + 1 if delta <= 0.0 else 0
        if st.pivots > max_pivots:
            raise NoConvergence(f"network simplex exceeded {max_pivots} pivots")


# ---------------------------------------------------------------------------
# entropic solver: log-domain scaling with step-down regularization

def _logsumexp(x, axis):
    m = np.max(x, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))).squeeze(axis)


def _sinkhorn(a, b, cost, eps, tol=MARGINAL_TOL, max_iter=200_000):
    log_a, log_b = np.log(a), np.log(b)
    f = np.zeros(a.size)
    g = np.zeros(b.size)
    eps_ladder = []
    e = max(1.0, eps)
    while e > eps * 1.0000001:
        eps_ladder.append(e)
        e /= 4.0
    eps_ladder.append(eps)
    total_iters = 0
    for e in eps_ladder:
        final = e == eps
        for it in range(max_iter if final else 200):
            f = f + e * (log_a - _logsumexp((f[:, None] + g[None, :] - cost) / e, axis=1))
            g = g + e * (log_b - _logsumexp((f[:, None] + g[None, :] - cost) / e, axis=0))
            total_iters += 1
            if final and it % 5 == 4:
                plan = np.exp((f[:, None] + g[None, :] - cost) / e)
                err = max(np.abs(plan.sum(axis=1) - a).sum(),
                          np.abs(plan.sum(axis=0) - b).sum())
                if err < tol:
                    break
        else:
            if final:
                raise NoConvergence("sinkhorn failed to reach the marginal tolerance")
    plan = np.exp((f[:, None] + g[None, :] - cost) / eps)
    return plan, f, g, total_iters


def _round_to_feasible(plan, a, b):
    """Scale rows and columns down, then patch the residual with a rank-one term."""
    r = plan.sum(axis=1)
    plan = plan * np.minimum(a / np.where(r > 0, r, 1.0), 1.0)[:, None]
    c = plan.sum(axis=0)
    plan = plan * np.minimum(b / np.where(c > 0, c, 1.0), 1.0)[None, :]
    ea = a - plan.sum(axis=1)
    eb = b - plan.sum(axis=0)
    na = ea.sum()
    if na > 1e-300:
        plan = plan + np.outer(ea, eb) / na
    return plan


# ---------------------------------------------------------------------------
# public solver front end

def solve_transport(mu: DiscreteMeasure, nu: DiscreteMeasure, cost,
                    mode: str = "exact", epsilon: float = 1e-3) -> TransportPlan:
    """Optimal (or entropically regularized) coupling for a given cost matrix."""
    cost = np.asarray(cost, dtype=float)
    a, b = mu.weights, nu.weights
    if cost.shape != (a.size, b.size):
        raise ConfigError(f"cost shape {cost.shape} does not match supports")
    if not np.all(np.isfinite(cost)):
        raise NonFiniteCost("cost matrix contains non-finite entries")
    if abs(a.sum() - b.sum()) > 1e-9:
        raise TransportInfeasible("total masses differ")

    rows = np.nonzero(a > 0)[0]
    cols = np.nonzero(b > 0)[0]
    sub_cost = cost[np.ix_(rows, cols)]
    aa, bb = a[rows], b[cols]
    # rounding drift: couple exactly normalized marginals
    aa = aa / aa.sum()
    bb = bb / bb.sum()

    full = np.zeros_like(cost)
    if mode == "exact":
        st, u, v = _network_simplex(aa, bb, sub_cost)
        full[np.ix_(rows, cols)] = st.flow
        du = np.full(a.size, np.nan)
        dv = np.full(b.size, np.nan)
        du[rows] = u
        dv[cols] = v
        total = float(np.sum(full * cost))
        return TransportPlan(
            matrix=full, cost=total, mode="exact", epsilon=None,
            row_marginals=full.sum(axis=1), col_marginals=full.sum(axis=0),
            dual_row=du, dual_col=dv, iterations=st.pivots,
        )
    if mode == "entropic":
        plan, f, g, iters = _sinkhorn(aa, bb, sub_cost, float(epsilon))
        plan = _round_to_feasible(plan, aa, bb)
        full[np.ix_(rows, cols)] = plan
        total = float(np.sum(full * cost))
        df = np.full(a.size, np.nan)
        dg = np.full(b.size, np.nan)
        df[rows] = f
        dg[cols] = g
        return TransportPlan(
            matrix=full, cost=total, mode="entropic", epsilon=float(epsilon),
            row_marginals=full.sum(axis=1), col_marginals=full.sum(axis=0),
            dual_row=df, dual_col=dg, iterations=iters,
        )
    raise ConfigError(f"unknown mode {mode!r}; use 'exact' or 'entropic'")


def verify_dual_certificate(plan: TransportPlan, cost, tol=1e-9) -> dict:
    """Feasibility + complementary-slackness check of an exact plan's duals."""
    cost = np.asarray(cost, dtype=float)
    u, v = plan.dual_row, plan.dual_col
    reduced = cost - u[:, None] - v[None, :]
    support = plan.matrix > 1e-15
    return {
        "dual_feasible": bool(np.nanmin(reduced) >= -tol),
        "worst_reduced": float(np.nanmin(reduced)),
        "slackness": float(np.nanmax(np.abs(reduced[support]))) if support.any() else 0.0,
        "gap": abs(plan.cost - (float(np.nansum(u * plan.row_marginals))
                                + float(np.nansum(v * plan.col_marginals)))),
        "passed": bool(np.nanmin(reduced) >= -tol
                       and (not support.any() or np.nanmax(np.abs(reduced[support])) <= tol)),
    }


def l_wasserstein(geom, nu1: DiscreteMeasure, tau1: float, nu2: DiscreteMeasure,
                  tau2: float, mode: str = "exact", epsilon: float = 1e-3,
                  m_sigma: int = geodesics.DEFAULT_M, seed: int = 0) -> float:
    """Optimal total action cost between two measures at their times."""
    cost = cost_matrix(geom, nu1.points, tau1, nu2.points, tau2,
                       m_sigma=m_sigma, seed=seed)
    plan = solve_transport(nu1, nu2, cost, mode=mode, epsilon=epsilon)
    return plan.cost


def renormalized_cost(geom, table1, table2, taubar1: float, taubar2: float,
                      s: float, mode: str = "exact",
                      m_sigma: int = geodesics.DEFAULT_M, seed: int = 0) -> float:
    """Scaled transport cost at exponentially reparametrized times.

    tau_i(s) = taubar_i * exp(s); the result is
    2 (sqrt(tau2) - sqrt(tau1)) * cost - 2 n (sqrt(tau2) - sqrt(tau1))^2.
    """
    if not 0 < taubar1 < taubar2:
        raise DomainError("need 0 < taubar1 < taubar2")
    tau1 = taubar1 * np.exp(s)
    tau2 = taubar2 * np.exp(s)
    geom.require_tau(np.array([tau1, tau2]))
    nu1 = DiscreteMeasure(points=geom.nodes.copy(), weights=table1.mass_at(tau1),
                          tau=float(tau1), density=table1.density_at(geom, tau1))
    nu2 = DiscreteMeasure(points=geom.nodes.copy(), weights=table2.mass_at(tau2),
                          tau=float(tau2), density=table2.density_at(geom, tau2))
    v = l_wasserstein(geom, nu1, tau1, nu2, tau2, mode=mode,
                      m_sigma=m_sigma, seed=seed)
    gap = np.sqrt(tau2) - np.sqrt(tau1)
    return float(2.0 * gap * v - 2.0 * geom.dim * gap ** 2)


# ---------------------------------------------------------------------------
# potential-driven pushforward

def periodic_interp(values, theta, deriv: int = 0):
    """Trigonometric interpolation of mesh values at arbitrary angles."""
    values = np.asarray(values, dtype=float)
    n = values.size
    coef = np.fft.rfft(values) / n
    theta = np.asarray(theta, dtype=float)
    out = np.zeros_like(theta)
    for k in range(coef.size):
        c = coef[k]
        if k == 0:
            if deriv == 0:
                out = out + c.real
            continue
        factor = 1.0 if (n % 2 == 0 and k == n // 2) else 2.0
        ck = c * (1j * k) ** deriv
        out = out + factor * (ck.real * np.cos(k * theta) - ck.imag * np.sin(k * theta))
    return out


@dataclass(frozen=True)
class PotentialPushforward:
    """Targets and transformed densities of a potential-driven endpoint map."""

    source_points: np.ndarray
    weights: np.ndarray
    targets: np.ndarray
    det: np.ndarray            # volume Jacobian of the endpoint map
    density_source: np.ndarray
    density_target: np.ndarray  # density w.r.t. the target-time volume measure
    tau1: float
    tau: float

    @property
    def mass(self) -> float:
        return float(self.weights.sum())


def push_forward_geodesic(geom, nu1: DiscreteMeasure, phi, tau1: float,
                          tau: float, m_sigma: int = geodesics.DEFAULT_M,
                          fd_step: float = 1e-4) -> PotentialPushforward:
    """Push a mesh measure along endpoint maps of the potential phi.

    phi may be a callable of theta or an array of mesh values (interpolated
    trigonometrically).  Densities transform by the volume Jacobian of the
    map, which must stay nonzero.
    """
    if nu1.density is None:
        raise ConfigError("pushforward needs a measure with a density")
    geom.require_tau(np.array([tau1, tau]))
    pts = nu1.points

    if callable(phi):
        phi_fn = phi
        dphi_fn = None
    else:
        vals = np.asarray(phi, dtype=float)
        if vals.size != geom.n_nodes:
            raise ConfigError("potential array must live on the mesh")
        phi_fn = lambda th: periodic_interp(vals, th)          # noqa: E731
        dphi_fn = lambda th: periodic_interp(vals, th, deriv=1)  # noqa: E731

    def z_field(th):
        if dphi_fn is not None:
            dphi = dphi_fn(th)
        else:
            step = 1e-6
            dphi = (phi_fn(th + step) - phi_fn(th - step)) / (2 * step)
        return -0.5 * dphi / geom.curve_metric(th, tau1)

    if tau == tau1:
        det = np.ones(pts.size)
        return PotentialPushforward(
            source_points=pts, weights=nu1.weights, targets=pts.copy(), det=det,
            density_source=nu1.density, density_target=nu1.density.copy(),
            tau1=float(tau1), tau=float(tau),
        )

    batch = np.concatenate([pts - fd_step, pts, pts + fd_step])
    z = z_field(batch)
    _, rows = geodesics.exp_map_batch(geom, batch, tau1, z, tau, m=m_sigma)
    ends = rows[:, -1]
    n = pts.size
    f_minus, f_center, f_plus = ends[:n], ends[n:2 * n], ends[2 * n:]
    dcoord = (f_plus - f_minus) / (2 * fd_step)

    a_ratio = np.asarray(geom.curve_metric(f_center, tau), dtype=float) \
        / np.asarray(geom.curve_metric(pts, tau1), dtype=float)
    det = dcoord * np.sqrt(a_ratio)
    if geom.dim == 2:
        sin_src = np.sin(pts)
        sin_dst = np.sin(f_center)
        ring = np.where(
            np.abs(sin_src) < 1e-8,
            dcoord,
            sin_dst / np.where(np.abs(sin_src) < 1e-8, 1.0, sin_src),
        )
        if np.any(ring <= 0):
            raise ConjugatePoint("band radius collapsed under the pushforward")
        det = det * ring * np.sqrt(a_ratio)
    if np.any(dcoord <= 0) or np.any(np.abs(det) < 1e-14):
        raise ConjugatePoint("endpoint-map Jacobian degenerated")

    density_target = nu1.density / det
    return PotentialPushforward(
        source_points=pts, weights=nu1.weights, targets=f_center, det=det,
        density_source=nu1.density, density_target=density_target,
        tau1=float(tau1), tau=float(tau),
    )
