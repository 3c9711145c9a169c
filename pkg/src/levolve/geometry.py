"""Evolving closed one- and two-dimensional geometries.

Every built-in model is a circle or a round sphere whose metric changes with
a backward time parameter tau according to d(g)/d(tau) = 2*S for a symmetric
tensor S.  All built-ins are spatially homogeneous, so curvature, S and their
derivatives are available in closed form; the node mesh exists to carry
densities, transport supports and discrete curves.

The sphere is handled by symmetry reduction: points live on a reference great
circle parametrized by the unit-sphere arc angle theta in [0, 2*pi), minimizing
curves between two such points stay on that great circle, and integrals over
the full sphere use the band density pi * r^2 * |sin(theta)| per d(theta).

Tensor samples are reported in the reduced coordinate frame: for circles the
single coordinate theta, for spheres the pair (arc direction, transverse
direction) scaled so that the metric is r^2 times the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DomainError

FLAT_CIRCLE = "static_flat_circle"
STATIC_SPHERE = "static_round_sphere"
RICCI_SPHERE = "ricci_round_sphere"
DILATON_CIRCLE = "dilaton_circle"
CUSTOM = "custom_tabulated"

KNOWN_KINDS = (FLAT_CIRCLE, STATIC_SPHERE, RICCI_SPHERE, DILATON_CIRCLE, CUSTOM)

_POS_EIG_TOL = 1e-10
TWO_PI = 2.0 * np.pi


def _shaped(value, theta, tau):
    """Broadcast a (possibly tau-shaped) value against both argument shapes."""
    out = np.asarray(value, dtype=float) + np.zeros(
        np.broadcast_shapes(np.shape(theta), np.shape(tau))
    )
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CustomTable:
    """Per-node, per-tau tables of the metric and flow-tensor component."""

    taus: np.ndarray        # strictly increasing, shape (T,)
    g: np.ndarray           # g_theta_theta, shape (N, T)
    s: np.ndarray           # S_theta_theta, shape (N, T)

    def __post_init__(self):
        object.__setattr__(self, "taus", np.asarray(self.taus, dtype=float))
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float))
        object.__setattr__(self, "s", np.asarray(self.s, dtype=float))
        if self.taus.ndim != 1 or self.taus.size < 4 or np.any(np.diff(self.taus) <= 0):
            raise ConfigError("table needs >= 4 strictly increasing taus")
        if self.g.shape != self.s.shape or self.g.shape[1] != self.taus.size:
            raise ConfigError("table shapes inconsistent")
        if np.any(self.g <= 0):
            raise ConfigError("tabulated metric must be strictly positive")


@dataclass(frozen=True)
class FlowModel:
    """A closed-form (or tabulated) evolving metric family."""

    kind: str
    circumference: float = TWO_PI        # flat circle
    radius0: float = 1.0                 # spheres
    phi0_sq: float = 10.0                # dilaton circle: initial metric coefficient
    alpha: float = 1.0                   # dilaton coupling, > 0
    winding: float = 1.0                 # dilaton winding speed
    table: Optional[CustomTable] = None

    def __post_init__(self):
        if self.kind not in KNOWN_KINDS:
            raise ConfigError(f"unknown flow model kind {self.kind!r}")
        if self.kind == FLAT_CIRCLE and self.circumference <= 0:
            raise ConfigError("circumference must be positive")
        if self.kind in (STATIC_SPHERE, RICCI_SPHERE) and self.radius0 <= 0:
            raise ConfigError("initial radius must be positive")
        if self.kind == DILATON_CIRCLE:
            if self.phi0_sq <= 0:
                raise ConfigError("phi0_sq must be positive")
            if self.alpha <= 0:
                raise ConfigError("dilaton coupling alpha must be positive")
        if self.kind == CUSTOM and self.table is None:
            raise ConfigError("custom_tabulated model needs a table")

    @property
    def dim(self) -> int:
        return 2 if self.kind in (STATIC_SPHERE, RICCI_SPHERE) else 1


def flat_circle(circumference: float = TWO_PI) -> FlowModel:
    return FlowModel(kind=FLAT_CIRCLE, circumference=circumference)


def round_sphere(radius0: float = 1.0, evolving: bool = True) -> FlowModel:
    return FlowModel(kind=RICCI_SPHERE if evolving else STATIC_SPHERE, radius0=radius0)


def dilaton_circle(phi0_sq: float = 10.0, alpha: float = 1.0, winding: float = 1.0) -> FlowModel:
    return FlowModel(kind=DILATON_CIRCLE, phi0_sq=phi0_sq, alpha=alpha, winding=winding)


def load_table(path) -> FlowModel:
    """Read a custom_tabulated model from a plain-text table file.

    Header line: ``nodes=<N> taus=<t0,t1,...>``; each following row is
    ``node_index tau_index g S`` (whitespace separated, decimal notation).
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ConfigError(f"empty table file {path}")
    try:
        header = dict(tok.split("=", 1) for tok in lines[0].split())
        n = int(header["nodes"])
        taus = np.array([float(t) for t in header["taus"].split(",")])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad table header in {path}: {exc}") from exc
    g = np.full((n, taus.size), np.nan)
    s = np.full((n, taus.size), np.nan)
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 4:
            raise ConfigError(f"bad table row {ln!r}: want 'node tau_index g S'")
        i, j = int(parts[0]), int(parts[1])
        g[i, j] = float(parts[2])
        s[i, j] = float(parts[3])
    if np.any(np.isnan(g)) or np.any(np.isnan(s)):
        raise ConfigError(f"table {path} does not cover all (node, tau) entries")
    return FlowModel(kind=CUSTOM, table=CustomTable(taus=taus, g=g, s=s))


@dataclass(frozen=True)
class MetricSample:
    """Metric components at one (node, tau), in the reduced frame."""

    g: np.ndarray           # (n, n), symmetric positive definite
    sqrt_det_g: float
    tau: float


@dataclass(frozen=True)
class FlowSample:
    """Flow tensor and derived pointwise quantities at one (node, tau).

    ``dtrace_dtau`` is the tau-rate of the metric trace of S; the spatial
    derivative entries vanish identically on the homogeneous built-ins.
    """

    s: np.ndarray           # (n, n) lower components
    trace: float            # g^{ij} S_ij
    dtrace_dtau: float
    grad_trace: np.ndarray  # (n,) covector components of d(trace)
    div_s: np.ndarray       # (n,) covector components of the S-divergence
    s_norm2: float          # |S_ij|^2
    ricci: np.ndarray       # (n, n) lower components
    lap_trace: float
    ds_dtau: np.ndarray     # (n, n) tau-rate of the S components
    tau: float


@dataclass(frozen=True)
class PositivityReport:
    """Outcome of minimizing the positivity form over directions and times."""

    min_value: float
    node: int
    tau: float
    x: np.ndarray
    bounded: bool
    passed: bool
    tolerance: float


def _abs_sin_antideriv(x):
    """Antiderivative of |sin| with F(0) = 0, valid for any real argument."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    k = np.floor(ax / np.pi)
    val = 2.0 * k + 1.0 - np.cos(ax - np.pi * k)
    return np.sign(x) * val


class Geometry:
    """Immutable mesh + evolving-metric bundle.

    All evaluation methods are pure; instances are safe to share between
    workers.
    """

    def __init__(self, model: FlowModel, n_nodes: int, tau_min: float, tau_max: float):
        if n_nodes < 16:
            raise ConfigError(f"need at least 16 nodes, got {n_nodes}")
        if not tau_min > 0.0:
            raise DomainError(f"tau_min must be positive, got {tau_min}")
        if not tau_max > tau_min:
            raise DomainError(f"need tau_min < tau_max, got [{tau_min}, {tau_max}]")
        self.model = model
        self.n_nodes = int(n_nodes)
        self.tau_min = float(tau_min)
        self.tau_max = float(tau_max)
        self.dim = model.dim
        self.spacing = TWO_PI / n_nodes
        self.nodes = np.arange(n_nodes) * self.spacing
        self.nodes.setflags(write=False)
        self._check_not_degenerate()
        self._unit_stencil_cache = None

    # ------------------------------------------------------------------
    # domain helpers

    def _check_not_degenerate(self):
        if self.model.kind == DILATON_CIRCLE:
            m = self.model
            if m.phi0_sq - 2.0 * m.alpha * m.winding ** 2 * self.tau_max <= 0.0:
                raise DomainError(
                    "metric degenerates: phi0_sq - 2*alpha*c^2*tau_max must stay positive"
                )
        elif self.model.kind == CUSTOM:
            t = self.model.table
            if self.tau_min < t.taus[0] - 1e-12 or self.tau_max > t.taus[-1] + 1e-12:
                raise DomainError("tau domain exceeds the tabulated range")
            if t.g.shape[0] != self.n_nodes:
                raise ConfigError("table node count does not match the mesh")

    def require_tau(self, tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(tau < self.tau_min - 1e-12) or np.any(tau > self.tau_max + 1e-12):
            raise DomainError(
                f"tau outside domain [{self.tau_min}, {self.tau_max}]"
            )

    @property
    def is_homogeneous(self) -> bool:
        return self.model.kind != CUSTOM

    def wrap(self, theta):
        return np.mod(theta, TWO_PI)

    def nearest_node(self, theta):
        return np.mod(np.rint(np.asarray(theta) / self.spacing).astype(int), self.n_nodes)

    # ------------------------------------------------------------------
    # pointwise metric / flow data (continuous theta and tau)

    def curve_metric(self, theta, tau):
        """Metric coefficient along the mesh direction at (theta, tau)."""
        kind = self.model.kind
        if kind == FLAT_CIRCLE:
            a = (self.model.circumference / TWO_PI) ** 2
        elif kind == STATIC_SPHERE:
            a = self.model.radius0 ** 2
        elif kind == RICCI_SPHERE:
            a = self.model.radius0 ** 2 + 2.0 * np.asarray(tau, dtype=float)
        elif kind == DILATON_CIRCLE:
            m = self.model
            a = m.phi0_sq - 2.0 * m.alpha * m.winding ** 2 * np.asarray(tau, dtype=float)
        else:
            return self._table_eval(self.model.table.g, theta, tau)
        return _shaped(a, theta, tau)

    def curve_metric_dtheta(self, theta, tau):
        if self.is_homogeneous:
            return _shaped(0.0, theta, tau)
        return self._table_eval(self.model.table.g, theta, tau, dtheta=True)

    def s_curve_component(self, theta, tau):
        """Lower component of S along the mesh direction."""
        kind = self.model.kind
        if kind in (FLAT_CIRCLE, STATIC_SPHERE):
            return _shaped(0.0, theta, tau)
        if kind == RICCI_SPHERE:
            return _shaped(1.0, theta, tau)
        if kind == DILATON_CIRCLE:
            return _shaped(-self.model.alpha * self.model.winding ** 2, theta, tau)
        return self._table_eval(self.model.table.s, theta, tau)

    def trace_s(self, theta, tau):
        """Metric trace of S at (theta, tau)."""
        kind = self.model.kind
        if kind in (FLAT_CIRCLE, STATIC_SPHERE):
            return _shaped(0.0, theta, tau)
        if kind == RICCI_SPHERE:
            return _shaped(
                2.0 / (self.model.radius0 ** 2 + 2.0 * np.asarray(tau, dtype=float)),
                theta, tau,
            )
        if kind == DILATON_CIRCLE:
            m = self.model
            ac2 = m.alpha * m.winding ** 2
            return _shaped(
                -ac2 / (m.phi0_sq - 2.0 * ac2 * np.asarray(tau, dtype=float)),
                theta, tau,
            )
        g = self._table_eval(self.model.table.g, theta, tau)
        s = self._table_eval(self.model.table.s, theta, tau)
        return s / g

    def trace_s_dtheta(self, theta, tau):
        if self.is_homogeneous:
            return _shaped(0.0, theta, tau)
        g = self._table_eval(self.model.table.g, theta, tau)
        s = self._table_eval(self.model.table.s, theta, tau)
        dg = self._table_eval(self.model.table.g, theta, tau, dtheta=True)
        ds = self._table_eval(self.model.table.s, theta, tau, dtheta=True)
        return ds / g - s * dg / g ** 2

    def trace_s_dtau(self, theta, tau):
        kind = self.model.kind
        if kind in (FLAT_CIRCLE, STATIC_SPHERE):
            return _shaped(0.0, theta, tau)
        if kind == RICCI_SPHERE:
            return _shaped(
                -4.0 / (self.model.radius0 ** 2 + 2.0 * np.asarray(tau, dtype=float)) ** 2,
                theta, tau,
            )
        if kind == DILATON_CIRCLE:
            m = self.model
            ac2 = m.alpha * m.winding ** 2
            phi2 = m.phi0_sq - 2.0 * ac2 * np.asarray(tau, dtype=float)
            return _shaped(-2.0 * ac2 ** 2 / phi2 ** 2, theta, tau)
        g = self._table_eval(self.model.table.g, theta, tau)
        s = self._table_eval(self.model.table.s, theta, tau)
        dg = self._table_eval(self.model.table.g, theta, tau, dtau=True)
        ds = self._table_eval(self.model.table.s, theta, tau, dtau=True)
        return ds / g - s * dg / g ** 2

    def metric_at(self, node: int, tau: float) -> MetricSample:
        self.require_tau(tau)
        a = float(self.curve_metric(self.nodes[node], tau))
        return MetricSample(g=a * np.eye(self.dim), sqrt_det_g=a ** (self.dim / 2.0),
                            tau=float(tau))

    def flow_sample(self, node: int, tau: float) -> FlowSample:
        self.require_tau(tau)
        theta = self.nodes[node]
        n = self.dim
        a = float(self.curve_metric(theta, tau))
        if self.is_homogeneous:
            s_coef = float(self.s_curve_component(theta, tau))
            zero_vec = np.zeros(n)
            return FlowSample(
                s=s_coef * np.eye(n),
                trace=float(self.trace_s(theta, tau)),
                dtrace_dtau=float(self.trace_s_dtau(theta, tau)),
                grad_trace=zero_vec, div_s=zero_vec,
                s_norm2=n * (s_coef / a) ** 2,
                ricci=np.eye(n) if n == 2 else np.zeros((1, 1)),
                lap_trace=0.0,
                ds_dtau=np.zeros((n, n)),
                tau=float(tau),
            )
        # tabulated circle: centered differences on the mesh at this tau
        g_row = self._table_eval(self.model.table.g, self.nodes, tau)
        s_row = self._table_eval(self.model.table.s, self.nodes, tau)
        trace_row = s_row / g_row
        h = self.spacing
        ip, im = (node + 1) % self.n_nodes, (node - 1) % self.n_nodes
        dth_s = (s_row[ip] - s_row[im]) / (2 * h)
        dth_g = (g_row[ip] - g_row[im]) / (2 * h)
        dth_trace = (trace_row[ip] - trace_row[im]) / (2 * h)
        cov_div = (dth_s - (dth_g / g_row[node]) * s_row[node]) / g_row[node]
        return FlowSample(
            s=np.array([[s_row[node]]]),
            trace=float(trace_row[node]),
            dtrace_dtau=float(self.trace_s_dtau(theta, tau)),
            grad_trace=np.array([dth_trace]),
            div_s=np.array([cov_div]),
            s_norm2=float((s_row[node] / g_row[node]) ** 2),
            ricci=np.zeros((1, 1)),
            lap_trace=float(self.laplace_beltrami(trace_row, tau)[node]),
            ds_dtau=np.array([[self._table_eval(self.model.table.s, theta, tau, dtau=True)]]),
            tau=float(tau),
        )

    # ------------------------------------------------------------------
    # measure and Laplacian

    def reduced_density(self, theta, tau):
        """Density of the manifold volume measure along the mesh, per d(theta)."""
        a = self.curve_metric(theta, tau)
        if self.dim == 1:
            return np.sqrt(_shaped(a, theta, tau))
        return np.pi * a * np.abs(np.sin(_shaped(np.asarray(theta, dtype=float), theta, tau)))

    def volume_weights(self, tau) -> np.ndarray:
        """Quadrature weights whose sum is the total volume of g(tau).

        Sphere cells integrate the |sin| band density exactly, so the total
        equals 4*pi*r^2 to machine precision.
        """
        self.require_tau(tau)
        if self.dim == 2:
            half = 0.5 * self.spacing
            cell = _abs_sin_antideriv(self.nodes + half) - _abs_sin_antideriv(self.nodes - half)
            return np.pi * float(self.curve_metric(0.0, tau)) * cell
        if self.is_homogeneous:
            return np.full(self.n_nodes, float(np.sqrt(self.curve_metric(0.0, tau))) * self.spacing)
        return np.sqrt(self._table_eval(self.model.table.g, self.nodes, tau)) * self.spacing

    def unit_stencil(self):
        """Time-independent parts (kappa_hat, w_hat) of the diffusion operator.

        For the homogeneous built-ins the heat generator is
        (1/a(tau)) * Lhat - trace_s(tau) with Lhat assembled from these arrays.
        """
        if self._unit_stencil_cache is None:
            h = self.spacing
            if self.dim == 2:
                kappa_hat = np.pi * np.abs(np.sin(self.nodes + 0.5 * h)) / h
                w_hat = np.pi * (_abs_sin_antideriv(self.nodes + 0.5 * h)
                                 - _abs_sin_antideriv(self.nodes - 0.5 * h))
            else:
                kappa_hat = np.ones(self.n_nodes) / h
                w_hat = np.full(self.n_nodes, h)
            kappa_hat.setflags(write=False)
            w_hat.setflags(write=False)
            self._unit_stencil_cache = (kappa_hat, w_hat)
        return self._unit_stencil_cache

    def kernel_law(self):
        """(code, p0, p1) describing a(tau) and trace_s(tau) for fast kernels.

        code 0: a = p0, s = 0;  code 1: a = p0 + 2*tau, s = 2/a;
        code 2: a = p0 - p1*tau, s = -(p1/2)/a.  None for tabulated models.
        """
        kind = self.model.kind
        if kind == FLAT_CIRCLE:
            return 0, (self.model.circumference / TWO_PI) ** 2, 0.0
        if kind == STATIC_SPHERE:
            return 0, self.model.radius0 ** 2, 0.0
        if kind == RICCI_SPHERE:
            return 1, self.model.radius0 ** 2, 0.0
        if kind == DILATON_CIRCLE:
            m = self.model
            return 2, m.phi0_sq, 2.0 * m.alpha * m.winding ** 2
        return None

    def diffusion_operator(self, tau):
        """(kappa, w, s_nodes) of the heat generator at one tau (any model)."""
        self.require_tau(tau)
        if self.is_homogeneous:
            kappa_hat, w_hat = self.unit_stencil()
            a = float(self.curve_metric(0.0, tau))
            vol_scale = a if self.dim == 2 else np.sqrt(a)
            return (kappa_hat * (vol_scale / a), w_hat * vol_scale,
                    np.full(self.n_nodes, float(self.trace_s(0.0, tau))))
        h = self.spacing
        g_row = self._table_eval(self.model.table.g, self.nodes, tau)
        s_row = self._table_eval(self.model.table.s, self.nodes, tau)
        cond = 1.0 / np.sqrt(g_row)           # sqrt(g) * g^{-1}
        kappa = 0.5 * (cond + np.roll(cond, -1)) / h
        return kappa, np.sqrt(g_row) * h, s_row / g_row

    def laplace_beltrami(self, values, tau) -> np.ndarray:
        """Discrete Laplace-Beltrami of a node field.

        Conservative conductance form: annihilates constants exactly and is
        self-adjoint with respect to volume_weights.
        """
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.n_nodes:
            raise ConfigError("field length does not match the mesh")
        kappa, w, _ = self.diffusion_operator(tau)
        flux = kappa * (np.roll(values, -1, axis=-1) - values)
        return (flux - np.roll(flux, 1, axis=-1)) / w

    # ------------------------------------------------------------------
    # the two pointwise forms

    def _positivity_pieces(self, node, tau):
        fs = self.flow_sample(node, tau)
        c0 = -fs.dtrace_dtau - fs.lap_trace - 2.0 * fs.s_norm2
        b = 4.0 * fs.div_s - 2.0 * fs.grad_trace
        a_mat = 2.0 * (fs.ricci - fs.s)
        return c0, b, a_mat

    def positivity_form(self, node: int, tau: float, x) -> float:
        """Quadratic-in-X quantity whose nonnegativity underwrites the monitors.

        For a static metric it reduces to twice the Ricci form of X.
        """
        c0, b, a_mat = self._positivity_pieces(node, tau)
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise ConfigError(f"vector has {x.size} components, geometry has dim {self.dim}")
        return float(c0 + b @ x + x @ a_mat @ x)

    def harnack_form(self, node: int, tau: float, x) -> float:
        """Trace Harnack-type expression in the direction X at (node, tau)."""
        self.require_tau(tau)
        fs = self.flow_sample(node, tau)
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise ConfigError(f"vector has {x.size} components, geometry has dim {self.dim}")
        return float(
            -fs.dtrace_dtau - fs.trace / tau
            - 2.0 * (fs.grad_trace @ x)
            + 2.0 * (x @ fs.s @ x)
        )

    def verify_positivity_form(self, tau_grid, tolerance: float = 1e-8,
                               magnitudes=(0.5, 1.0, 2.0, 4.0)) -> PositivityReport:
        """Minimize the positivity form over X at every (node, tau) and report."""
        tau_grid = np.atleast_1d(np.asarray(tau_grid, dtype=float))
        self.require_tau(tau_grid)
        nodes = [0] if self.is_homogeneous else range(self.n_nodes)
        best = np.inf
        arg = (0, float(tau_grid[0]), np.zeros(self.dim))
        bounded = True
        for tau in tau_grid:
            for node in nodes:
                c0, b, a_mat = self._positivity_pieces(node, float(tau))
                val, x_min, ok = _min_quadratic(c0, b, a_mat)
                bounded = bounded and ok
                # sampled double-check over axis directions and g-unit magnitudes
                a_here = float(self.curve_metric(self.nodes[node], tau))
                for mag in (0.0,) + tuple(magnitudes):
                    for k in range(self.dim):
                        for sgn in (1.0, -1.0):
                            x = np.zeros(self.dim)
                            x[k] = sgn * mag / np.sqrt(a_here)
                            cand = c0 + b @ x + x @ a_mat @ x
                            if cand < val:
                                val, x_min = cand, x
                if val < best:
                    best, arg = val, (node, float(tau), np.asarray(x_min))
        return PositivityReport(
            min_value=float(best), node=arg[0], tau=arg[1], x=arg[2],
            bounded=bounded, passed=bounded and best >= -tolerance,
            tolerance=tolerance,
        )

    # ------------------------------------------------------------------
    # tabulated-model interpolation

    def _table_eval(self, table, theta, tau, dtheta=False, dtau=False):
        """Catmull-Rom interpolation of a (node, tau) table at continuous points.

        Slopes match centered differences at interior grid points with a
        one-sided fallback at the tau-domain ends (via linear ghost columns).
        """
        taus = self.model.table.taus
        shape = np.broadcast_shapes(np.shape(theta), np.shape(tau))
        th = np.broadcast_to(np.asarray(theta, dtype=float), shape).ravel()
        tv = np.broadcast_to(np.asarray(tau, dtype=float), shape).ravel()

        jt = np.clip(np.searchsorted(taus, tv, side="right") - 1, 0, taus.size - 2)
        dt_seg = taus[jt + 1] - taus[jt]
        t_loc = np.clip((tv - taus[jt]) / dt_seg, 0.0, 1.0)
        xi = th / self.spacing
        i0 = np.floor(xi).astype(int)
        u = xi - i0

        wu = (_cr_basis_d(u) / self.spacing) if dtheta else _cr_basis(u)
        wt = (_cr_basis_d(t_loc) / dt_seg[:, None]) if dtau else _cr_basis(t_loc)

        padded = _pad_columns(table)
        out = np.zeros(th.size)
        n = self.n_nodes
        for a in range(4):
            rows = np.mod(i0 + a - 1, n)
            for c in range(4):
                out += wu[:, a] * wt[:, c] * padded[rows, jt + c]
        res = out.reshape(shape)
        return float(res) if res.ndim == 0 else res


def _cr_basis(t):
    """Catmull-Rom basis weights over points (p-1, p0, p1, p2) at parameter t."""
    t = np.asarray(t, dtype=float)[:, None]
    t2, t3 = t * t, t * t * t
    return np.concatenate(
        [-0.5 * t3 + t2 - 0.5 * t,
         1.5 * t3 - 2.5 * t2 + 1.0,
         -1.5 * t3 + 2.0 * t2 + 0.5 * t,
         0.5 * t3 - 0.5 * t2], axis=1)


def _cr_basis_d(t):
    t = np.asarray(t, dtype=float)[:, None]
    t2 = t * t
    return np.concatenate(
        [-1.5 * t2 + 2.0 * t - 0.5,
         4.5 * t2 - 5.0 * t,
         -4.5 * t2 + 4.0 * t + 0.5,
         1.5 * t2 - t], axis=1)


def _pad_columns(table):
    """Linear-extrapolation ghost columns so 4-point tau stencils always exist."""
    left = 2.0 * table[:, :1] - table[:, 1:2]
    right = 2.0 * table[:, -1:] - table[:, -2:-1]
    return np.concatenate([left, table, right], axis=1)


def _min_quadratic(c0, b, a_mat):
    """Global minimum of c0 + b.x + x.A.x as (value, argmin, bounded)."""
    vals, vecs = np.linalg.eigh(np.asarray(a_mat, dtype=float))
    b_rot = vecs.T @ np.asarray(b, dtype=float)
    x_rot = np.zeros_like(b_rot)
    total = float(c0)
    for k, lam in enumerate(vals):
        if lam > _POS_EIG_TOL:
            x_rot[k] = -b_rot[k] / (2.0 * lam)
            total -= b_rot[k] ** 2 / (4.0 * lam)
        elif lam < -_POS_EIG_TOL or abs(b_rot[k]) > _POS_EIG_TOL:
            return -np.inf, vecs @ x_rot, False
    return total, vecs @ x_rot, True


def build_geometry(model: FlowModel, n_nodes: int, tau_domain) -> Geometry:
    """Instantiate an immutable geometry over the given tau interval."""
    tau_min, tau_max = float(tau_domain[0]), float(tau_domain[1])
    return Geometry(model, n_nodes, tau_min, tau_max)
