"""Declarative experiment runner.

A sectioned key-value config declares one geometry, named measures, and a
list of monitors; ``run`` executes the monitors, writes one CSV per series,
a ``report.txt`` summary, and optional static SVG polyline plots.  Outputs
are byte-deterministic given (config, seed).  The exit code is 0 iff every
monitor verdict passes.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, geometry, geodesics, monitors, transport
from ._backend import backend_name
from .diffusion import bump_profile, initial_state, tabulate_diffusion
from .errors import LevolveError, ParseError, SemanticError

MONITOR_KINDS = (
    "renormalized_cost",
    "w_entropy",
    "reduced_volume",
    "distance_gap",
    "convexity_profile",
    "prekopa_leindler",
    "distance_identity",
    "plan_bound",
)


@dataclass
class MeasureSpec:
    name: str
    profile: str              # uniform | bump | two_point
    center: float = 0.0
    width: float = 0.5
    floor: float = 0.05
    point_a: float = 0.0
    point_b: float = np.pi


@dataclass
class MonitorSpec:
    name: str
    kind: str
    params: dict


@dataclass
class ExperimentConfig:
    model_kind: str
    model_params: dict
    nodes: int
    tau_min: float
    tau_max: float
    measures: dict            # name -> MeasureSpec
    monitors: list            # [MonitorSpec] in file order
    out_dir: str = "out"
    plots: bool = True
    seed: int = 0
    sigma_samples: int = geodesics.DEFAULT_M


@dataclass
class RunReport:
    entries: list = field(default_factory=list)
    version: str = ""
    backend: str = ""
    config_echo: str = ""
    incomplete: bool = False

    @property
    def all_passed(self) -> bool:
        return (not self.incomplete
                and all(e["verdict"] == "pass" for e in self.entries))


def _parse_floats(text):
    try:
        return np.array([float(tok) for tok in text.replace(";", ",").split(",") if tok.strip()])
    except ValueError as exc:
        raise ParseError(f"bad numeric list {text!r}: {exc}") from exc


def _parse_potential(text):
    """Potential grammar: '<amp>*cos(theta)', '<amp>*cos', or a plain number."""
    text = text.strip().lower().replace(" ", "")
    if "cos" in text:
        amp = text.split("*")[0]
        try:
            return ("cos", float(amp))
        except ValueError as exc:
            raise ParseError(f"bad potential {text!r}") from exc
    try:
        return ("const", float(text))
    except ValueError as exc:
        raise ParseError(f"bad potential {text!r}") from exc


def validate_config(path) -> ExperimentConfig:
    """Parse and semantically check a config file; raise on the first defect."""
    cp = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh, source=str(path))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ParseError(f"cannot parse {path}: {exc}") from exc

    if "geometry" not in cp:
        raise SemanticError("missing [geometry] section")
    g = cp["geometry"]
    kind = g.get("model", "").strip()
    if kind not in geometry.KNOWN_KINDS:
        raise SemanticError(f"geometry.model: unknown model {kind!r}")
    try:
        nodes = g.getint("nodes", 64)
        tau_min = g.getfloat("tau_min")
        tau_max = g.getfloat("tau_max")
    except (ValueError, TypeError) as exc:
        raise ParseError(f"geometry section: {exc}") from exc
    if tau_min is None or tau_max is None:
        raise SemanticError("geometry.tau_min and geometry.tau_max are required")
    if tau_min <= 0:
        raise SemanticError("geometry.tau_min: must be positive (times precede nothing)")
    if tau_max <= tau_min:
        raise SemanticError("geometry.tau_max: must exceed tau_min")
    if nodes < 16:
        raise SemanticError("geometry.nodes: need at least 16")

    params = {}
    if kind == geometry.FLAT_CIRCLE:
        params["circumference"] = g.getfloat("circumference", 2 * np.pi)
    elif kind in (geometry.STATIC_SPHERE, geometry.RICCI_SPHERE):
        params["radius0"] = g.getfloat("radius0", 1.0)
    elif kind == geometry.DILATON_CIRCLE:
        params["phi0_sq"] = g.getfloat("phi0_sq", 10.0)
        params["alpha"] = g.getfloat("alpha", 1.0)
        params["winding"] = g.getfloat("winding", 1.0)
        if params["phi0_sq"] - 2 * params["alpha"] * params["winding"] ** 2 * tau_max <= 0:
            raise SemanticError("geometry: metric degenerates before tau_max")
    elif kind == geometry.CUSTOM:
        table = g.get("table", "")
        if not table:
            raise SemanticError("geometry.table: path required for custom_tabulated")
        params["table"] = table

    measures = {}
    mons = []
    for section in cp.sections():
        if section.startswith("measure:"):
            name = section.split(":", 1)[1]
            s = cp[section]
            profile = s.get("profile", "uniform").strip()
            if profile not in ("uniform", "bump", "two_point"):
                raise SemanticError(f"{section}.profile: unknown profile {profile!r}")
            measures[name] = MeasureSpec(
                name=name, profile=profile,
                center=s.getfloat("center", 0.0),
                width=s.getfloat("width", 0.5),
                floor=s.getfloat("floor", 0.05),
                point_a=s.getfloat("a", 0.0),
                point_b=s.getfloat("b", np.pi),
            )
        elif section.startswith("monitor:"):
            name = section.split(":", 1)[1]
            s = cp[section]
            kind_m = s.get("kind", "").strip()
            if kind_m not in MONITOR_KINDS:
                raise SemanticError(f"{section}.kind: unknown monitor {kind_m!r}")
            mons.append(MonitorSpec(name=name, kind=kind_m, params=dict(s)))

    out = cp["output"] if "output" in cp else {}
    run = cp["run"] if "run" in cp else {}
    cfg = ExperimentConfig(
        model_kind=kind, model_params=params, nodes=nodes,
        tau_min=tau_min, tau_max=tau_max, measures=measures, monitors=mons,
        out_dir=out.get("directory", "out") if out else "out",
        plots=(str(out.get("plots", "true")).lower() in ("1", "true", "yes")) if out else True,
        seed=int(run.get("seed", "0")) if run else 0,
        sigma_samples=int(run.get("sigma_samples", str(geodesics.DEFAULT_M))) if run else geodesics.DEFAULT_M,
    )
    _semantic_monitor_checks(cfg)
    return cfg


def _semantic_monitor_checks(cfg: ExperimentConfig):
    for mon in cfg.monitors:
        p = mon.params
        where = f"monitor:{mon.name}"
        for key in ("measure", "measure1", "measure2", "profile1", "profile2"):
            if key in p and p[key] not in cfg.measures:
                raise SemanticError(f"{where}.{key}: unknown measure {p[key]!r}")
        if "slack" in p and float(p["slack"]) <= 0:
            raise SemanticError(f"{where}.slack: must be positive")
        for key in ("tau_grid", "s_grid"):
            if key in p and _parse_floats(p[key]).size == 0:
                raise SemanticError(f"{where}.{key}: empty grid")
        for key in ("tau1", "tau2", "tau_bar1", "tau_bar2"):
            if key in p:
                v = float(p[key])
                if key.startswith("tau") and not (cfg.tau_min <= v <= cfg.tau_max):
                    raise SemanticError(f"{where}.{key}: {v} outside the tau domain")
        if "tau_grid" in p:
            grid = _parse_floats(p["tau_grid"])
            if np.any(grid < cfg.tau_min) or np.any(grid > cfg.tau_max):
                raise SemanticError(f"{where}.tau_grid: grid leaves the tau domain")
        if "potential" in p:
            _parse_potential(p["potential"])


def _build_model(cfg: ExperimentConfig):
    kind = cfg.model_kind
    if kind == geometry.FLAT_CIRCLE:
        return geometry.flat_circle(cfg.model_params["circumference"])
    if kind == geometry.STATIC_SPHERE:
        return geometry.round_sphere(cfg.model_params["radius0"], evolving=False)
    if kind == geometry.RICCI_SPHERE:
        return geometry.round_sphere(cfg.model_params["radius0"], evolving=True)
    if kind == geometry.DILATON_CIRCLE:
        return geometry.dilaton_circle(cfg.model_params["phi0_sq"],
                                       cfg.model_params["alpha"],
                                       cfg.model_params["winding"])
    return geometry.load_table(cfg.model_params["table"])


def _profile_values(geom, spec: MeasureSpec):
    if spec.profile == "uniform":
        return np.ones(geom.n_nodes)
    if spec.profile == "bump":
        return bump_profile(geom, spec.center, spec.width, spec.floor)
    raise SemanticError(f"measure {spec.name}: profile {spec.profile} has no density")


def _measure(geom, spec: MeasureSpec, tau):
    if spec.profile == "two_point":
        return transport.DiscreteMeasure(
            points=np.array([spec.point_a, spec.point_b]),
            weights=np.array([0.5, 0.5]), tau=float(tau))
    u = _profile_values(geom, spec)
    state = initial_state(geom, u, tau)
    return transport.measure_from_density(geom, state.u, tau)


def _run_monitor(geom, cfg, mon: MonitorSpec, seed: int):
    """Execute one monitor; returns (series_or_none, summary_dict, artifacts)."""
    p = mon.params
    kind = mon.kind
    slack = float(p.get("slack", monitors.TRANSPORT_SLACK))
    m_sigma = int(p.get("sigma_samples", cfg.sigma_samples))

    if kind == "renormalized_cost":
        s_grid = _parse_floats(p.get("s_grid", "-0.2,-0.1,0,0.1,0.2"))
        tb1, tb2 = float(p["tau_bar1"]), float(p["tau_bar2"])
        tables = []
        for key in ("measure1", "measure2"):
            spec = cfg.measures[p[key]]
            tb = tb1 if key == "measure1" else tb2
            t_lo = tb * np.exp(float(s_grid.min()))
            t_hi = tb * np.exp(float(s_grid.max()))
            geom.require_tau(np.array([t_lo, t_hi]))
            state = initial_state(geom, _profile_values(geom, spec), t_lo)
            tables.append(tabulate_diffusion(geom, state, t_hi))
        series = monitors.renormalized_cost_series(
            geom, tables[0], tables[1], tb1, tb2, s_grid,
            name=mon.name, slack=slack, m_sigma=m_sigma, seed=seed)
        return series, series.summary()

    if kind == "w_entropy":
        grid = _parse_floats(p["tau_grid"])
        spec = cfg.measures[p["measure"]]
        state = initial_state(geom, _profile_values(geom, spec), float(grid.min()))
        series = monitors.w_entropy_series(geom, state, grid, name=mon.name, slack=slack)
        return series, series.summary()

    if kind in ("reduced_volume", "distance_gap"):
        grid = _parse_floats(p["tau_grid"])
        base_theta = float(p.get("base_theta", 0.0))
        # base offset for the zero-time stand-in: as small as the domain allows
        base_eps = float(p.get("base_eps", max(cfg.tau_min, 1e-3 * float(grid.min()))))
        fld = geodesics.l_distance_field(geom, base_theta, base_eps, grid,
                                         m=m_sigma, seed=seed)
        if kind == "reduced_volume":
            series = monitors.reduced_volume_series(geom, fld, name=mon.name, slack=slack)
        else:
            series = monitors.scaled_distance_gap(geom, fld, name=mon.name, slack=slack)
        return series, series.summary()

    if kind == "convexity_profile":
        spec = cfg.measures[p["measure"]]
        tau1, tau2 = float(p["tau1"]), float(p["tau2"])
        nu1 = _measure(geom, spec, tau1)
        pot_kind, amp = _parse_potential(p.get("potential", "0"))
        phi = amp * np.cos(geom.nodes) if pot_kind == "cos" else np.full(geom.n_nodes, amp)
        series = monitors.convexity_profile(
            geom, nu1, phi, tau1, tau2, grid_points=int(p.get("grid_points", 9)),
            name=mon.name, slack=slack, m_sigma=m_sigma, seed=seed)
        return series, series.summary()

    if kind == "prekopa_leindler":
        tau1, tau2 = float(p["tau1"]), float(p["tau2"])
        u1 = _profile_values(geom, cfg.measures[p["profile1"]])
        u2 = _profile_values(geom, cfg.measures[p["profile2"]])
        rep = monitors.prekopa_leindler_check(
            geom, u1, u2, float(p.get("lambda", 0.5)), tau1, tau2,
            slack=slack, m_sigma=int(p.get("sigma_samples", 34)), seed=seed)
        summary = {"name": mon.name, "property": "product-inequality",
                   "slack": slack, "verdict": "pass" if rep.passed else "fail",
                   "worst_violation": 1.0 - rep.margin}
        return _report_series(mon.name, {"taubar": rep.taubar, "lhs": rep.lhs,
                                         "rhs": rep.rhs, "margin": rep.margin}), summary

    if kind == "distance_identity":
        series = monitors.distance_identity_check(
            geom, int(p.get("pairs", 20)), float(p["tau1"]), float(p["tau2"]),
            name=mon.name, slack=float(p.get("slack", monitors.IDENTITY_SLACK)),
            m_sigma=int(p.get("sigma_samples", 161)), seed=seed)
        return series, series.summary()

    if kind == "plan_bound":
        tau1, tau2 = float(p["tau1"]), float(p["tau2"])
        nu1 = _measure(geom, cfg.measures[p["measure1"]], tau1)
        nu2 = _measure(geom, cfg.measures[p["measure2"]], tau2)
        rep = monitors.plan_bound_check(geom, nu1, nu2, tau1, tau2,
                                        slack=slack, m_sigma=m_sigma, seed=seed)
        summary = {"name": mon.name, "property": "le-bound", "slack": slack,
                   "verdict": "pass" if rep.passed else "fail",
                   "worst_violation": rep.lhs - rep.bound}
        return _report_series(mon.name, {"lhs": rep.lhs, "bound": rep.bound}), summary

    raise SemanticError(f"unhandled monitor kind {kind}")


def _report_series(name, mapping):
    """Represent a scalar report as a tiny series so it still gets a CSV."""
    keys = sorted(mapping)
    return monitors.MonitorSeries(
        name=name, abscissa_kind="field", abscissa=np.arange(len(keys), dtype=float),
        values=np.array([mapping[k] for k in keys]), property=monitors.LE_BOUND,
        slack=np.inf, bound=np.full(len(keys), np.inf))


def _write_svg(path, series):
    xs, ys = series.abscissa, series.values
    w, h, pad = 640, 400, 50
    if xs.size == 0:
        return
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    xr = x1 - x0 or 1.0
    yr = y1 - y0 or 1.0
    pts = " ".join(
        f"{pad + (x - x0) / xr * (w - 2 * pad):.3f},{h - pad - (y - y0) / yr * (h - 2 * pad):.3f}"
        for x, y in zip(xs, ys))
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
            f'viewBox="0 0 {w} {h}">\n'
            f'<rect width="{w}" height="{h}" fill="white"/>\n'
            f'<text x="{w // 2}" y="20" text-anchor="middle" font-size="14">{series.name}</text>\n'
            f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>\n'
            f'<text x="{pad}" y="{h - 18}" font-size="11">{x0:.6g}</text>\n'
            f'<text x="{w - pad}" y="{h - 18}" text-anchor="end" font-size="11">{x1:.6g}</text>\n'
            f'<text x="8" y="{h - pad}" font-size="11">{y0:.6g}</text>\n'
            f'<text x="8" y="{pad}" font-size="11">{y1:.6g}</text>\n'
            "</svg>\n")


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunReport:
    """Run every monitor, write artifacts, and return the report."""
    out = out_dir or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    geom = geometry.build_geometry(_build_model(cfg), cfg.nodes,
                                   (cfg.tau_min, cfg.tau_max))
    report = RunReport(version=__version__, backend=backend_name(),
                       config_echo=_echo(cfg))

    threads = max(1, int(os.environ.get("LEVOLVE_THREADS", "1")))

    def job(idx_mon):
        idx, mon = idx_mon
        t0 = time.perf_counter()
        try:
            series, summary = _run_monitor(geom, cfg, mon, seed=cfg.seed + idx)
            return idx, mon, series, summary, time.perf_counter() - t0, None
        except LevolveError as exc:
            return idx, mon, None, None, time.perf_counter() - t0, exc

    items = list(enumerate(cfg.monitors))
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, items))
    else:
        results = [job(it) for it in items]

    # single writer, config order
    for idx, mon, series, summary, seconds, err in sorted(results, key=lambda r: r[0]):
        if err is not None:
            report.entries.append({
                "name": mon.name, "kind": mon.kind, "verdict": "error",
                "worst_violation": float("nan"), "seconds": seconds,
                "error": f"{type(err).__name__}: {err}",
            })
            report.incomplete = True
            continue
        series.to_csv(os.path.join(out, f"{mon.name}.csv"))
        if cfg.plots and np.isfinite(series.slack):
            _write_svg(os.path.join(out, f"plot_{mon.name}.svg"), series)
        entry = dict(summary)
        entry["kind"] = mon.kind
        entry["seconds"] = seconds
        report.entries.append(entry)

    _write_report(os.path.join(out, "report.txt"), report)
    return report


def _echo(cfg: ExperimentConfig) -> str:
    meas = ",".join(sorted(cfg.measures))
    mons = ",".join(m.name for m in cfg.monitors)
    return (f"model={cfg.model_kind} nodes={cfg.nodes} "
            f"tau=[{cfg.tau_min:.17g},{cfg.tau_max:.17g}] seed={cfg.seed} "
            f"measures=[{meas}] monitors=[{mons}]")


def _write_report(path, report: RunReport):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(f"levolve {report.version} (backend={report.backend})\n")
        fh.write(report.config_echo + "\n")
        if report.incomplete:
            fh.write("STATUS: INCOMPLETE (a monitor errored; results partial)\n")
        for e in report.entries:
            worst = e.get("worst_violation", float("nan"))
            fh.write(
                f"{e['name']}: kind={e['kind']} verdict={e['verdict']} "
                f"worst_violation={worst:.6g} time={e['seconds']:.3f}s"
                + (f" error={e['error']}" if "error" in e else "") + "\n")
        fh.write("ALL PASS\n" if report.all_passed else "FAILURES PRESENT\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="levolve",
                                     description="monotonicity lab for transport on evolving geometries")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out-dir", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--resolution", type=int, default=None,
                       help="override geometry.nodes")
    p_val = sub.add_parser("validate", help="check a config file")
    p_val.add_argument("config")
    sub.add_parser("list-flows", help="print the built-in flow models")

    args = parser.parse_args(argv)
    if args.command == "list-flows":
        print("static_flat_circle    parameters: circumference")
        print("static_round_sphere   parameters: radius0")
        print("ricci_round_sphere    parameters: radius0")
        print("dilaton_circle        parameters: phi0_sq, alpha, winding")
        print("custom_tabulated      parameters: table (path to a plain-text table)")
        return 0
    if args.command == "validate":
        try:
            validate_config(args.config)
        except LevolveError as exc:
            print(f"INVALID: {exc}", file=sys.stderr)
            return 2
        print("OK")
        return 0
    # run
    try:
        cfg = validate_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.resolution is not None:
            cfg.nodes = args.resolution
        report = run_experiment(cfg, out_dir=args.out_dir)
    except LevolveError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 2
    for e in report.entries:
        print(f"{e['name']}: {e['verdict']}")
    return 0 if report.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
