import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import levolve as lv
from levolve.errors import ConfigError, DomainError
from levolve.geometry import CustomTable


# ---------------------------------------------------------------------------
# construction and closed-form samples

def test_ricci_sphere_metric_coefficient(sphere64):
    # radius^2 grows linearly: 1 + 2*tau
    assert sphere64.curve_metric(0.0, 1.0) == pytest.approx(3.0, abs=1e-15)
    assert sphere64.metric_at(5, 1.0).g[0, 0] == pytest.approx(3.0)
    assert sphere64.metric_at(5, 1.0).sqrt_det_g == pytest.approx(3.0)


def test_flat_circle_is_static(flat64):
    for tau in (0.01, 1.0, 7.3):
        assert flat64.curve_metric(1.2, tau) == pytest.approx(1.0)
        assert flat64.s_curve_component(1.2, tau) == 0.0


def test_dilaton_closed_form(dilaton64):
    assert dilaton64.curve_metric(0.0, 4.0) == pytest.approx(2.0)
    assert dilaton64.curve_metric(0.0, 1.0) == pytest.approx(8.0)
    assert dilaton64.s_curve_component(0.0, 1.0) == pytest.approx(-1.0)
    assert dilaton64.trace_s(0.0, 1.0) == pytest.approx(-1.0 / 8.0)


def test_build_rejects_small_mesh():
    with pytest.raises(ConfigError):
        lv.build_geometry(lv.flat_circle(), 15, (0.5, 2.0))


def test_build_rejects_nonpositive_tau():
    with pytest.raises(DomainError):
        lv.build_geometry(lv.flat_circle(), 32, (0.0, 2.0))


def test_dilaton_degeneration_rejected():
    # phi0^2 - 2*alpha*c^2*tau_max <= 0 collapses the metric
    with pytest.raises(DomainError):
        lv.build_geometry(lv.dilaton_circle(10.0, 1.0, 1.0), 32, (0.5, 5.5))


def test_tau_domain_enforced(sphere64):
    with pytest.raises(DomainError):
        sphere64.metric_at(0, 100.0)
    with pytest.raises(DomainError):
        sphere64.flow_sample(0, 0.1)


# ---------------------------------------------------------------------------
# flow samples

def test_ricci_sphere_trace(sphere64):
    fs = sphere64.flow_sample(3, 1.0)
    assert fs.trace == pytest.approx(2.0 / 3.0)
    # S equals the Ricci tensor exactly on this model
    assert np.allclose(fs.s, fs.ricci)


def test_static_models_have_zero_rate(flat64, static_sphere64):
    for geom in (flat64, static_sphere64):
        fs = geom.flow_sample(1, 2.0)
        assert fs.dtrace_dtau == 0.0
        assert np.all(fs.ds_dtau == 0.0)


def test_trace_consistency(all_models):
    # |trace - g^{ij} S_ij| below 1e-12 wherever sampled
    for geom in all_models.values():
        for tau in (1.0, 2.5, 4.0):
            for node in (0, 7, 31):
                fs = geom.flow_sample(node, tau)
                a = geom.curve_metric(geom.nodes[node], tau)
                contraction = np.trace(fs.s) / a
                assert abs(fs.trace - contraction) < 1e-12


def test_flow_consistency_centered_difference(all_models):
    # d(g)/d(tau) = 2 S, checked by centered differences
    h = 1e-5
    for geom in all_models.values():
        for tau in (1.5, 3.0):
            fd = (geom.curve_metric(0.3, tau + h) - geom.curve_metric(0.3, tau - h)) / (2 * h)
            assert fd == pytest.approx(2.0 * geom.s_curve_component(0.3, tau), abs=1e-8)


# ---------------------------------------------------------------------------
# volume weights and the Laplacian

def test_volume_weights_flat(flat64):
    w = flat64.volume_weights(1.0)
    assert np.allclose(w, 2 * np.pi / 64)
    assert w.sum() == pytest.approx(2 * np.pi)


def test_volume_weights_sphere_total(sphere64):
    # full-sphere quadrature: area 4 pi r^2 with r^2 = 3 at tau = 1
    assert sphere64.volume_weights(1.0).sum() == pytest.approx(12 * np.pi, rel=1e-13)


def test_volume_weights_dilaton(dilaton64):
    assert dilaton64.volume_weights(1.0).sum() == pytest.approx(np.sqrt(8.0) * 2 * np.pi)


def test_laplacian_annihilates_constants(all_models):
    for geom in all_models.values():
        out = geom.laplace_beltrami(np.full(geom.n_nodes, 3.7), 1.0)
        assert np.max(np.abs(out)) == 0.0


def test_laplacian_flat_eigenfunction(flat64):
    lap = flat64.laplace_beltrami(np.cos(flat64.nodes), 1.0)
    assert np.max(np.abs(lap + np.cos(flat64.nodes))) < 4.0 / 64 ** 2 * 10


def test_laplacian_dilaton_eigenfunction(dilaton64):
    # theta-independent metric: the operator is (1/phi^2) d^2/d(theta)^2
    lap = dilaton64.laplace_beltrami(np.cos(dilaton64.nodes), 1.0)
    assert np.max(np.abs(lap + np.cos(dilaton64.nodes) / 8.0)) < 1e-3


def test_laplacian_second_order_convergence():
    errs = []
    for n in (64, 128):
        geom = lv.build_geometry(lv.flat_circle(), n, (0.5, 2.0))
        lap = geom.laplace_beltrami(np.cos(geom.nodes), 1.0)
        errs.append(np.max(np.abs(lap + np.cos(geom.nodes))))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)


def test_laplacian_self_adjoint(all_models):
    rng = np.random.default_rng(11)
    for geom in all_models.values():
        w = geom.volume_weights(2.0)
        for _ in range(5):
            u = rng.normal(size=geom.n_nodes)
            v = rng.normal(size=geom.n_nodes)
            left = np.dot(w, geom.laplace_beltrami(u, 2.0) * v)
            right = np.dot(w, u * geom.laplace_beltrami(v, 2.0))
            assert abs(left - right) < 1e-10


# ---------------------------------------------------------------------------
# the pointwise forms

def test_positivity_form_vanishes_flat(flat64):
    for x in ([0.0], [1.3], [-2.0]):
        assert flat64.positivity_form(5, 2.0, x) == pytest.approx(0.0, abs=1e-14)


def test_positivity_form_static_sphere_is_ricci(static_sphere64):
    # for a static metric the form reduces to twice the Ricci form
    x = np.array([0.7, -0.4])
    expected = 2.0 * (x @ np.eye(2) @ x)
    assert static_sphere64.positivity_form(2, 1.5, x) == pytest.approx(expected)


def test_positivity_form_ricci_sphere_cancellation(sphere64):
    # evolution of the trace curvature cancels the form identically
    rng = np.random.default_rng(5)
    for _ in range(100):
        node = int(rng.integers(0, 64))
        tau = float(rng.uniform(0.6, 8.0))
        x = rng.normal(size=2)
        assert abs(sphere64.positivity_form(node, tau, x)) < 1e-8


def test_positivity_form_dilaton_closed_form(dilaton64):
    # 2 * alpha * c^2 * |X|^2 / phi^2 with phi^2 = 8 at tau = 1
    x_unit = [1.0 / np.sqrt(8.0)]
    assert dilaton64.positivity_form(0, 1.0, x_unit) == pytest.approx(0.25, abs=1e-12)


def test_harnack_form_values(flat64, sphere64, dilaton64):
    assert flat64.harnack_form(0, 1.0, [0.5]) == 0.0
    assert sphere64.harnack_form(0, 1.0, [0.0, 0.0]) == pytest.approx(-2.0 / 9.0)
    assert dilaton64.harnack_form(0, 1.0, [0.0]) == pytest.approx(0.15625)


@settings(max_examples=25, deadline=None)
@given(cx=st.floats(-3, 3), cy=st.floats(-3, 3))
def test_forms_are_quadratic_in_direction(cx, cy):
    # third difference of a quadratic along any ray vanishes
    geom = lv.build_geometry(lv.round_sphere(1.0), 16, (0.5, 5.0))
    x = np.array([cx, cy])
    for form in (geom.positivity_form, geom.harnack_form):
        q = [form(0, 1.3, t * x) for t in (0.0, 1.0, 2.0, 3.0)]
        scale = max(1.0, max(abs(v) for v in q))
        assert abs(q[3] - 3 * q[2] + 3 * q[1] - q[0]) < 1e-12 * scale


def test_verify_positivity_reports(all_models, static_sphere64):
    rep = static_sphere64.verify_positivity_form([1.0, 2.0])
    assert rep.passed and rep.min_value >= -1e-12
    assert np.allclose(rep.x, 0.0, atol=1e-8)
    for geom in all_models.values():
        rep = geom.verify_positivity_form([0.8, 1.0, 2.0, 4.0])
        assert rep.passed, geom.model.kind
        assert rep.min_value >= -1e-8


# ---------------------------------------------------------------------------
# tabulated models

def test_table_matches_closed_form(dilaton_table_model, dilaton64):
    for tau in (0.9, 1.7, 3.3):
        for th in (0.0, 1.1, 4.4):
            assert dilaton_table_model.curve_metric(th, tau) == pytest.approx(
                dilaton64.curve_metric(th, tau), rel=1e-6)
            assert dilaton_table_model.trace_s(th, tau) == pytest.approx(
                dilaton64.trace_s(th, tau), rel=1e-4)
    fs_t = dilaton_table_model.flow_sample(4, 2.0)
    fs_c = dilaton64.flow_sample(4, 2.0)
    assert fs_t.trace == pytest.approx(fs_c.trace, rel=1e-6)
    assert fs_t.dtrace_dtau == pytest.approx(fs_c.dtrace_dtau, rel=1e-3)
    assert abs(fs_t.lap_trace) < 1e-10
    assert np.allclose(fs_t.grad_trace, 0.0, atol=1e-10)


def test_table_flow_consistency(dilaton_table_model):
    # centered difference of tabulated g in tau recovers 2 S within O(h^2)
    geom = dilaton_table_model
    h = geom.model.table.taus[1] - geom.model.table.taus[0]
    fd = (geom.curve_metric(0.5, 2.0 + h) - geom.curve_metric(0.5, 2.0 - h)) / (2 * h)
    assert fd == pytest.approx(2.0 * geom.s_curve_component(0.5, 2.0), abs=4 * h ** 2 * 10)


def test_table_laplacian_self_adjoint(dilaton_table_model):
    geom = dilaton_table_model
    rng = np.random.default_rng(3)
    w = geom.volume_weights(2.0)
    u, v = rng.normal(size=geom.n_nodes), rng.normal(size=geom.n_nodes)
    left = np.dot(w, geom.laplace_beltrami(u, 2.0) * v)
    right = np.dot(w, u * geom.laplace_beltrami(v, 2.0))
    assert abs(left - right) < 1e-10


def test_table_file_roundtrip(tmp_path):
    taus = np.array([0.5, 1.0, 1.5, 2.0])
    path = tmp_path / "flow.tbl"
    lines = ["nodes=16 taus=" + ",".join(f"{t}" for t in taus)]
    for i in range(16):
        for j, t in enumerate(taus):
            lines.append(f"{i} {j} {4.0 + t} {0.5}")
    path.write_text("\n".join(lines) + "\n")
    model = lv.load_table(path)
    geom = lv.build_geometry(model, 16, (0.5, 2.0))
    assert geom.curve_metric(0.3, 1.0) == pytest.approx(5.0)
    assert geom.s_curve_component(0.3, 1.0) == pytest.approx(0.5)


def test_table_file_rejects_incomplete(tmp_path):
    path = tmp_path / "bad.tbl"
    path.write_text("nodes=16 taus=0.5,1.0,1.5,2.0\n0 0 1.0 0.0\n")
    with pytest.raises(ConfigError):
        lv.load_table(path)


def test_table_rejects_nonpositive_metric():
    taus = np.linspace(0.5, 2.0, 5)
    with pytest.raises(ConfigError):
        CustomTable(taus=taus, g=np.zeros((16, 5)), s=np.zeros((16, 5)))
