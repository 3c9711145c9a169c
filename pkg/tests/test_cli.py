import pytest

from levolve import cli
from levolve.errors import ParseError, SemanticError

GOOD = """
[geometry]
model = static_flat_circle
circumference = 6.283185307179586
nodes = 64
tau_min = 0.001
tau_max = 9.0

[measure:uniform]
profile = uniform

[monitor:theta]
kind = renormalized_cost
measure1 = uniform
measure2 = uniform
tau_bar1 = 1.0
tau_bar2 = 4.0
s_grid = 0.0, 0.6931471805599453
slack = 1e-3

[output]
directory = out
plots = false

[run]
seed = 7
"""


def write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_validate_good_config(tmp_path):
    cfg = cli.validate_config(write(tmp_path, GOOD))
    assert cfg.model_kind == "static_flat_circle"
    assert cfg.seed == 7
    assert [m.name for m in cfg.monitors] == ["theta"]


def test_validate_rejects_zero_tau_min(tmp_path):
    bad = GOOD.replace("tau_min = 0.001", "tau_min = 0.0")
    with pytest.raises(SemanticError, match="tau_min"):
        cli.validate_config(write(tmp_path, bad))


def test_validate_rejects_degenerate_dilaton(tmp_path):
    bad = GOOD.replace(
        "model = static_flat_circle\ncircumference = 6.283185307179586",
        "model = dilaton_circle\nphi0_sq = 10.0\nalpha = 1.0\nwinding = 1.0",
    ).replace("tau_max = 9.0", "tau_max = 6.0")
    with pytest.raises(SemanticError, match="degenerates"):
        cli.validate_config(write(tmp_path, bad))


def test_validate_rejects_unknown_measure(tmp_path):
    bad = GOOD.replace("measure1 = uniform", "measure1 = ghost")
    with pytest.raises(SemanticError, match="ghost"):
        cli.validate_config(write(tmp_path, bad))


def test_validate_rejects_bad_syntax(tmp_path):
    with pytest.raises(ParseError):
        cli.validate_config(write(tmp_path, "not an ini file\n[geometry"))


def test_validate_rejects_grid_outside_domain(tmp_path):
    bad = GOOD + "\n[monitor:w]\nkind = w_entropy\nmeasure = uniform\ntau_grid = 1.0, 20.0\n"
    with pytest.raises(SemanticError, match="tau_grid"):
        cli.validate_config(write(tmp_path, bad))


def test_potential_parser():
    assert cli._parse_potential("0.1*cos(theta)") == ("cos", 0.1)
    assert cli._parse_potential("0.25 * cos") == ("cos", 0.25)
    assert cli._parse_potential("0") == ("const", 0.0)
    with pytest.raises(ParseError):
        cli._parse_potential("sin(theta)")


def test_run_theta_closed_form(tmp_path):
    cfg = cli.validate_config(write(tmp_path, GOOD))
    report = cli.run_experiment(cfg, out_dir=str(tmp_path / "out"))
    assert report.all_passed
    rows = (tmp_path / "out" / "theta.csv").read_text().splitlines()
    assert rows[0] == "abscissa,value"
    s0, v0 = rows[1].split(",")
    s1, v1 = rows[2].split(",")
    assert float(v0) == pytest.approx(-2.0, abs=1e-9)
    assert float(v1) == pytest.approx(-4.0, abs=1e-9)
    assert (tmp_path / "out" / "report.txt").read_text().endswith("ALL PASS\n")


def test_run_empty_monitor_list(tmp_path):
    text = GOOD.split("[monitor:theta]")[0] + "\n[run]\nseed = 1\n"
    cfg = cli.validate_config(write(tmp_path, text))
    report = cli.run_experiment(cfg, out_dir=str(tmp_path / "out"))
    assert report.all_passed
    assert report.entries == []


def test_run_determinism_byte_identical(tmp_path):
    cfg_path = write(tmp_path, GOOD)
    rc1 = cli.main(["run", str(cfg_path), "--out-dir", str(tmp_path / "a"), "--seed", "7"])
    rc2 = cli.main(["run", str(cfg_path), "--out-dir", str(tmp_path / "b"), "--seed", "7"])
    assert rc1 == 0 and rc2 == 0
    a = (tmp_path / "a" / "theta.csv").read_bytes()
    b = (tmp_path / "b" / "theta.csv").read_bytes()
    assert a == b


def test_exit_code_on_failing_monitor(tmp_path):
    # an absurdly tight slack turns a healthy monitor into a failure
    failing = GOOD + "\n[monitor:strict]\nkind = distance_identity\npairs = 3\n" \
        "tau1 = 1.0\ntau2 = 4.0\nslack = 1e-18\n"
    rc = cli.main(["run", str(write(tmp_path, failing)),
                   "--out-dir", str(tmp_path / "out")])
    assert rc == 1
    report = (tmp_path / "out" / "report.txt").read_text()
    assert "FAILURES PRESENT" in report


def test_cli_validate_and_list(tmp_path, capsys):
    assert cli.main(["validate", str(write(tmp_path, GOOD))]) == 0
    assert cli.main(["list-flows"]) == 0
    out = capsys.readouterr().out
    assert "dilaton_circle" in out


def test_cli_resolution_override(tmp_path):
    cfg_path = write(tmp_path, GOOD)
    rc = cli.main(["run", str(cfg_path), "--out-dir", str(tmp_path / "r"),
                   "--resolution", "32"])
    assert rc == 0
    echo = (tmp_path / "r" / "report.txt").read_text()
    assert "nodes=32" in echo


def test_validate_custom_table_config(tmp_path):
    taus = "0.5,1.0,1.5,2.0"
    rows = ["nodes=16 taus=" + taus]
    for i in range(16):
        for j in range(4):
            rows.append(f"{i} {j} {4.0} {0.0}")
    table = tmp_path / "flow.tbl"
    table.write_text("\n".join(rows) + "\n")
    text = GOOD.replace(
        "model = static_flat_circle\ncircumference = 6.283185307179586",
        f"model = custom_tabulated\ntable = {table}",
    ).replace("nodes = 64", "nodes = 16").replace("tau_max = 9.0", "tau_max = 2.0")
    text = text.replace("tau_bar2 = 4.0", "tau_bar2 = 1.5").replace(
        "s_grid = 0.0, 0.6931471805599453", "s_grid = 0.0, 0.1")
    cfg = cli.validate_config(write(tmp_path, text, "custom.ini"))
    assert cfg.model_kind == "custom_tabulated"


def test_thread_cap_does_not_change_outputs(tmp_path, monkeypatch):
    cfg_path = write(tmp_path, GOOD)
    cli.main(["run", str(cfg_path), "--out-dir", str(tmp_path / "one")])
    monkeypatch.setenv("LEVOLVE_THREADS", "4")
    cli.main(["run", str(cfg_path), "--out-dir", str(tmp_path / "four")])
    a = (tmp_path / "one" / "theta.csv").read_bytes()
    b = (tmp_path / "four" / "theta.csv").read_bytes()
    assert a == b


def test_svg_written_when_plots_enabled(tmp_path):
    text = GOOD.replace("plots = false", "plots = true")
    cfg = cli.validate_config(write(tmp_path, text))
    cli.run_experiment(cfg, out_dir=str(tmp_path / "out"))
    svg = (tmp_path / "out" / "plot_theta.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg
