import json
import math

import numpy as np
import pytest

import oracles
from quasicontrol import (ControlSchedule, ExperimentConfig, ReportBundle, build_control_mask, build_grid,
                          build_terminal_datum, certify_mintime_lower, constant_law, dirichlet_eigenfunction,
                          duality_gap, emit_report, inner, manufacture_target, run_experiment,
                          search_constrained_time, solve_forward, solve_steady, two_plus_sine)
from quasicontrol.errors import ConfigError, ConstructionFailure, HypothesisViolation
from quasicontrol.harness import main


@pytest.fixture
def grid():
    return build_grid(1.0, 99)


@pytest.fixture
def mask(grid):
    return build_control_mask(grid, (0.3, 0.7), (0.4, 0.6))


# -- eigenpair -----------------------------------------------------------------

def test_eigenpair(grid):
    ep = dirichlet_eigenfunction(build_grid(1.0, 99))
    assert ep.lam == pytest.approx(math.pi**2)
    g1 = build_grid(1.0, 9)
    assert dirichlet_eigenfunction(g1).phi[4] == pytest.approx(1.0)
    h = grid.h
    assert ep.lam_discrete == pytest.approx(2 / h**2 * (1 - math.cos(math.pi * h)), rel=1e-15)
    assert ep.lam_discrete == pytest.approx(math.pi**2 - math.pi**4 * h**2 / 12, rel=1e-6)
    assert ep.lam_inverse_power == pytest.approx(ep.lam_discrete, rel=1e-10)
    assert ep.phi.min() > 0
    assert np.max(np.abs(ep.phi - ep.phi_discrete)) <= 1e-7


# -- terminal datum ------------------------------------------------------------

def test_terminal_datum_against_quadrature():
    g = build_grid(1.0, 399)
    x = g.x
    d = build_terminal_datum(g, (0.3, 0.7), -0.5 * x * (1 - x), np.zeros(g.n))
    theta, l1, dd = oracles.quad_theta(lambda s: 0.5 * s * (1 - s), (0.3, 0.7))
    # frozen: theta = 0.0030685484072716976, l1 = 1/12
    assert theta == pytest.approx(0.0030685484072716976, rel=1e-10)
    assert d.d == pytest.approx(dd)
    assert d.theta == pytest.approx(theta, rel=0.05)
    assert d.C_theta == pytest.approx(d.theta / (3 * l1), rel=1e-4)
    assert d.total <= -d.theta / 3
    assert all(v >= 0 for v in d.margins().values())


def test_terminal_datum_shape(grid):
    x = grid.x
    d = build_terminal_datum(grid, (0.3, 0.7), -0.5 * x * (1 - x), np.zeros(grid.n))
    inside = (x >= 0.3) & (x <= 0.7)
    np.testing.assert_allclose(d.phiT[inside], d.C_theta * d.phi1[inside])
    assert d.phiT[inside].min() >= d.theta_tilde > 0
    assert np.all((d.zeta >= -1.0) & (d.zeta <= d.C_theta * (1 + 1e-12)))
    far = np.maximum(0.3 - x, x - 0.7) >= d.delta
    assert np.all(d.zeta[far] == -1.0)


def test_terminal_datum_band_mass_fails(grid):
    # almost all of ybar0 - y0 sits in the band next to omega
    x = grid.x
    diff = 1e-6 + np.exp(-((x - 0.27) / 0.01) ** 2)
    with pytest.raises(ConstructionFailure):
        build_terminal_datum(grid, (0.3, 0.7), -diff, np.zeros(grid.n), min_delta=0.01)


def test_terminal_datum_needs_y0_below(grid):
    with pytest.raises(HypothesisViolation):
        build_terminal_datum(grid, (0.3, 0.7), np.sin(math.pi * grid.x), np.zeros(grid.n))


# -- duality -------------------------------------------------------------------

def test_duality_zero_control(grid, mask):
    law = two_plus_sine()
    z = solve_forward(law, grid, 0.2 * np.sin(math.pi * grid.x), None, mask, dt=0.01, T=0.2)
    dg = duality_gap(law, grid, mask, z, ControlSchedule.zeros(z.times, grid), np.ones(grid.n))
    assert dg.gap == 0.0 and dg.lhs == 0.0


@pytest.mark.parametrize("law", [constant_law(1.0), two_plus_sine()], ids=["linear", "nonlinear"])
def test_duality_random_instances(grid, mask, law):
    rng = np.random.default_rng(11)
    for _ in range(5):
        z = solve_forward(law, grid, rng.uniform(-0.5, 0.5, grid.n), None, mask, dt=0.01, T=0.2)
        v = ControlSchedule(z.times, rng.uniform(-2, 2, (z.times.size, grid.n)), grid)
        dg = duality_gap(law, grid, mask, z, v, rng.standard_normal(grid.n))
        assert dg.gap <= 1e-10 * (1 + abs(dg.lhs))


# -- certificate and search ----------------------------------------------------

def _scenario(law, grid, mask):
    ys = solve_steady(law, grid, mask, 1.0)
    return manufacture_target(law, grid, mask, ys.y, 1.0, 0.01, 0.01)


def test_case1_certificate(grid, mask):
    law = constant_law(1.0)
    tgt = _scenario(law, grid, mask)
    y0 = tgt.ybar0 + 0.1 * np.exp(-((grid.x - 0.15) / 0.05) ** 2)
    cert = certify_mintime_lower(law, grid, mask, y0, tgt)
    assert cert.mode == "Case1" and cert.T0 > 0
    assert inner(y0 - tgt.ybar0, cert.test_function, grid) > 0
    assert all(r["certified"] for r in cert.rows if r["T"] <= cert.T0)


def test_certificate_rejects_target_start(grid, mask):
    law = constant_law(1.0)
    tgt = _scenario(law, grid, mask)
    with pytest.raises(HypothesisViolation):
        certify_mintime_lower(law, grid, mask, tgt.ybar0.copy(), tgt)


@pytest.mark.parametrize("law", [constant_law(1.0), two_plus_sine()], ids=["linear", "nonlinear"])
def test_case2_certificate(grid, mask, law):
    tgt = _scenario(law, grid, mask)
    y0 = tgt.ybar0 - 0.3 * grid.x * (1 - grid.x)
    cert = certify_mintime_lower(law, grid, mask, y0, tgt)
    assert cert.mode == "Case2" and cert.T0 > 0
    first = cert.rows[0]
    assert first["functional"] == pytest.approx(cert.datum.total, rel=0.05)
    assert cert.datum.total <= -cert.datum.theta / 3


def test_search_is_consistent_with_certificate(grid, mask):
    law = two_plus_sine()
    tgt = _scenario(law, grid, mask)
    y0 = tgt.ybar0 + 0.1 * np.exp(-((grid.x - 0.15) / 0.05) ** 2)
    cert = certify_mintime_lower(law, grid, mask, y0, tgt)
    table = search_constrained_time(law, grid, mask, y0, tgt, [cert.T0 / 2, cert.T0, 1.0], certificate=cert)
    for row in table.rows:
        if row["T"] <= cert.T0:
            assert row["verdict"] != "achieved-nonneg"
    assert table.rows[-1]["verdict"] == "achieved-nonneg"
    assert table.consistent
    lo, hi = table.bracket
    assert lo == cert.T0 and hi == 1.0


def test_search_from_target_start(grid, mask):
    law = two_plus_sine()
    tgt = _scenario(law, grid, mask)
    table = search_constrained_time(law, grid, mask, tgt.ybar0, tgt, [4.0])
    (row,) = table.rows
    assert row["verdict"] == "achieved-nonneg"
    assert row["min_control"] == pytest.approx(1.0, abs=1e-9)


# -- harness -------------------------------------------------------------------

def test_config_round_trip():
    text = ExperimentConfig(scenario="track", law="constant(1)", n=50).to_json()
    assert ExperimentConfig.from_json(text).to_json() == text


def test_config_rejects_unknown_key():
    with pytest.raises(ConfigError, match="frobnicate"):
        ExperimentConfig.from_json('{"frobnicate": 1}')


def test_config_reports_line():
    with pytest.raises(ConfigError, match=":3:"):
        ExperimentConfig.from_json('{\n "n": 10,\n}')


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(json.dumps({"scenario": "nope"}))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(json.dumps({"law": "cubic"}))


def test_validate_exits_zero(tmp_path, capsys):
    assert main(["validate", "--out", str(tmp_path), "--quiet"]) == 0
    rows = (tmp_path / "checks.csv").read_text().splitlines()
    assert all(r.split(",")[1] == "true" for r in rows[1:])


def test_staircase_zero_floor_exits_nonzero(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"v0": 0.0, "v1": 1.0}))
    assert main(["staircase", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) != 0
    assert "positivity floor" in (tmp_path / "o" / "summary.kv").read_text()


def test_track_decay_csv_slope(tmp_path):
    cfg = ExperimentConfig(scenario="track", law="constant(1)", dt=0.001, T_cap=2.0)
    b = run_experiment(cfg, out=tmp_path)
    assert b.ok
    rows = (tmp_path / "decay.csv").read_text().splitlines()[1:]
    t, e = np.array([[float(c) for c in r.split(",")] for r in rows]).T
    assert oracles.fitted_rate(t, e) == pytest.approx(math.pi**2, rel=0.05)


def test_empty_report(tmp_path):
    files = emit_report(ReportBundle(), tmp_path)
    manifest = (tmp_path / "manifest.txt").read_text().splitlines()
    assert [line.split()[1] for line in manifest] == ["summary.kv"]
    assert "status = pass" in (tmp_path / "summary.kv").read_text()
    assert len(files) == 2


def test_staircase_report_rows_and_determinism(tmp_path):
    cfg = ExperimentConfig(scenario="staircase", law="constant(1)", n=50)
    b1 = run_experiment(cfg, out=tmp_path / "a")
    run_experiment(cfg, out=tmp_path / "b")
    rows = (tmp_path / "a" / "staircase_steps.csv").read_text().splitlines()
    assert len(rows) - 1 == b1.summary["nbar"]
    assert (tmp_path / "a" / "manifest.txt").read_text() == (tmp_path / "b" / "manifest.txt").read_text()
