"""Configuration-driven scenario runner.

A run is described by one flat JSON document (:class:`ExperimentConfig`).
Each scenario returns a :class:`ReportBundle` whose ``checks`` decide the
exit status: 0 when every check passes, 1 otherwise, 2 for configuration
errors and 3 when a hypothesis of the construction fails.
"""
import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import laws as _laws
from .errors import ConfigError, HypothesisViolation, QuasiControlError
from .fields import ControlSchedule, Trajectory, time_ladder
from .grid import build_control_mask, build_grid, sup_norm
from .local import build_linearization, carleman_weights, empirical_observability, hum_null_control
from .mintime import (certify_mintime_lower, dirichlet_eigenfunction, duality_gap, search_constrained_time)
from .report import ReportBundle, emit_report
from .solvers import check_comparison, solve_forward
from .staircase import control_between_steady_states, verify_nonnegativity
from .steady import build_path, path_modulus, solve_steady
from .tracking import manufacture_target, stabilization_phase, track_trajectory

log = logging.getLogger(__name__)

SCENARIOS = ("steady", "path", "staircase", "track", "mintime", "observability", "validate")


@dataclass
class ExperimentConfig:
    """Flat experiment description; every key has a default."""

    scenario: str = "validate"
    law: str = "two-plus-sine"
    L: float = 1.0
    n: int = 100
    omega: List[float] = field(default_factory=lambda: [0.2, 0.8])
    omega1: List[float] = field(default_factory=lambda: [0.4, 0.6])
    omega0: List[float] = field(default_factory=lambda: [0.4, 0.6])
    dt: float = 0.01
    T: Optional[float] = None
    tau: float = 0.5
    T_cap: float = 16.0
    window: float = 1.0
    v0: float = 1.0
    v1: float = 3.0
    v_osc: float = 0.0
    m: int = 8
    y0_amplitude: float = 0.3
    mintime_case: int = 1
    T_max: float = 1.0
    m_steps: int = 24
    search_ladder: List[float] = field(default_factory=lambda: [0.25, 1.0, 2.0])
    decay_window: float = 1.0
    eps: float = 1e-8
    term_tol: float = 1e-6
    pos_tol: float = 1e-9
    s_values: List[float] = field(default_factory=lambda: [1.0, 2.0, 4.0])
    lam: float = 2.0
    n_samples: int = 50
    seed: int = 0
    out: str = "out"

    @classmethod
    def from_json(cls, text, source="<config>"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{source}: top level must be an object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigError(f"{source}: unknown key(s) {', '.join(unknown)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read(), str(path))

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), sort_keys=True, indent=2) + "\n"

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"key 'scenario': {self.scenario!r} is not one of {', '.join(SCENARIOS)}")
        for key in ("L", "dt", "tau", "T_cap", "window", "eps", "term_tol", "T_max", "lam"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"key {key!r} must be positive")
        for key in ("n", "m", "m_steps", "n_samples"):
            if int(getattr(self, key)) != getattr(self, key) or getattr(self, key) < 1:
                raise ConfigError(f"key {key!r} must be a positive integer")
        for key in ("omega", "omega1", "omega0"):
            if len(getattr(self, key)) != 2:
                raise ConfigError(f"key {key!r} must be a pair [a, b]")
        if self.mintime_case not in (1, 2):
            raise ConfigError("key 'mintime_case' must be 1 or 2")
        try:
            _laws.get_law(self.law)
        except QuasiControlError as exc:
            raise ConfigError(f"key 'law': {exc}") from exc


def _setup(cfg):
    law = _laws.get_law(cfg.law)
    grid = build_grid(cfg.L, cfg.n)
    mask = build_control_mask(grid, tuple(cfg.omega), tuple(cfg.omega1))
    return law, grid, mask


def _vbar_fn(cfg, grid):
    base = np.ones(grid.n)
    if cfg.v_osc == 0.0:
        return lambda t: cfg.v0 * base
    return lambda t: (cfg.v0 + cfg.v_osc * math.sin(2.0 * math.pi * t)) * base


# ---------------------------------------------------------------------------
# scenarios

def run_steady(cfg, b):
    law, grid, mask = _setup(cfg)
    st = solve_steady(law, grid, mask, cfg.v0)
    b.tables["steady"] = [{"x": float(x), "y": float(y), "v_rho": float(v * r)}
                          for x, y, v, r in zip(grid.x, st.y, st.v, mask.rho)]
    b.summary.update(residual=st.residual, y_max=float(st.y.max()))
    b.check("steady residual <= 1e-8", st.residual <= 1e-8, f"{st.residual:.3e}")


def run_path(cfg, b):
    law, grid, mask = _setup(cfg)
    path = build_path(law, grid, mask, cfg.v0, cfg.v1, cfg.m)
    mod = path_modulus(path, grid, mask)
    b.tables["path_modulus"] = list(mod.rows())
    b.summary.update(eta=mod.eta, eta_omega=mod.eta_omega, max_increment=mod.max_increment)
    worst = max(st.residual for st in path.states)
    b.check("steady residuals along path <= 1e-8", worst <= 1e-8, f"{worst:.3e}")


def run_staircase(cfg, b):
    law, grid, mask = _setup(cfg)
    res = control_between_steady_states(law, grid, mask, cfg.v0, cfg.v1, cfg.m, cfg.window, cfg.dt,
                                        cfg.eps, cfg.term_tol)
    nn = verify_nonnegativity(res)
    b.tables["staircase_steps"] = res.log
    b.fields["control"] = res.control
    b.fields["trajectory"] = res.trajectory
    b.summary.update(nbar=res.plan.nbar, eta=res.plan.eta, eta_omega=res.plan.eta_omega, T=res.T,
                     terminal_error=res.terminal_error, min_control=nn.min_all,
                     min_control_omega=nn.min_omega, gain=res.plan.gain, threshold=res.plan.threshold,
                     resolve_drift=res.notes["resolve_drift"])
    b.check("terminal L2 error <= term_tol", res.terminal_error <= cfg.term_tol, f"{res.terminal_error:.3e}")
    b.check("min control >= -pos_tol", nn.min_all >= -cfg.pos_tol, f"{nn.min_all:.6g}")
    worst = max(r["deviation"] for r in res.log)
    b.check("per-step deviation <= eta", worst <= res.plan.eta, f"{worst:.3e} vs {res.plan.eta:.3e}")


def run_track(cfg, b):
    law, grid, mask = _setup(cfg)
    ys = solve_steady(law, grid, mask, cfg.v0)
    horizon = max(cfg.T_cap, cfg.decay_window)
    target = manufacture_target(law, grid, mask, ys.y, _vbar_fn(cfg, grid), cfg.dt, horizon)
    y0 = ys.y + cfg.y0_amplitude * np.sin(math.pi * grid.x / grid.L)
    stab = stabilization_phase(law, grid, mask, y0, target, cfg.decay_window)
    b.tables["decay"] = list(stab.rows())
    cond = stab.condition
    b.summary.update({f"condition_{k}": v for k, v in cond.to_kv().items() if k != "note"})
    b.summary.update(decay_rate=stab.rate, eta=target.eta, eta_omega=target.eta_omega)
    b.check("L2 deviation decays under vbar", stab.decayed)
    if cond.passes:
        b.check("fitted rate >= 0.9 a0/(2C^2)", stab.rate >= 0.9 * cond.rate_bound,
                f"{stab.rate:.4g} vs {cond.rate_bound:.4g}")
    res = track_trajectory(law, grid, mask, y0, target, T=cfg.T, tau=cfg.tau, eps=cfg.eps,
                           term_tol=cfg.term_tol, T_cap=cfg.T_cap)
    b.tables["attempts"] = res.log
    b.fields["control"] = res.control
    b.fields["trajectory"] = res.trajectory
    b.summary.update(T=res.T, terminal_error=res.terminal_error, min_control=res.min_control)
    b.check("terminal L2 error <= term_tol", res.terminal_error <= cfg.term_tol, f"{res.terminal_error:.3e}")
    b.check("min control >= -pos_tol", res.min_control >= -cfg.pos_tol, f"{res.min_control:.6g}")


def mintime_initial_state(cfg, grid, ybar0):
    """Standard initial data: a bump outside omega (case 1) or a dip below ybar0 (case 2)."""
    x = grid.x
    if cfg.mintime_case == 1:
        centre = 0.5 * cfg.omega[0]
        width = 0.25 * cfg.omega[0]
        return ybar0 + 0.1 * np.exp(-((x - centre) / width) ** 2)
    return ybar0 - cfg.y0_amplitude * x * (grid.L - x) / grid.L**2


def run_mintime(cfg, b):
    law, grid, mask = _setup(cfg)
    ys = solve_steady(law, grid, mask, cfg.v0)
    target = manufacture_target(law, grid, mask, ys.y, _vbar_fn(cfg, grid), cfg.dt, cfg.dt)
    y0 = mintime_initial_state(cfg, grid, ys.y)
    cert = certify_mintime_lower(law, grid, mask, y0, target, cfg.T_max, cfg.m_steps, tol=cfg.term_tol)
    ladder = sorted(set([cert.T0] * (cert.T0 > 0) + [float(t) for t in cfg.search_ladder]))
    table = search_constrained_time(law, grid, mask, y0, target, ladder, cfg.eps, cfg.pos_tol, cfg.tau,
                                    cfg.term_tol, certificate=cert)
    b.tables["certificate"] = cert.rows
    b.tables["achievability"] = [{k: v for k, v in r.items() if k != "reason"} for r in table.rows]
    lo, hi = table.bracket
    b.summary.update(mode=cert.mode, T0=cert.T0, smallest_achieved_nonneg=hi)
    if cert.datum is not None:
        b.summary.update(theta=cert.datum.theta, C_theta=cert.datum.C_theta, delta=cert.datum.delta,
                         theta_tilde=cert.datum.theta_tilde)
    b.check("certified T0 > 0", cert.T0 > 0.0, f"{cert.T0:.3e}")
    b.check("bracket T0 <= smallest achieved-nonneg", lo <= hi, f"[{lo:.3e}, {hi:.3e}]")
    b.check("comparison holds on nonnegative schedules", all(bool(c) for c in table.comparisons))
    below = [r for r in table.rows if r["T"] <= cert.T0 and r["verdict"] == "achieved-nonneg"]
    b.check("no achieved-nonneg at or below T0", not below)


def run_observability(cfg, b):
    _, grid, mask = _setup(cfg)
    law = _laws.constant_law(1.0)
    T = cfg.T if cfg.T is not None else 1.0
    times = time_ladder(0.0, T, cfg.dt)
    ybar = Trajectory(times, np.zeros((times.size, grid.n)), grid)
    lin = build_linearization(law, ybar, np.zeros_like(ybar.values))
    w = carleman_weights(grid, tuple(cfg.omega0), cfg.lam, T, cfg.dt)
    reports = [empirical_observability(lin, w, mask, s, cfg.n_samples, cfg.seed) for s in cfg.s_values]
    rows = []
    for rep in reports:
        for r in rep.rows():
            rows.append({"s": rep.s, **r})
    b.tables["observability"] = rows
    L10 = np.array([rep.log10_ratios for rep in reports])
    b.summary.update(lam=cfg.lam, B=reports[0].B,
                     **{f"max_log10_ratio_s{rep.s:g}": rep.max_log10_ratio for rep in reports})
    b.check("log10 ratios finite", bool(np.all(np.isfinite(L10))))
    if len(reports) > 1:
        b.check("ratio increasing in s per sample", bool(np.all(np.diff(L10, axis=0) > 0)))


def run_validate(cfg, b):
    """Quick invariant suite on small problems."""
    rng = np.random.default_rng(cfg.seed)
    law, grid, mask = _setup(cfg)
    r = np.linspace(-3.0, 3.0, 201)
    rt = sup_norm(_laws.kirchhoff_inverse(law, _laws.kirchhoff(law, r)) - r)
    b.check("Kirchhoff round trip <= 1e-12", rt <= 1e-12, f"{rt:.2e}")
    st = solve_steady(law, grid, mask, cfg.v0)
    b.check("steady residual <= 1e-8", st.residual <= 1e-8, f"{st.residual:.2e}")
    ep = dirichlet_eigenfunction(grid)
    gap = abs(ep.lam_inverse_power - ep.lam_discrete) / ep.lam_discrete
    b.check("inverse power matches discrete eigenvalue", gap <= 1e-10, f"{gap:.2e}")
    b.check("discrete eigenvalue within O(h^2)", abs(ep.lam_discrete - ep.lam) <= ep.lam**2 * grid.h**2 / 6)
    worst = 0.0
    for _ in range(5):
        y0 = 0.2 * rng.standard_normal(grid.n)
        v2 = rng.uniform(-1.0, 1.0, grid.n)
        v1 = v2 + rng.uniform(0.0, 1.0, grid.n)
        hi = solve_forward(law, grid, y0, v1, mask, dt=cfg.dt, T=0.1)
        lo = solve_forward(law, grid, y0, v2, mask, dt=cfg.dt, T=0.1)
        worst = max(worst, check_comparison(hi, lo).worst_violation)
    b.check("comparison under ordered controls", worst <= 1e-9, f"{worst:.2e}")
    z = solve_forward(law, grid, st.y, None, mask, dt=cfg.dt, T=0.1)
    v = ControlSchedule(z.times.copy(), rng.uniform(0.0, 2.0, (z.times.size, grid.n)), grid)
    dg = duality_gap(law, grid, mask, z, v, rng.standard_normal(grid.n))
    b.check("duality gap (relative) <= 1e-8", dg.relative <= 1e-8, f"{dg.relative:.2e}")
    times = time_ladder(0.0, 0.5, cfg.dt)
    ybar = Trajectory(times, np.tile(st.y, (times.size, 1)), grid)
    lin = build_linearization(law, ybar, np.zeros_like(ybar.values))
    z0 = 0.01 * np.sin(math.pi * grid.x / grid.L)
    hum = hum_null_control(lin, mask, z0, eps=cfg.eps)
    bound = math.sqrt(cfg.eps) * hum.initial_norm / math.sqrt(2.0) * 10.0
    b.check("penalized HUM terminal norm small", hum.terminal_norm <= max(bound, 1e-6), f"{hum.terminal_norm:.2e}")
    b.summary.update(checks=len(b.checks))


RUNNERS = {
    "steady": run_steady, "path": run_path, "staircase": run_staircase, "track": run_track,
    "mintime": run_mintime, "observability": run_observability, "validate": run_validate,
}


def run_experiment(cfg, out=None, write=True):
    """Run ``cfg.scenario`` and (optionally) write the bundle under ``out``.

    Hypothesis failures are recorded as a failing check with the message
    rather than raised, so the caller always gets a bundle.
    """
    b = ReportBundle()
    b.texts["config.json"] = cfg.to_json()
    b.summary.update(scenario=cfg.scenario, law=cfg.law, n=cfg.n, L=cfg.L)
    try:
        RUNNERS[cfg.scenario](cfg, b)
    except HypothesisViolation as exc:
        b.summary["hypothesis_violation"] = str(exc)
        b.check("hypotheses of the construction", False, str(exc))
    except QuasiControlError as exc:
        b.summary["error"] = f"{type(exc).__name__}: {exc}"
        b.check("scenario completed", False, str(exc))
    if write:
        emit_report(b, out or os.environ.get("QUASICONTROL_OUT", cfg.out))
    return b


def build_parser():
    p = argparse.ArgumentParser(prog="quasicontrol", description="Run a controllability scenario.")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--config", help="JSON config file; keys override defaults")
    p.add_argument("--out", help="output directory (default: $QUASICONTROL_OUT, else config 'out')")
    p.add_argument("--seed", type=int, help="seed for randomized probes")
    p.add_argument("--grid-n", type=int, dest="grid_n", help="number of interior nodes")
    p.add_argument("--quiet", action="store_true", help="print nothing but errors")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        cfg.scenario = args.scenario
        if args.seed is not None:
            cfg.seed = args.seed
        if args.grid_n is not None:
            cfg.n = args.grid_n
        cfg.validate()
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = args.out or os.environ.get("QUASICONTROL_OUT") or cfg.out
    t0 = time.perf_counter()
    b = run_experiment(cfg, out=out)
    elapsed = time.perf_counter() - t0
    if not args.quiet:
        for c in b.checks:
            print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['check']}  {c['detail']}")
        print(f"{cfg.scenario}: {'ok' if b.ok else 'FAILED'} in {elapsed:.1f}s -> {out}")
    if "hypothesis_violation" in b.summary:
        if not args.quiet:
            print(f"hypothesis violation: {b.summary['hypothesis_violation']}", file=sys.stderr)
        return 3
    return 0 if b.ok else 1
