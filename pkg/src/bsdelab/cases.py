"""Built-in experiments.

Each catalog entry carries a default configuration (the bundled YAML
files mirror these), the schemes it accepts and a runner returning a
:class:`~bsdelab.report.CaseResult`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from . import bridge as br
from .core import DiffusionSpec, DriverSpec, MeasureData, TimeGrid, WeightSpec
from .engine import LatticeEngine, RegressionEngine
from .forward import build_lattice, simulate_paths
from .gbsde import check_comparison, maximal_solution, minimal_solution, solve_gbsde
from .pde import (SpaceTimeGrid, check_pde_lewy_stampacchia, recover_reaction_density, self_convergence,
                  solve_obstacle_homographic, solve_obstacle_projected, solve_parabolic_measure, weighted_l2)
from .rbsde import (check_lewy_stampacchia, check_skorokhod, control_density, decompose_obstacle,
                    expected_control, homographic_sequence, penalized_iterate, reachable_sup, solve_rbsde_homographic,
                    solve_rbsde_penalization, solve_rbsde_reflected)
from .report import CaseResult, Plot, Table


@dataclass
class CaseEntry:
    name: str
    description: str
    claims: str
    schemes: tuple
    defaults: dict
    runner: Callable
    lattice_schemes: tuple = ()
    validator: Callable = None

    def validate(self, cfg) -> None:
        if self.validator is not None:
            self.validator(cfg)

    def run(self, cfg) -> CaseResult:
        return self.runner(cfg)


# --------------------------------------------------------------------------
# helpers


def _pde_grid(cfg, n_steps=None) -> SpaceTimeGrid:
    g = cfg.grid
    lo, hi = cfg.box()
    N = int(n_steps or g["n_steps"])
    d = cfg.spec.dim
    return SpaceTimeGrid.uniform(float(g.get("t0", 0.0)), float(g["T"]), N, [lo] * d, [hi] * d,
                                 [cfg.n_space()] * d)


def _lattice(cfg, n_steps=None):
    lo, hi = cfg.box()
    tg = cfg.time_grid() if n_steps is None else TimeGrid(cfg.time_grid().t0, cfg.time_grid().T, int(n_steps))
    return build_lattice(cfg.spec, tg, lo, hi, cfg.n_space())


def _probes(cfg) -> list:
    out = []
    for s, x in cfg.raw.get("probes") or []:
        out.append((float(s), np.atleast_1d(np.asarray(x, dtype=float))))
    return out


def _bridge_table(rep: br.BridgeReport) -> Table:
    tab = Table(["s", "x", "pde", "bsde", "stderr", "gap", "allowance", "z_gap", "pass"])
    for r in rep.rows():
        tab.add(r["s"], r["x"], r["pde"], r["bsde"], r["stderr"], r["gap"], r["allowance"], r["z_gap"], r["pass"])
    return tab


def _u_table(sol, every: int = 1) -> Table:
    grid = sol.grid
    d = grid.dim
    tab = Table(["k", "t"] + [f"x{i + 1}" for i in range(d)] + ["u"])
    nodes = grid.nodes
    N = grid.time.n_steps
    ks = sorted(set(list(range(0, N + 1, max(1, every))) + [N]))
    for k in ks:
        t = float(grid.time.nodes[k])
        for i in range(nodes.shape[0]):
            tab.add(k, t, *nodes[i], sol.u[k, i])
    return tab


def gaussian_terminal_value(spec: DiffusionSpec, width: float, height: float, s: float, T: float, x) -> np.ndarray:
    """Heat-semigroup value of ``height exp(-|x|^2 / (2 width^2))`` for constant coefficients."""
    x = np.asarray(x, dtype=float).reshape(-1, spec.dim)
    tau = T - s
    W = width ** 2 * np.eye(spec.dim)
    C = W + spec.const_a * tau
    m = x + spec.const_b * tau
    Ci = np.linalg.inv(C)
    quad = np.einsum("ni,ij,nj->n", m, Ci, m)
    return height * math.sqrt(np.linalg.det(W) / np.linalg.det(C)) * np.exp(-0.5 * quad)


def fit_inverse_n(ns, gaps) -> tuple:
    """Least-squares ``gap = C / n``; returns ``(C, R^2)``.

    A sequence of exact zeros is a perfect fit (``R^2 = 1``).
    """
    n = np.asarray(ns, dtype=float)
    g = np.asarray(gaps, dtype=float)
    u = 1.0 / n
    C = float(u @ g / (u @ u))
    res = g - C * u
    ss_res = float(res @ res)
    ss_tot = float(((g - g.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return C, 1.0 if ss_res <= 1e-300 else 0.0
    return C, 1.0 - ss_res / ss_tot


def smooth_test_functions(center: float = 0.0) -> list:
    """Three fixed smooth test functions of ``(t, x)``."""
    return [
        lambda t, x: np.ones(np.shape(x)[0]),
        lambda t, x: np.exp(-(np.asarray(x)[:, 0] - center) ** 2),
        lambda t, x: (1.0 + t) * np.cos(np.asarray(x)[:, 0] - center),
    ]


def _pde_pairing(mu: np.ndarray, grid: SpaceTimeGrid, xi) -> float:
    """``sum_k dt sum_nodes xi mu dx`` for a ``(N, nodes)`` density."""
    tot = 0.0
    for k in range(mu.shape[0]):
        t = float(grid.time.nodes[k])
        tot += float(np.sum(xi(t, grid.nodes) * mu[k])) * grid.time.dt[k] * grid.cell_volume
    return tot


# --------------------------------------------------------------------------
# runners


def run_heat_baseline(cfg) -> CaseResult:
    res = CaseResult(cfg.case)
    grid = _pde_grid(cfg)
    spec, drv = cfg.spec, cfg.driver
    sol = solve_parabolic_measure(grid, spec, drv, cfg.measure)
    res.tables["u_grid"] = _u_table(sol, every=max(1, grid.time.n_steps // 10))
    term = cfg.get("driver", "terminal", default={})
    closed = (term.get("family") == "gaussian" and spec.is_constant
              and cfg.get("driver", "f", "family") == "zero" and cfg.measure is None)
    if closed:
        w, hgt = float(term.get("width", 1.0)), float(term.get("height", 1.0))
        lo, hi = np.array(grid.lo, dtype=float), np.array(grid.hi, dtype=float)
        inner = np.all(np.abs(grid.nodes - 0.5 * (lo + hi)) <= 0.25 * (hi - lo) + 1e-12, axis=1)
        ex = gaussian_terminal_value(spec, w, hgt, grid.time.t0, grid.time.T, grid.nodes)
        err = float(np.max(np.abs(sol.u[0] - ex)[inner]))
        res.metrics["closed_form_max_error"] = err
        res.checks["closed_form"] = err <= cfg.check("closed_form_tol")
        if grid.dim == 1:
            res.plots["u0"] = Plot("u(t0, x)", {"pde": (grid.nodes[:, 0], sol.u[0]), "closed form": (grid.nodes[:, 0], ex)},
                                   "x", "u")
    inputs = br.BridgeInputs(spec, drv, cfg.measure)
    mode = "lattice" if cfg.scheme == "lattice" else "monte-carlo"
    rep = br.compare_representation(sol, inputs, _probes(cfg), cfg.n_paths, cfg.seed, mode,
                                    abs_allowance=cfg.check("bridge_abs"))
    res.tables["bridge"] = _bridge_table(rep)
    res.metrics["bridge_max_gap"] = max(abs(a - b) for a, b in zip(rep.pde_value, rep.mc_value))
    res.checks["bridge"] = rep.passed
    if grid.dim == 1:
        zrep = _gradient_identity(sol, inputs, cfg)
        res.metrics["gradient_rel_gap"] = zrep
        res.checks["gradient_identity"] = zrep <= cfg.check("gradient_rel")
    return res


def _gradient_identity(sol, inputs, cfg) -> float:
    """Worst lattice ``||Z - sigma^T grad u|| / ||Z||`` over the probes (lattice on the PDE box)."""
    rep = br.compare_representation(sol, inputs, _probes(cfg)[:2], mode="lattice", abs_allowance=np.inf)
    return rep.max_z_gap


def run_discounting(cfg) -> CaseResult:
    res = CaseResult(cfg.case)
    spec, drv = cfg.spec, cfg.driver
    r = float(cfg.get("driver", "f", "r", default=1.0))
    c = float(cfg.get("driver", "terminal", "c", default=1.0))
    tg = cfg.time_grid()
    exact = lambda s: c * math.exp(-r * (tg.T - s))
    x0 = np.zeros(1)
    tab = Table(["method", "n_steps", "Y0", "stderr", "exact", "error"])

    lat = _lattice(cfg)
    lsol = solve_gbsde(LatticeEngine(lat), drv)
    yl = lsol.value(x0)
    tab.add("lattice", tg.n_steps, yl, 0.0, exact(tg.t0), abs(yl - exact(tg.t0)))
    res.metrics["lattice_error"] = abs(yl - exact(tg.t0))
    res.checks["lattice"] = res.metrics["lattice_error"] <= cfg.check("lattice_tol")

    pde = solve_parabolic_measure(_pde_grid(cfg), spec, drv)
    yp = float(pde.value(x0)[0])
    tab.add("pde", tg.n_steps, yp, 0.0, exact(tg.t0), abs(yp - exact(tg.t0)))
    res.metrics["pde_error"] = abs(yp - exact(tg.t0))

    nm = int(cfg.option("lsmc_n_steps", 100))
    mg = TimeGrid(tg.t0, tg.T, nm)
    paths = simulate_paths(spec, mg, (tg.t0, x0), int(cfg.option("lsmc_paths", 20000)), cfg.seed)
    msol = solve_gbsde(RegressionEngine(paths), drv)
    ym, se = msol.value(), msol.report.y0_stderr
    tab.add("lsmc", nm, ym, se, exact(tg.t0), abs(ym - exact(tg.t0)))
    res.metrics["lsmc_error"] = abs(ym - exact(tg.t0))
    res.metrics["lsmc_stderr"] = se
    res.checks["lsmc"] = abs(ym - exact(tg.t0)) <= 3 * se + cfg.check("lsmc_rel") * exact(tg.t0)
    res.tables["values"] = tab

    bp = solve_parabolic_measure(_pde_grid(cfg, nm), spec, drv)
    mode = "lattice" if cfg.scheme == "lattice" else "monte-carlo"
    rep = br.compare_representation(bp, br.BridgeInputs(spec, drv), _probes(cfg), cfg.n_paths, cfg.seed, mode,
                                    abs_allowance=cfg.check("bridge_abs"))
    res.tables["bridge"] = _bridge_table(rep)
    res.checks["bridge"] = rep.passed
    ex = np.array([exact(s) for s, _ in rep.points])
    res.metrics["bridge_vs_exact_max"] = float(np.max(np.abs(np.array(rep.pde_value) - ex)))
    return res


def run_clock_measure(cfg) -> CaseResult:
    res = CaseResult(cfg.case)
    spec, drv, mu = cfg.spec, cfg.driver, cfg.measure
    tg = cfg.time_grid()
    lat = _lattice(cfg)
    sol = solve_gbsde(LatticeEngine(lat, mu), drv)
    exact = (tg.T - tg.nodes)[None, :]
    err = float(np.max(np.abs(sol.Y - exact)))
    res.metrics["lattice_max_error"] = err
    res.checks["lattice_clock"] = err <= cfg.check("dt_factor") * float(tg.dt.max())
    pde = solve_parabolic_measure(_pde_grid(cfg), spec, drv, mu)
    perr = float(np.max(np.abs(pde.u - exact.T)))
    res.metrics["pde_max_error"] = perr
    res.checks["pde_clock"] = perr <= cfg.check("dt_factor") * float(tg.dt.max())
    tab = Table(["s", "x", "lhs", "rhs", "gap", "stderr", "exact"])
    worst = 0.0
    for s, x in _probes(cfg):
        corr = br.verify_measure_correspondence(spec, mu, lambda t, y: np.ones(np.shape(y)[0]), (s, x), tg.T,
                                                n_paths=int(cfg.option("corr_paths", 2000)), seed=cfg.seed,
                                                n_steps=tg.n_steps)
        tab.add(s, float(x[0]), corr.lhs, corr.rhs, corr.gap, corr.stderr, tg.T - s)
        worst = max(worst, abs(corr.lhs - (tg.T - s)), abs(corr.rhs - (tg.T - s)))
    res.tables["correspondence"] = tab
    res.metrics["clock_max_gap"] = worst
    res.checks["clock_correspondence"] = worst <= cfg.check("clock_tol")
    return res


def run_gaussian_measure(cfg) -> CaseResult:
    res = CaseResult(cfg.case)
    spec, drv, mu = cfg.spec, cfg.driver, cfg.measure
    tg = cfg.time_grid()
    omega = float(cfg.option("xi_omega", 1.0))
    xi = lambda t, y: np.cos(omega * np.asarray(y).reshape(np.shape(y)[0], -1)[:, 0])
    tab = Table(["s", "x", "lhs", "rhs", "gap", "stderr", "gap_in_se"])
    ok = True
    for j, (s, x) in enumerate(_probes(cfg)):
        corr = br.verify_measure_correspondence(spec, mu, xi, (s, x), tg.T, n_paths=cfg.n_paths,
                                                seed=cfg.seed + j, n_steps=int(cfg.option("corr_n_steps", 1000)))
        tab.add(s, float(x[0]), corr.lhs, corr.rhs, corr.gap, corr.stderr, corr.within)
        ok = ok and corr.gap <= 3 * corr.stderr
    res.tables["correspondence"] = tab
    res.checks["correspondence"] = ok
    # u solves du/dt + Lu + g q = 0; compare with the backward solution on the lattice
    pde = solve_parabolic_measure(_pde_grid(cfg), spec, drv, mu)
    rep = br.compare_representation(pde, br.BridgeInputs(spec, drv, mu), _probes(cfg), cfg.n_paths, cfg.seed,
                                    "lattice", abs_allowance=cfg.check("bridge_abs"))
    res.tables["bridge"] = _bridge_table(rep)
    res.checks["bridge"] = rep.passed
    return res


def random_ordered_pair(rng: np.random.Generator, equal_prob: float = 0.2) -> tuple:
    """Two Lipschitz drivers with ``f1 <= f2``, ``g1 <= g2``, ``phi1 <= phi2``.

    ``f`` is affine in ``z`` plus a ``|z|`` term, with ``z``-constants at most
    one; each gap is switched off with probability ``equal_prob``.
    """
    a0, a1 = rng.uniform(-1, 1, 2)
    om = rng.uniform(0.5, 2.0)
    r = rng.uniform(-1, 1)
    kz, ka = rng.uniform(-0.5, 0.5, 2)
    g0, gr = rng.uniform(-1, 1), rng.uniform(0, 0.5)
    b0, b1 = rng.uniform(-1, 1, 2)
    df0, df1, dg, dp = rng.uniform(0, 0.5, 4) * (rng.uniform(size=4) > equal_prob)

    def f_base(t, x, y, z):
        zz = np.asarray(z).reshape(y.shape[0], -1)[:, 0]
        return a0 + a1 * np.cos(om * x[:, 0]) - r * y + kz * zz + ka * np.abs(zz)

    gam = lambda t, x: np.full(x.shape[0], 2.0)
    K = max(2.0, abs(r), abs(kz) + abs(ka))
    f1 = f_base
    f2 = lambda t, x, y, z: f_base(t, x, y, z) + df0 + df1 * np.sin(x[:, 0]) ** 2
    g1 = lambda t, x, y: g0 - gr * np.clip(y, -1, 1)
    g2 = lambda t, x, y: g0 + dg - gr * np.clip(y, -1, 1)
    p1 = lambda x: b0 + b1 * np.cos(x[:, 0])
    p2 = lambda x: b0 + dp + b1 * np.cos(x[:, 0])
    L = abs(r) + abs(kz) + abs(ka) + gr
    d1 = DriverSpec(f1, g1, p1, gam, K, abs(g0) + gr + 1.0, L, "pair-low")
    d2 = DriverSpec(f2, g2, p2, gam, K + 1.0, abs(g0) + gr + 1.0, L, "pair-high")
    return d1, d2


def run_comparison_suite(cfg) -> CaseResult:
    res = CaseResult(cfg.case)
    rng = np.random.default_rng(cfg.seed)
    lat = _lattice(cfg)
    eng = LatticeEngine(lat, cfg.measure)
    n_trials = int(cfg.option("n_trials", 50))
    tab = Table(["trial", "max_violation", "state", "node", "hypotheses_ok", "pass"])
    worst = 0.0
    all_ok = True
    for i in range(n_trials):
        d1, d2 = random_ordered_pair(rng)
        s1 = solve_gbsde(eng, d1)
        s2 = solve_gbsde(eng, d2)
        rep = check_comparison(s1, s2, d1, d2, tol=cfg.check("violation_tol"))
        tab.add(i, rep.max_violation, rep.location[0], rep.location[1], bool(rep.hypotheses_ok), rep.ok)
        worst = max(worst, rep.max_violation)
        all_ok = all_ok and rep.ok and bool(rep.hypotheses_ok)
    res.tables["comparison"] = tab
    res.metrics["max_violation"] = worst
    res.checks["comparison"] = all_ok
    return res


def run_min_max(cfg) -> CaseResult:
    res = CaseResult(cfg.case)
    lat = _lattice(cfg)
    sched = cfg.n_list or [1, 2, 4, 8, 16, 32, 64, 128]
    tg = cfg.time_grid()
    mx = maximal_solution(lat, cfg.driver, cfg.measure, n_schedule=sched, stop_tol=0.0)
    mn = minimal_solution(lat, cfg.driver, cfg.measure, n_schedule=sched, stop_tol=0.0)
    x0 = np.zeros(1)
    ode = (tg.T - tg.t0) ** 2 / 4.0
    tab = Table(["n", "maximal_Y0", "minimal_Y0"])
    for (n, a, _), (_, b, _) in zip(mx.report.history, mn.report.history):
        tab.add(n, a, b)
    res.tables["iterates"] = tab
    ymax, ymin = mx.value(x0), mn.value(x0)
    res.metrics.update(maximal_Y0=ymax, minimal_Y0=ymin, ode_value=ode,
                       maximal_rel_error=abs(ymax - ode) / ode)
    res.checks["maximal_vs_ode"] = abs(ymax - ode) <= cfg.check("max_rel") * ode
    res.checks["minimal_zero"] = abs(ymin) <= cfg.check("min_abs")
    res.checks["ordering"] = bool(np.all(mx.Y >= mn.Y - 1e-12))
    res.plots["iterates"] = Plot("Y0 of the regularised iterates", {
        "maximal": (tab.column("n"), tab.column("maximal_Y0")),
        "minimal": (tab.column("n"), tab.column("minimal_Y0"))}, "n", "Y0", logx=True)
    return res


def _homographic_barrier_ode(c: float, eps: float, n: float, T: float, ts: np.ndarray) -> np.ndarray:
    """``w = Y^n - S`` for ``S = c(T - t)``, ``f = 0``: ``w' = c n w / (1 + n w)``, ``w(T) = eps``."""
    if eps == 0.0:
        return np.zeros_like(ts)
    sol = integrate.solve_ivp(lambda t, w: c * n * w / (1 + n * w), (T, float(ts.min())), [eps],
                              dense_output=True, rtol=1e-10, atol=1e-14)
    return sol.sol(ts)[0]


def run_deterministic_barrier(cfg) -> CaseResult:
    res = CaseResult(cfg.case)
    spec, drv = cfg.spec, cfg.driver
    tg = cfg.time_grid()
    ob = decompose_obstacle(cfg.obstacle, drv, spec)
    eng = LatticeEngine(_lattice(cfg))
    ns = cfg.n_list
    ref = solve_rbsde_reflected(eng, drv, ob)
    s0 = eng.start_index(np.zeros(1))
    KT_ref = float(ref.K[s0, -1])
    c = float(cfg.get("obstacle", "c", default=1.0))
    eps = float(cfg.get("driver", "terminal", "c", default=0.0))
    tab = Table(["n", "sup_gap_Y", "Y0", "K_T", "K_T_gap", "ode_gap", "min_Y_minus_S"])
    gaps, kgaps = [], []
    prev = None
    mono = True
    above = True
    for n in ns:
        if cfg.scheme == "penalization":
            it = penalized_iterate(eng, drv, ob, n)
        else:
            it = solve_rbsde_homographic(eng, drv, ob, n)
        gap = float(np.max(np.abs(it.Y - ref.Y)))
        kT = float(it.K[s0, -1])
        w = _homographic_barrier_ode(c, eps, n, tg.T, tg.nodes)
        ode_gap = float(np.max(np.abs(it.Y[s0] - (c * (tg.T - tg.nodes) + w)))) if cfg.scheme == "homographic" else math.nan
        dom = float(np.min(it.Y - it.S))
        if prev is not None:
            step = it.Y - prev.Y
            mono = mono and (float(step.max()) <= 1e-12 if cfg.scheme == "homographic" else float(step.min()) >= -1e-12)
        if cfg.scheme == "homographic":
            above = above and dom >= -1e-12
        tab.add(n, gap, float(it.Y[s0, 0]), kT, abs(kT - KT_ref), ode_gap, dom)
        gaps.append(gap)
        kgaps.append(abs(kT - KT_ref))
        prev = it
    res.tables["convergence"] = tab
    C, r2 = fit_inverse_n(ns, gaps)
    CK, _ = fit_inverse_n(ns, kgaps)
    res.metrics.update(fit_C=C, fit_R2=r2, K_fit_C=CK, K_T_reference=KT_ref, expected_K_T=c * (tg.T - tg.t0))
    res.checks["monotone"] = mono
    if cfg.scheme == "homographic":
        res.checks["above_barrier"] = above
    res.checks["rate_fit"] = r2 >= cfg.check("r2_min")
    dt = float(tg.dt.max())
    res.checks["control_gap"] = all(kg <= abs(CK) / n + cfg.check("k_dt_factor") * dt + 1e-12
                                    for n, kg in zip(ns, kgaps))
    res.plots["gaps"] = Plot("sup |Y^n - Y|", {"gap": (ns, [max(g, 1e-16) for g in gaps])}, "n", "gap",
                             logx=True, logy=True)
    return res


def _put_setup(cfg):
    spec, drv = cfg.spec, cfg.driver
    ob = decompose_obstacle(cfg.obstacle, drv, spec)
    lat = _lattice(cfg)
    return spec, drv, ob, lat, LatticeEngine(lat)


def run_american_put(cfg) -> CaseResult:
    res = CaseResult(cfg.case)
    spec, drv, ob, lat, eng = _put_setup(cfg)
    x0 = np.array([float(cfg.option("x0", 1.0))])
    ns = cfg.n_list
    tab = Table(["method", "value"])

    ref = solve_rbsde_penalization(eng, drv, ob, n_schedule=ns, keep_iterates=False)
    tab.add("lattice_reflected", ref.value(x0))
    pen = Table(["n", "Y0", "sup_gap", "skorokhod_ratio"])
    ratios = {}
    for n, y0, gap in ref.report.history:
        it = penalized_iterate(eng, drv, ob, n)
        sk = check_skorokhod(it, start=x0)
        scale = reachable_sup(it, x0) * expected_control(it, x0)
        ratios[n] = sk / scale if scale > 0 else 0.0
        pen.add(n, it.value(x0), gap, ratios[n])
    res.tables["penalization"] = pen
    n_sk = int(cfg.option("skorokhod_n", ns[-1]))
    res.metrics["skorokhod_ratio"] = ratios.get(n_sk, math.nan)
    res.checks["skorokhod"] = ratios.get(n_sk, math.inf) <= cfg.check("skorokhod_ratio")

    ls = check_lewy_stampacchia(ref)
    cd = control_density(ref)
    res.metrics.update(ls_violations_stochastic=ls.n_violations, alpha_hat_min=cd.min_alpha, alpha_hat_max=cd.max_alpha)
    res.checks["lewy_stampacchia_stochastic"] = ls.ok
    res.checks["control_density_range"] = cd.in_range

    pgrid = _pde_grid(cfg)
    proj = solve_obstacle_projected(pgrid, spec, drv, cfg.obstacle)
    tab.add("pde_projected", float(proj.value(x0)[0]))
    pls = check_pde_lewy_stampacchia(proj)
    rr = recover_reaction_density(proj)
    res.metrics.update(ls_violations_pde=pls.n_violations, reaction_alpha_min=rr.min_alpha,
                       reaction_alpha_max=rr.max_alpha)
    res.checks["lewy_stampacchia_pde"] = pls.ok
    res.checks["reaction_range"] = rr.in_range
    res.metrics["lattice_vs_pde"] = abs(ref.value(x0) - float(proj.value(x0)[0]))
    res.checks["lattice_vs_pde"] = res.metrics["lattice_vs_pde"] <= cfg.check("cross_rel") * ref.value(x0)

    cm = br.verify_control_measure(ref, proj, smooth_test_functions(float(x0[0])), x0,
                                   rel_tol=cfg.check("control_rel"))
    cmt = Table(["test_function", "bsde", "pde", "gap", "stderr", "pass"])
    for i in range(len(cm.gaps)):
        cmt.add(i, cm.bsde_pairings[i], cm.pde_pairings[i], cm.gaps[i], cm.stderr[i], cm.passes[i])
    res.tables["control_measure"] = cmt
    res.checks["control_measure"] = cm.passed

    nb = int(cfg.option("bridge_n_steps", 100))
    bp = solve_obstacle_projected(_pde_grid(cfg, nb), spec, drv, cfg.obstacle)
    rep = br.compare_representation(bp, br.BridgeInputs(spec, drv, obstacle=cfg.obstacle), _probes(cfg),
                                    cfg.n_paths, cfg.seed, "monte-carlo", abs_allowance=0.0,
                                    rel_allowance=cfg.check("bridge_rel"),
                                    basis_order=int(cfg.option("basis_order", 7)))
    res.tables["bridge"] = _bridge_table(rep)
    res.checks["bridge"] = rep.passed
    res.tables["values"] = tab
    xs = pgrid.nodes[:, 0]
    res.plots["value"] = Plot("value at t0", {"pde projected": (xs, proj.u[0]),
                                              "lattice reflected": (lat.nodes[:, 0], ref.Y[:, 0]),
                                              "obstacle": (xs, proj.h_values[0])}, "x", "u")
    return res


def run_homographic_sweep(cfg) -> CaseResult:
    res = CaseResult(cfg.case)
    spec, drv = cfg.spec, cfg.driver
    ns = cfg.n_list
    if cfg.scheme == "homographic":
        _, _, ob, lat, eng = _put_setup(cfg)
        x0 = np.array([float(cfg.option("x0", 1.0))])
        rep = homographic_sequence(eng, drv, ob, ns, start=x0, n_paths=int(cfg.option("gap_paths", 2000)),
                                   seed=cfg.seed)
        tab = Table(["n", "sup_gap_Y", "int_gap_Z", "sup_gap_K", "skorokhod", "ls_violations"])
        for r in rep.rows:
            tab.add(r.n, r.sup_gap_Y, r.int_gap_Z, r.sup_gap_K, r.skorokhod, r.ls_violations)
        res.tables["convergence"] = tab
        gy = rep.column("sup_gap_Y")
        res.checks["monotone"] = rep.monotone
        res.checks["gap_decreasing"] = bool(np.all(np.diff(gy) <= 1e-12))
        res.metrics["final_sup_gap_Y"] = float(gy[-1])
        res.plots["gaps"] = Plot("homographic gaps", {"sup Y": (ns, gy), "sup K": (ns, rep.column("sup_gap_K"))},
                                 "n", "gap", logx=True, logy=True)
        return res

    grid = _pde_grid(cfg)
    w = WeightSpec(float(cfg.option("weight_alpha", 1.0)))
    proj = solve_obstacle_projected(grid, spec, drv, cfg.obstacle)
    hom = solve_obstacle_homographic(grid, spec, drv, cfg.obstacle, ns)
    sc = self_convergence(lambda g: solve_obstacle_projected(g, spec, drv, cfg.obstacle), grid, levels=1, weight=w)
    sc_err = sc.errors[0]
    fns = smooth_test_functions(float(cfg.option("x0", 1.0)))
    ref_pair = [_pde_pairing(proj.reaction, grid, f) for f in fns]
    mass_ref = ref_pair[0]
    tab = Table(["n", "weighted_gap", "mass", "mass_ratio", "min_u_minus_h", "max_increase"]
                + [f"pairing_{i}" for i in range(len(fns))])
    gaps, masses = [], []
    prev = None
    max_rise = -math.inf
    min_dom = math.inf
    for n, mu, u in hom.mu_n_sequence:
        gap = weighted_l2(u - proj.u, grid, w)
        pairs = [_pde_pairing(mu, grid, f) for f in fns]
        rise = float((u - prev).max()) if prev is not None else math.nan
        if prev is not None:
            max_rise = max(max_rise, rise)
        dom = float((u - hom.h_values).min())
        min_dom = min(min_dom, dom)
        tab.add(n, gap, pairs[0], pairs[0] / mass_ref if mass_ref > 0 else math.nan, dom, rise, *pairs)
        gaps.append(gap)
        masses.append(pairs[0])
        prev = u
    res.tables["convergence"] = tab
    final_pairs = tab.rows[-1][-len(fns):]
    rel = [abs(a - b) / max(abs(b), 1e-300) for a, b in zip(final_pairs, ref_pair)]
    res.metrics.update(self_convergence_error=sc_err, final_weighted_gap=gaps[-1], max_increase=max_rise,
                       min_u_minus_h=min_dom, pairing_rel_gaps=rel, projected_pairings=ref_pair)
    res.checks["monotone"] = max_rise <= cfg.check("mono_tol")
    res.checks["above_obstacle"] = min_dom >= -cfg.check("dom_tol")
    res.checks["gap_decreasing"] = bool(np.all(np.diff(gaps) <= 0.0))
    res.checks["gap_vs_self_convergence"] = gaps[-1] <= cfg.check("sc_factor") * sc_err
    m = dict(zip(ns, masses))
    n_c = int(cfg.option("cauchy_n", 32))
    if n_c in m and n_c // 2 in m:
        cauchy = abs(m[n_c] - m[n_c // 2]) / abs(m[n_c])
        res.metrics["mass_cauchy"] = cauchy
        res.checks["mass_cauchy"] = cauchy <= cfg.check("cauchy_rel")
    res.checks["weak_pairings"] = max(rel) <= cfg.check("pairing_rel")
    res.plots["gaps"] = Plot("||u_n - u||_(2,rho)", {"gap": (ns, gaps), "2x self-convergence": (ns, [2 * sc_err] * len(ns))},
                             "n", "gap", logx=True, logy=True)
    return res


def run_fully_active(cfg) -> CaseResult:
    res = CaseResult(cfg.case)
    spec, drv = cfg.spec, cfg.driver
    c = float(cfg.get("obstacle", "c", default=1.0))
    tg = cfg.time_grid()
    grid = _pde_grid(cfg)
    proj = solve_obstacle_projected(grid, spec, drv, cfg.obstacle)
    rr = recover_reaction_density(proj)
    vals = rr.alpha_hat[~np.isnan(rr.alpha_hat)]
    dev = float(np.max(np.abs(vals - 1.0))) if vals.size else math.inf
    res.metrics["pde_alpha_max_dev"] = dev
    res.checks["pde_alpha_one"] = dev <= cfg.check("alpha_tol")
    _, _, ob, lat, eng = _put_setup(cfg)
    ref = solve_rbsde_reflected(eng, drv, ob)
    cd = control_density(ref)
    v = cd.alpha_hat[~np.isnan(cd.alpha_hat)]
    sdev = float(np.max(np.abs(v - 1.0))) if v.size else math.inf
    res.metrics["lattice_alpha_max_dev"] = sdev
    res.checks["lattice_alpha_one"] = sdev <= cfg.check("alpha_tol")
    x0 = np.zeros(1)
    fns = smooth_test_functions(0.0)
    cm = br.verify_control_measure(ref, proj, fns, x0, rel_tol=cfg.check("pairing_rel"))
    tab = Table(["test_function", "bsde", "pde", "quadrature", "pass"])
    ok = True
    for i, f in enumerate(fns):
        q = c * br.gaussian_pairing(spec, lambda t, y: np.ones(np.shape(y)[0]), f, tg.t0, x0, tg.T) \
            if spec.is_constant else math.nan
        good = cm.passes[i] and (math.isnan(q) or abs(cm.bsde_pairings[i] - q) <= cfg.check("pairing_rel") * abs(q))
        tab.add(i, cm.bsde_pairings[i], cm.pde_pairings[i], q, good)
        ok = ok and good
    res.tables["control_measure"] = tab
    res.checks["control_measure"] = ok
    return res


CORPUS_OBSTACLES = (
    ("put", {"family": "constant", "a": 0.09}, {"f": {"family": "linear", "r": 0.1}, "terminal": {"family": "put"}},
     {"family": "put"}, (-0.8, 2.8, 91), (1.0, 250)),
    ("bump", {"family": "constant", "a": 0.5}, {"f": {"family": "bump", "amp": -0.5, "r": 0.2}},
     {"family": "bump", "height": 0.6, "width": 0.4}, (-4.0, 4.0, 81), (1.0, 200)),
    ("barrier", {"family": "constant", "a": 1.0}, {}, {"family": "linear_barrier", "c": 1.0, "T": 1.0},
     (-3.0, 3.0, 31), (1.0, 200)),
    ("trig_bump", {"family": "trigonometric", "c0": 0.6, "c1": 0.2}, {"f": {"family": "linear_z", "r": 0.3, "kz": 0.5}},
     {"family": "bump", "height": 0.4, "width": 0.6}, (-3.0, 3.0, 61), (1.0, 200)),
)


def corpus_cases(cfg) -> list:
    """The configured obstacle case followed by the fixed corpus."""
    from . import families as fam

    out = [(cfg.case, cfg.spec, cfg.driver, cfg.obstacle, cfg.box() + (cfg.n_space(),),
            (cfg.time_grid().T, cfg.time_grid().n_steps))]
    for name, d, drv, ob, box, tg in CORPUS_OBSTACLES:
        out.append((name, fam.make_diffusion(d), fam.make_driver(drv.get("f"), drv.get("g"), drv.get("terminal"), name),
                    fam.make_obstacle(ob), box, tg))
    return out


def run_ls_stochastic(cfg) -> CaseResult:
    res = CaseResult(cfg.case)
    tab = Table(["obstacle", "violations", "checked", "lower_excess", "upper_excess", "alpha_min", "alpha_max"])
    ok = True
    rng_ok = True
    for name, spec, drv, h, (lo, hi, ns), (T, N) in corpus_cases(cfg):
        ob = decompose_obstacle(h, drv, spec)
        lat = build_lattice(spec, TimeGrid(0.0, T, N), lo, hi, ns)
        ref = solve_rbsde_reflected(LatticeEngine(lat), drv, ob)
        ls = check_lewy_stampacchia(ref, tol=cfg.check("ls_tol"))
        cd = control_density(ref)
        tab.add(name, ls.n_violations, ls.n_checked, ls.lower_excess, ls.upper_excess, cd.min_alpha, cd.max_alpha)
        ok = ok and ls.ok
        rng_ok = rng_ok and cd.in_range
    res.tables["lewy_stampacchia"] = tab
    res.checks["zero_violations"] = ok
    res.checks["alpha_range"] = rng_ok
    return res


def run_ls_pde(cfg) -> CaseResult:
    res = CaseResult(cfg.case)
    tab = Table(["obstacle", "violations", "checked", "lower_excess", "upper_excess", "alpha_min", "alpha_max"])
    ok = True
    rng_ok = True
    for name, spec, drv, h, (lo, hi, ns), (T, N) in corpus_cases(cfg):
        grid = SpaceTimeGrid.uniform(0.0, T, N, lo, hi, ns)
        proj = solve_obstacle_projected(grid, spec, drv, h)
        pls = check_pde_lewy_stampacchia(proj, tol=cfg.check("ls_tol"))
        rr = recover_reaction_density(proj)
        tab.add(name, pls.n_violations, pls.n_checked, pls.lower_excess, pls.upper_excess, rr.min_alpha, rr.max_alpha)
        ok = ok and pls.ok
        rng_ok = rng_ok and rr.in_range
    res.tables["lewy_stampacchia"] = tab
    res.checks["zero_violations"] = ok
    res.checks["alpha_range"] = rng_ok
    return res


def run_trigonometric_bridge(cfg) -> CaseResult:
    res = CaseResult(cfg.case)
    spec, drv = cfg.spec, cfg.driver
    sol = solve_parabolic_measure(_pde_grid(cfg), spec, drv, cfg.measure)
    mode = "lattice" if cfg.scheme == "lattice" else "monte-carlo"
    rep = br.compare_representation(sol, br.BridgeInputs(spec, drv, cfg.measure), _probes(cfg), cfg.n_paths,
                                    cfg.seed, mode, abs_allowance=cfg.check("bridge_abs"))
    res.tables["bridge"] = _bridge_table(rep)
    res.checks["bridge"] = rep.passed
    if mode == "lattice":
        res.metrics["gradient_rel_gap"] = rep.max_z_gap
        res.checks["gradient_identity"] = rep.max_z_gap <= cfg.check("gradient_rel")
    res.tables["u_grid"] = _u_table(sol, every=max(1, sol.grid.time.n_steps // 10))
    return res


# --------------------------------------------------------------------------
# validators


def _needs_obstacle(cfg):
    from .errors import ConfigError

    if cfg.obstacle is None:
        raise ConfigError(f"case {cfg.case!r} needs an obstacle", line=cfg.line_of("obstacle"))
    if cfg.n_list == [] and cfg.case in ("deterministic_barrier", "american_put_style", "homographic_sweep"):
        raise ConfigError(f"case {cfg.case!r} needs n_list", line=cfg.line_of("n_list"))


def _needs_lattice_cfl(cfg, n_steps):
    from .errors import CFLError, ConfigError
    from .forward import check_lattice_cfl

    lo, hi = cfg.box()
    tg = cfg.time_grid()
    try:
        check_lattice_cfl(cfg.spec, TimeGrid(tg.t0, tg.T, int(n_steps)), lo, hi, cfg.n_space())
    except CFLError as exc:
        raise ConfigError(str(exc), line=cfg.line_of("grid", "n_steps")) from None


def _validate_put(cfg):
    _needs_obstacle(cfg)


def _validate_sweep(cfg):
    _needs_obstacle(cfg)
    if cfg.scheme == "homographic":
        _needs_lattice_cfl(cfg, cfg.grid["n_steps"])


def _validate_heat(cfg):
    if cfg.spec.dim == 1 and cfg.raw.get("probes"):
        _needs_lattice_cfl(cfg, cfg.grid["n_steps"])


def _validate_discounting(cfg):
    if cfg.get("driver", "f", "family") != "linear" or cfg.get("driver", "terminal", "family") != "constant":
        from .errors import ConfigError

        raise ConfigError("discounting needs f: linear and terminal: constant", line=cfg.line_of("driver"))


def _validate_min_max(cfg):
    if cfg.spec.dim != 1:
        from .errors import ConfigError

        raise ConfigError("min/max separation runs in one dimension", line=cfg.line_of("diffusion"))


# --------------------------------------------------------------------------
# catalog

_PUT = {
    "diffusion": {"family": "constant", "a": 0.09, "b": 0.0},
    "driver": {"f": {"family": "linear", "r": 0.1}, "g": {"family": "zero"},
               "terminal": {"family": "put", "strike": 1.0}},
    "obstacle": {"family": "put", "strike": 1.0},
    "grid": {"t0": 0.0, "T": 1.0, "n_steps": 1000, "box": [-0.8, 2.8], "n_space": 181},
}

CATALOG = {}


def _register(name, description, claims, schemes, defaults, runner, lattice_schemes=(), validator=None):
    base = {"schema_version": 1, "case": name, "seed": 0, "measure": None, "obstacle": None,
            "n_paths": 10000, "probes": [], "checks": {}, "options": {}}
    base.update(defaults)
    base["scheme"] = defaults.get("scheme", schemes[0])
    CATALOG[name] = CaseEntry(name, description, claims, tuple(schemes), base, runner, tuple(lattice_schemes),
                              validator)


_register(
    "heat_baseline",
    "heat equation with a Gaussian terminal: PDE vs closed form vs backward solution",
    "Feynman-Kac identification u(s,x) = Y_s and Z = sigma^T grad u for the linear case",
    ("lsmc", "lattice"),
    {"diffusion": {"family": "constant", "a": 1.0, "b": 0.0, "dim": 1},
     "driver": {"f": {"family": "zero"}, "g": {"family": "zero"}, "terminal": {"family": "gaussian", "width": 1.0}},
     "grid": {"t0": 0.0, "T": 0.5, "n_steps": 100, "box": [-6.0, 6.0], "n_space": 121},
     "probes": [[0.0, 0.0], [0.0, 1.0], [0.0, -1.5], [0.25, 0.5], [0.4, -0.5]],
     "checks": {"closed_form_tol": 1e-3, "bridge_abs": 1e-3, "gradient_rel": 0.05}},
    run_heat_baseline, lattice_schemes=("lattice",), validator=_validate_heat)

_register(
    "discounting",
    "linear driver f = -r y with constant terminal: lattice, LSMC and PDE vs exp(-r(T-s))",
    "well-posedness of the Lipschitz BSDE; Feynman-Kac with a zero-order term",
    ("lsmc", "lattice"),
    {"diffusion": {"family": "constant", "a": 1.0, "b": 0.0},
     "driver": {"f": {"family": "linear", "r": 1.0}, "g": {"family": "zero"}, "terminal": {"family": "constant", "c": 1.0}},
     "grid": {"t0": 0.0, "T": 1.0, "n_steps": 1000, "box": [-3.0, 3.0], "n_space": 61},
     "probes": [[0.0, 0.0], [0.0, 1.0], [0.3, -0.5], [0.5, 0.5], [0.8, 0.0]],
     "options": {"lsmc_n_steps": 100, "lsmc_paths": 20000},
     "checks": {"lattice_tol": 1e-3, "lsmc_rel": 0.01, "bridge_abs": 1e-3}},
    run_discounting, lattice_schemes=("lsmc", "lattice"), validator=_validate_discounting)

_register(
    "clock_measure",
    "measure term with g = 1 and q = 1: Y_t = T - t and the clock correspondence",
    "generalized BSDE with an increasing integrator; measure/functional pairing is the clock",
    ("lattice",),
    {"diffusion": {"family": "constant", "a": 1.0, "b": 0.0},
     "driver": {"f": {"family": "zero"}, "g": {"family": "constant", "c": 1.0}, "terminal": {"family": "zero"}},
     "measure": {"family": "constant", "c": 1.0},
     "grid": {"t0": 0.0, "T": 1.0, "n_steps": 200, "box": [-3.0, 3.0], "n_space": 31},
     "probes": [[0.0, 0.0], [0.5, 1.0]],
     "options": {"corr_paths": 2000},
     "checks": {"dt_factor": 1.0, "clock_tol": 1e-12}},
    run_clock_measure, lattice_schemes=("lattice",))

_register(
    "gaussian_measure",
    "Gaussian measure density: Monte Carlo additive functional vs transition-density quadrature",
    "correspondence between a measure and its additive functional; PDE with measure data",
    ("lsmc",),
    {"diffusion": {"family": "constant", "a": 1.0, "b": 0.0},
     "driver": {"f": {"family": "zero"}, "g": {"family": "constant", "c": 1.0}, "terminal": {"family": "zero"}},
     "measure": {"family": "gaussian", "c": 1.0, "width": 1.0},
     "grid": {"t0": 0.0, "T": 1.0, "n_steps": 400, "box": [-5.0, 5.0], "n_space": 101},
     "probes": [[0.0, 0.0], [0.0, 1.0]],
     "n_paths": 20000,
     "options": {"corr_n_steps": 1000, "xi_omega": 1.0},
     "checks": {"bridge_abs": 1e-3}},
    run_gaussian_measure, lattice_schemes=("lsmc",))

_register(
    "comparison_suite",
    "randomized ordered Lipschitz driver pairs on the 1D lattice",
    "comparison theorem: ordered data give ordered solutions",
    ("lattice",),
    {"diffusion": {"family": "constant", "a": 1.0, "b": 0.0},
     "driver": {"f": {"family": "zero"}},
     "measure": {"family": "gaussian", "c": 1.0, "width": 1.0},
     "grid": {"t0": 0.0, "T": 1.0, "n_steps": 200, "box": [-4.0, 4.0], "n_space": 41},
     "options": {"n_trials": 50},
     "checks": {"violation_tol": 1e-6}},
    run_comparison_suite, lattice_schemes=("lattice",))

_register(
    "min_max_separation",
    "non-Lipschitz driver sqrt(y+) ^ 1: maximal and minimal solutions separate",
    "existence of minimal and maximal solutions under continuity and linear growth",
    ("lattice",),
    {"diffusion": {"family": "constant", "a": 1.0, "b": 0.0},
     "driver": {"f": {"family": "sqrt_cap", "cap": 1.0}, "g": {"family": "zero"}, "terminal": {"family": "zero"}},
     "grid": {"t0": 0.0, "T": 1.0, "n_steps": 512, "box": [-1.0, 1.0], "n_space": 3},
     "n_list": [1, 2, 4, 8, 16, 32, 64, 128],
     "checks": {"max_rel": 0.02, "min_abs": 1e-6}},
    run_min_max, lattice_schemes=("lattice",), validator=_validate_min_max)

_register(
    "deterministic_barrier",
    "barrier S_t = c(T - t): homographic (or penalized) iterates against the reflected limit",
    "homographic approximation decreases to the reflected solution at rate 1/n",
    ("homographic", "penalization"),
    {"diffusion": {"family": "constant", "a": 1.0, "b": 0.0},
     "driver": {"f": {"family": "zero"}, "g": {"family": "zero"}, "terminal": {"family": "constant", "c": 0.0}},
     "obstacle": {"family": "linear_barrier", "c": 1.0, "T": 1.0},
     "grid": {"t0": 0.0, "T": 1.0, "n_steps": 1000, "box": [-3.0, 3.0], "n_space": 41},
     "n_list": [1, 2, 4, 8, 16, 32],
     "checks": {"r2_min": 0.95, "k_dt_factor": 1.0}},
    run_deterministic_barrier, lattice_schemes=("homographic", "penalization"), validator=_validate_put)

_register(
    "american_put_style",
    "put-style obstacle with discounting: lattice RBSDE, penalization, projected PDE, bridge",
    "reflected BSDE, Skorokhod condition, Lewy-Stampacchia bounds, obstacle Feynman-Kac",
    ("reflected", "penalization"),
    dict(_PUT, n_list=[1, 2, 4, 8, 16, 32],
         probes=[[0.0, 1.0], [0.0, 0.8], [0.0, 0.9], [0.25, 0.9], [0.5, 1.0]],
         options={"x0": 1.0, "bridge_n_steps": 100, "basis_order": 7, "skorokhod_n": 32},
         checks={"skorokhod_ratio": 1e-3, "cross_rel": 0.01, "control_rel": 0.05, "bridge_rel": 0.02}),
    run_american_put, lattice_schemes=("reflected", "penalization"), validator=_validate_put)

_register(
    "homographic_sweep",
    "homographic PDE sequence u_n, mu_n on the put-style obstacle (or the lattice RBSDE sweep)",
    "homographic approximation of the obstacle problem: monotone convergence and weak convergence of mu_n",
    ("pde", "homographic"),
    dict(_PUT, grid={"t0": 0.0, "T": 1.0, "n_steps": 250, "box": [-0.8, 2.8], "n_space": 91},
         n_list=[1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384],
         options={"x0": 1.0, "weight_alpha": 1.0, "cauchy_n": 32, "gap_paths": 2000},
         checks={"mono_tol": 1e-6, "dom_tol": 1e-9, "sc_factor": 2.0, "cauchy_rel": 0.05, "pairing_rel": 0.10}),
    run_homographic_sweep, lattice_schemes=("homographic",), validator=_validate_sweep)

_register(
    "fully_active",
    "space-independent barrier above the free solution: the constraint is always active",
    "reaction density alpha = 1 on the contact set; control measure equals the barrier residual",
    ("pde",),
    {"diffusion": {"family": "constant", "a": 1.0, "b": 0.0},
     "driver": {"f": {"family": "zero"}, "g": {"family": "zero"}, "terminal": {"family": "zero"}},
     "obstacle": {"family": "linear_barrier", "c": 1.0, "T": 1.0},
     "grid": {"t0": 0.0, "T": 1.0, "n_steps": 500, "box": [-4.0, 4.0], "n_space": 81},
     "checks": {"alpha_tol": 1e-3, "pairing_rel": 0.01}},
    run_fully_active, lattice_schemes=("pde",), validator=_validate_put)

_register(
    "lewy_stampacchia_stochastic",
    "nodewise Lewy-Stampacchia bounds for reflected solutions over the obstacle corpus",
    "0 <= dK <= 1{Y = S} (f + U)^- dt for the reflected BSDE",
    ("reflected",),
    dict(_PUT, grid={"t0": 0.0, "T": 1.0, "n_steps": 500, "box": [-0.8, 2.8], "n_space": 121},
         checks={"ls_tol": 1e-8}),
    run_ls_stochastic, lattice_schemes=("reflected",), validator=_validate_put)

_register(
    "lewy_stampacchia_pde",
    "nodewise Lewy-Stampacchia bounds for the projected obstacle PDE over the corpus",
    "0 <= reaction <= 1{u = h} Phi^- for symmetric operators",
    ("pde",),
    dict(_PUT, grid={"t0": 0.0, "T": 1.0, "n_steps": 500, "box": [-0.8, 2.8], "n_space": 121},
         checks={"ls_tol": 1e-8}),
    run_ls_pde, validator=_validate_put)

_register(
    "trigonometric_bridge",
    "divergence-form diffusion a = (1 + 0.5 sin x)^2: PDE vs lattice backward solution",
    "Feynman-Kac for divergence-form operators with the Ito drift b + div(a)/2",
    ("lattice", "lsmc"),
    {"diffusion": {"family": "trigonometric", "c0": 1.0, "c1": 0.5, "omega": 1.0},
     "driver": {"f": {"family": "bump", "amp": 0.5, "r": 0.5}, "g": {"family": "zero"}, "terminal": {"family": "cos"}},
     "grid": {"t0": 0.0, "T": 1.0, "n_steps": 500, "box": [-5.0, 5.0], "n_space": 101},
     "probes": [[0.0, 0.0], [0.0, 1.0], [0.0, -1.0], [0.5, 0.5], [0.5, -2.0]],
     "checks": {"bridge_abs": 2e-3, "gradient_rel": 0.05}},
    run_trigonometric_bridge, lattice_schemes=("lattice",))


def list_cases(pattern: str = "") -> list:
    """``(name, description, claims)`` for case names containing ``pattern`` (case-insensitive)."""
    p = (pattern or "").lower()
    return [(e.name, e.description, e.claims) for e in CATALOG.values() if p in e.name.lower()]
