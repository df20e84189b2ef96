"""Backward solvers for BSDEs with an additional increasing integrator.

The discrete equation solved at every node is

    Y_k = E[Y_{k+1} | x] + f(tau_k, x, Y_k, Z_k) dt + g(tau_k, x, Y_k) dR_k,
    Z_k = E[Y_{k+1} dB_k | x] / dt,

implicit in ``Y`` and explicit in ``Z``.  Conditional expectations come from
one of the engines in :mod:`bsdelab.engine`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DriverSpec, MeasureData, TimeGrid, regularize_driver
from .engine import LatticeEngine, RegressionEngine, along
from .errors import ConvergenceError, MonotonicityError
from .forward import FunctionalPath, MarkovLattice, PathBundle

DEFAULT_SCHEDULE = (1, 2, 4, 8, 16, 32)


@dataclass
class SolveReport:
    iterations: int = 0
    residual: float = 0.0
    apriori_lhs: float = math.nan
    apriori_rhs: float = math.nan
    y0_stderr: float = math.nan
    history: list = field(default_factory=list)
    iterates: list = field(default_factory=list)


@dataclass(eq=False)
class BSDESolution:
    """Discrete solution; ``Y`` is ``(states, N+1)`` and ``Z`` ``(states, N+1, d)``.

    In lattice mode states are space nodes, in Monte Carlo mode paths.
    ``Z[:, N]`` repeats the last computed column.
    """

    grid: TimeGrid
    Y: np.ndarray
    Z: np.ndarray
    mode: str
    engine: object = None
    report: SolveReport = field(default_factory=SolveReport)

    def value(self, x=None, k: int = 0) -> float:
        """``Y`` at node ``k``: interpolated at ``x`` on a lattice, averaged over paths otherwise."""
        if self.mode == "lattice":
            if x is None:
                raise ValueError("lattice solutions need a point x")
            return float(self.engine.lattice.interpolate(self.Y[:, k], x)[0])
        return float(np.mean(self.Y[:, k]))

    def gradient(self, x, k: int = 0) -> np.ndarray:
        if self.mode != "lattice":
            return np.mean(self.Z[:, k], axis=0)
        return self.engine.lattice.interpolate(self.Z[:, k], x)[0]

    def to_csv(self, path) -> None:
        """Rows ``(node, time, state, Y, Z_1..Z_d)``."""
        d = self.Z.shape[2]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "time", "state", "Y"] + [f"Z{i + 1}" for i in range(d)])
            for k, t in enumerate(self.grid.nodes):
                for s in range(self.Y.shape[0]):
                    w.writerow([k, repr(float(t)), s, repr(float(self.Y[s, k]))]
                               + [repr(float(v)) for v in self.Z[s, k]])


# --------------------------------------------------------------------------
# shared backward machinery


def solve_fixed_point(F: Callable, y0: np.ndarray, k: int, tol: float = 1e-13,
                      max_iter: int = 500) -> tuple:
    """Damped iteration ``y <- y + omega (F(y) - y)`` to ``|F(y) - y| <= tol (1 + |y|)``.

    ``omega`` halves whenever the residual stops shrinking.  Returns
    ``(y, iterations, residual)``.
    """
    y = np.array(y0, dtype=float)
    omega = 1.0
    prev = math.inf
    for it in range(1, max_iter + 1):
        r = F(y) - y
        scaled = np.abs(r) / (1.0 + np.abs(y))
        res = float(scaled.max()) if scaled.size else 0.0
        if not math.isfinite(res):
            raise ConvergenceError(f"non-finite residual at step {k}", step=k,
                                   node=int(np.argmax(~np.isfinite(scaled))))
        if res <= tol:
            return y + r, it, res
        if res >= prev:
            omega = max(0.5 * omega, 1e-4)
        prev = res
        y = y + omega * r
    node = int(np.argmax(scaled))
    raise ConvergenceError(f"implicit step did not converge at step {k}, node {node} "
                           f"(residual {res:.3g})", step=k, node=node)


def backward_induction(engine, terminal: np.ndarray, step: Callable,
                       carry: Optional[Callable] = None) -> tuple:
    """Run the backward recursion.

    ``step(k, c, z)`` returns ``(y_k, extra)`` where ``c`` is
    ``E[Y_{k+1}|x]`` and ``z`` the explicit ``Z_k``.  Returns ``Y``, ``Z``
    and the list of ``extra`` objects indexed by step.

    With ``carry(k, y, c, v_next) -> v_k`` the conditional expectations
    are taken of the carried pathwise values ``v`` instead of ``Y``; this
    is how the regression engine keeps realized continuation values.
    """
    grid = engine.grid
    N, d = grid.n_steps, engine.dim
    n = engine.n_states
    Y = np.empty((n, N + 1))
    Z = np.zeros((n, N + 1, d))
    Y[:, N] = terminal
    extras = [None] * N
    v = terminal.copy()
    for k in range(N - 1, -1, -1):
        nxt = Y[:, k + 1] if carry is None else v
        c = engine.cond_expect(k, nxt)
        z = engine.cond_expect_dB(k, nxt, c) / grid.dt[k]
        Y[:, k], extras[k] = step(k, c, z)
        Z[:, k] = z
        if carry is not None:
            v = carry(k, Y[:, k], c, v)
    Z[:, N] = Z[:, N - 1]
    return Y, Z, extras


def _as_engine(obj, measure: Optional[MeasureData] = None):
    if isinstance(obj, (LatticeEngine, RegressionEngine)):
        if measure is not None and isinstance(obj, LatticeEngine):
            return LatticeEngine(obj.lattice, measure)
        return obj
    if isinstance(obj, MarkovLattice):
        return LatticeEngine(obj, measure)
    raise TypeError(f"expected a lattice or an engine, got {type(obj).__name__}")


def solve_gbsde(engine, driver: DriverSpec, cap: Optional[float] = None, tol: float = 1e-13,
                max_iter: int = 500) -> BSDESolution:
    """Generic solve on any engine; ``cap`` truncates the functional increments."""
    grid = engine.grid
    terminal = driver.phi_at(engine.states(grid.n_steps))
    stats = {"iterations": 0, "residual": 0.0}
    incr = np.zeros(engine.n_states)

    def step(k, c, z):
        t = float(grid.nodes[k])
        x = engine.states(k)
        dt = grid.dt[k]
        dr = engine.dR(k, cap)
        has_r = bool(np.any(dr != 0))

        def F(y):
            out = c + dt * driver.f_at(t, x, y, z)
            if has_r:
                out = out + driver.g_at(t, x, y) * dr
            return out

        y, it, res = solve_fixed_point(F, c, k, tol, max_iter)
        stats["iterations"] = max(stats["iterations"], it)
        stats["residual"] = max(stats["residual"], res)
        incr[:] += y - c
        return y, None

    Y, Z, _ = backward_induction(engine, terminal, step)
    rep = SolveReport(stats["iterations"], stats["residual"])
    if engine.mode == "monte-carlo":
        theta = Y[:, -1] + incr
        rep.y0_stderr = float(np.std(theta, ddof=1) / math.sqrt(theta.size))
    return BSDESolution(grid, Y, Z, engine.mode, engine, rep)


def solve_gbsde_lattice(lat: MarkovLattice, driver: DriverSpec, R_density: Optional[MeasureData] = None,
                        tol: float = 1e-13, max_iter: int = 500) -> BSDESolution:
    """Backward induction on a lattice; the measure enters as ``g q dt``."""
    return solve_gbsde(LatticeEngine(lat, R_density), driver, tol=tol, max_iter=max_iter)


def solve_gbsde_lsmc(paths: PathBundle, R: Optional[FunctionalPath], driver: DriverSpec,
                     basis_order: int = 3, tol: float = 1e-13) -> BSDESolution:
    """Least-squares Monte Carlo solve; ``report.y0_stderr`` is the standard error of ``Y_0``."""
    return solve_gbsde(RegressionEngine(paths, R, basis_order), driver, tol=tol)


# --------------------------------------------------------------------------
# minimal and maximal solutions


def apriori_bound(engine, driver: DriverSpec) -> float:
    """Sup-norm bound ``(|phi| + T (K |gamma| + M |q|)) e^{KT} + 1`` over the engine states."""
    grid = engine.grid
    T = grid.T - grid.t0
    phi = float(np.max(np.abs(driver.phi_at(engine.states(grid.n_steps)))))
    gam = 0.0
    q = 0.0
    for k in range(grid.n_steps):
        x = engine.states(k)
        gam = max(gam, float(np.max(np.abs(np.asarray(driver.gamma_bound(float(grid.nodes[k]), x))
                                           * np.ones(x.shape[0])))))
        q = max(q, float(np.max(engine.dR(k))) / grid.dt[k])
    K, M = driver.const_K, driver.const_M
    return (phi + T * (K * gam + M * q)) * math.exp(K * T) + 1.0


def minimal_solution(lat, driver: DriverSpec, R_density: Optional[MeasureData] = None,
                     n_schedule: Sequence[int] = DEFAULT_SCHEDULE, stop_tol: float = 1e-4,
                     mono_tol: float = 1e-8, y_bound: Optional[float] = None) -> BSDESolution:
    """Limit of the solutions with inf-convolved coefficients and truncated functional.

    The iterates must increase in ``n``; a decrease beyond ``mono_tol``
    raises :class:`MonotonicityError`.  The iteration stops once the
    sup-norm change falls below ``stop_tol``.  ``report.history`` holds
    ``(n, Y_0 at the first state, sup gap to the previous iterate)``.
    """
    engine = _as_engine(lat, R_density)
    if y_bound is None:
        y_bound = apriori_bound(engine, driver)
    prev = None
    history = []
    sol = None
    for n in n_schedule:
        drv = regularize_driver(driver, float(n), y_bound)
        sol = solve_gbsde(engine, drv, cap=float(n))
        gap = math.inf
        if prev is not None:
            diff = sol.Y - prev.Y
            drop = float(-diff.min())
            if drop > mono_tol:
                raise MonotonicityError(f"iterate n={n} decreased by {drop:.3g} below its predecessor",
                                        n=n, excess=drop)
            gap = float(np.abs(diff).max())
        history.append((int(n), float(sol.Y[engine.start_index(np.zeros(engine.dim)), 0]), gap))
        prev = sol
        if gap < stop_tol:
            break
    sol.report.history = history
    return sol


def maximal_solution(lat, driver: DriverSpec, R_density: Optional[MeasureData] = None,
                     n_schedule: Sequence[int] = DEFAULT_SCHEDULE, stop_tol: float = 1e-4,
                     mono_tol: float = 1e-8, y_bound: Optional[float] = None) -> BSDESolution:
    """Negated minimal solution of the sign-flipped data."""
    low = minimal_solution(lat, driver.flipped(), R_density, n_schedule, stop_tol, mono_tol, y_bound)
    rep = low.report
    rep.history = [(n, -y0, gap) for n, y0, gap in rep.history]
    return BSDESolution(low.grid, -low.Y, -low.Z, low.mode, low.engine, rep)


# --------------------------------------------------------------------------
# property checks


@dataclass
class ComparisonReport:
    max_violation: float
    location: tuple
    ok: bool
    hypotheses_ok: Optional[bool] = None


def check_comparison(sol1: BSDESolution, sol2: BSDESolution, data1: Optional[DriverSpec] = None,
                     data2: Optional[DriverSpec] = None, tol: float = 1e-6) -> ComparisonReport:
    """Largest ``(Y^1 - Y^2)^+`` over all states and nodes.

    When both drivers are passed the ordering hypotheses (terminal and
    driver evaluated along ``sol2``) are probed and reported as well.
    """
    if sol1.Y.shape != sol2.Y.shape:
        raise ValueError("solutions live on different discretisations")
    excess = np.maximum(sol1.Y - sol2.Y, 0.0)
    loc = np.unravel_index(int(np.argmax(excess)), excess.shape)
    worst = float(excess[loc])
    hyp = None
    if data1 is not None and data2 is not None and sol2.engine is not None:
        eng = sol2.engine
        grid = sol2.grid
        xT = eng.states(grid.n_steps)
        hyp = bool(np.all(data1.phi_at(xT) <= data2.phi_at(xT) + 1e-12))
        for k in range(grid.n_steps):
            t = float(grid.nodes[k])
            x = eng.states(k)
            y, z = sol2.Y[:, k], sol2.Z[:, k]
            ok_f = np.all(data1.f_at(t, x, y, z) <= data2.f_at(t, x, y, z) + 1e-12)
            ok_g = np.all(data1.g_at(t, x, y) <= data2.g_at(t, x, y) + 1e-12)
            if not (ok_f and ok_g):
                hyp = False
                break
    return ComparisonReport(worst, (int(loc[0]), int(loc[1])), worst <= tol, hyp)


@dataclass
class AprioriReport:
    lhs: float
    rhs: float
    ratio: float


def _path_functional(sol: BSDESolution, idx: np.ndarray) -> np.ndarray:
    """``R_T`` along index paths."""
    eng = sol.engine
    grid = sol.grid
    if isinstance(eng, RegressionEngine):
        if eng.functional is None:
            return np.zeros(idx.shape[0])
        return eng.functional.R[idx[:, 0], -1]
    dR = np.stack([eng.dR(k) for k in range(grid.n_steps)], axis=1)
    return along(dR, idx).sum(axis=1)


def check_apriori(sol: BSDESolution, driver: DriverSpec, start=None, n_paths: int = 2000,
                  seed: int = 0) -> AprioriReport:
    """Empirical ``E sup|Y|^2 + E int |Z|^2`` against ``E|xi|^2 + E R_T^2 + E int gamma^2``.

    Lattice solutions are sampled along ``n_paths`` chains from ``start``
    (a lattice point; default the node nearest the origin).
    """
    eng = sol.engine
    grid = sol.grid
    N = grid.n_steps
    if sol.mode == "lattice":
        s_idx = eng.start_index(np.zeros(eng.dim) if start is None else start)
        idx = eng.sample_indices(s_idx, n_paths, seed)
    else:
        idx = eng.sample_indices()
    Yp = along(sol.Y, idx)
    Zp = along(sol.Z[:, :N], idx)
    dt = grid.dt
    lhs = float(np.mean(np.max(Yp ** 2, axis=1)) + np.mean(np.sum(np.sum(Zp ** 2, axis=2) * dt, axis=1)))
    xi2 = float(np.mean(Yp[:, N] ** 2))
    RT = _path_functional(sol, idx)
    gam = np.zeros(idx.shape[0])
    for k in range(N):
        x = eng.states(k)[idx[:, k]]
        g = np.asarray(driver.gamma_bound(float(grid.nodes[k]), x), dtype=float) * np.ones(x.shape[0])
        gam += g * g * dt[k]
    rhs = xi2 + float(np.mean(RT ** 2)) + float(np.mean(gam))
    if lhs == 0.0:
        ratio = 0.0
    elif rhs == 0.0:
        ratio = math.inf
    else:
        ratio = lhs / rhs
    sol.report.apriori_lhs, sol.report.apriori_rhs = lhs, rhs
    return AprioriReport(lhs, rhs, ratio)
