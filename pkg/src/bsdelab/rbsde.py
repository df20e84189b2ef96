"""Reflected BSDEs: obstacle decomposition, penalisation, homographic
approximation, and the Skorokhod / Lewy-Stampacchia checks.

All schemes share the backward machinery of :mod:`bsdelab.gbsde`.  At each
node the implicit step reads

    y = b(y) + psi(y),   b(y) = E[Y_{k+1}|x] + f(y, Z) dt + g(y) dR^mu,

with ``psi`` the penalty ``n dt (S - y)^+``, the homographic term
``dR / (1 + n |y - S|)`` or, for the reflected limit, the projection
``y = max(S, b(y))``.  The ``psi`` part is solved in closed form inside an
outer fixed point on ``b``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DiffusionSpec, DriverSpec, TimeGrid, as_points, sigma_from_a
from .engine import LatticeEngine, RegressionEngine, along
from .errors import BSDELabError, MonotonicityError
from .gbsde import DEFAULT_SCHEDULE, SolveReport, backward_induction, solve_fixed_point

# --------------------------------------------------------------------------
# obstacle decomposition


@dataclass(frozen=True, eq=False)
class ObstacleSpec:
    """Barrier ``h`` with ``S_t = h(t, X_t)`` and its decomposition pieces.

    ``phi_residual`` is ``Phi = dh/dt + L h + f(h, sigma^T grad h)``;
    ``R_density = Phi^-``, ``C_density = Phi^+`` and ``Ztilde = sigma^T grad h``.
    """

    h: Callable
    R_density: Callable
    C_density: Callable
    Ztilde: Callable
    phi_residual: Optional[Callable] = None
    name: str = "custom"

    def S_at(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.h(t, x), dtype=float) * np.ones(x.shape[0])

    def check_terminal(self, driver: DriverSpec, points, T: float, tol: float = 1e-12) -> bool:
        """``phi(x) >= h(T, x)`` on the probed points."""
        pts = np.asarray(points, dtype=float)
        gap = driver.phi_at(pts) - self.S_at(T, pts)
        if np.any(gap < -tol):
            i = int(np.argmin(gap))
            raise ValueError(f"terminal value below the barrier at x={pts[i]} (gap {gap[i]:.3g})")
        return True


def _fd_derivatives(h, t, x, eps_t=1e-5, eps_x=1e-4):
    """Central differences: ``dh/dt (n,)``, gradient ``(n, d)``, Hessian ``(n, d, d)``."""
    n, d = x.shape
    hx = np.asarray(h(t, x), dtype=float) * np.ones(n)
    ht = (np.asarray(h(t + eps_t, x)) - np.asarray(h(t - eps_t, x))) / (2 * eps_t)
    ht = ht * np.ones(n)
    grad = np.zeros((n, d))
    hess = np.zeros((n, d, d))
    E = np.eye(d) * eps_x
    for i in range(d):
        hp = np.asarray(h(t, x + E[i]), dtype=float) * np.ones(n)
        hm = np.asarray(h(t, x - E[i]), dtype=float) * np.ones(n)
        grad[:, i] = (hp - hm) / (2 * eps_x)
        hess[:, i, i] = (hp - 2 * hx + hm) / eps_x ** 2
        for j in range(i + 1, d):
            hpp = np.asarray(h(t, x + E[i] + E[j])) * np.ones(n)
            hpm = np.asarray(h(t, x + E[i] - E[j])) * np.ones(n)
            hmp = np.asarray(h(t, x - E[i] + E[j])) * np.ones(n)
            hmm = np.asarray(h(t, x - E[i] - E[j])) * np.ones(n)
            hess[:, i, j] = hess[:, j, i] = (hpp - hpm - hmp + hmm) / (4 * eps_x ** 2)
    for arr, what in ((ht, "time derivative"), (grad, "gradient"), (hess, "Hessian")):
        if not np.all(np.isfinite(arr)):
            raise BSDELabError(f"barrier {what} is not evaluable at t={t}")
    return hx, ht, grad, hess


def decompose_obstacle(h: Callable, driver: DriverSpec, spec: DiffusionSpec,
                       grid: Optional[TimeGrid] = None, eps_t: float = 1e-5,
                       eps_x: float = 1e-4, name: str = "custom") -> ObstacleSpec:
    """Finite-difference decomposition of ``S = h(t, X)``.

    ``Phi = dh/dt + 1/2 tr(a D^2 h) + (b + 1/2 div a) . grad h + f(h, sigma^T grad h)``.
    ``grid`` is accepted for interface symmetry; the returned pieces are
    callables of ``(t, x)``.
    """

    def pieces(t, x):
        x = as_points(x, spec.dim)
        hx, ht, grad, hess = _fd_derivatives(h, t, x, eps_t, eps_x)
        a = spec.a_at(t, x)
        drift = spec.drift(t, x)
        Lh = 0.5 * np.einsum("nij,nij->n", a, hess) + np.sum(drift * grad, axis=1)
        sig = sigma_from_a(spec, t, x).reshape(x.shape[0], spec.dim, spec.dim)
        zt = np.einsum("nji,nj->ni", sig, grad)
        phi = ht + Lh + driver.f_at(t, x, hx, zt)
        return phi, zt

    def phi_res(t, x):
        return pieces(t, x)[0]

    return ObstacleSpec(
        h=h,
        R_density=lambda t, x: np.maximum(-phi_res(t, x), 0.0),
        C_density=lambda t, x: np.maximum(phi_res(t, x), 0.0),
        Ztilde=lambda t, x: pieces(t, x)[1],
        phi_residual=phi_res,
        name=name,
    )


@dataclass(eq=False)
class DiscreteObstacle:
    """Barrier and decomposition increments on an engine: ``S (n, N+1)``, ``dR, dC (n, N)``."""

    S: np.ndarray
    dR: np.ndarray
    dC: np.ndarray
    Ztilde: np.ndarray
    method: str


def discretize_obstacle(engine, driver: DriverSpec, obstacle: ObstacleSpec,
                        residual: str = "auto") -> DiscreteObstacle:
    """Decomposition increments consistent with the engine.

    ``"discrete"`` uses ``dPhi_k = E[S_{k+1}|x] - S_k + dt f(S_k, Ztilde_k)``
    with ``Ztilde_k = E[S_{k+1} dB_k|x] / dt`` so that
    ``S_k = E[S_{k+1}|x] + dt f - dC_k + dR_k`` holds exactly; ``"analytic"``
    integrates ``Phi^-`` and ``Phi^+`` with the left-point rule.  ``"auto"``
    picks ``"discrete"`` on lattices and ``"analytic"`` on paths.
    """
    grid = engine.grid
    N, n, d = grid.n_steps, engine.n_states, engine.dim
    if residual == "auto":
        residual = "discrete" if engine.mode == "lattice" else "analytic"
    S = np.empty((n, N + 1))
    for k in range(N + 1):
        S[:, k] = obstacle.S_at(float(grid.nodes[k]), engine.states(k))
    dR = np.empty((n, N))
    dC = np.empty((n, N))
    Zt = np.zeros((n, N, d))
    for k in range(N):
        t = float(grid.nodes[k])
        x = engine.states(k)
        dt = grid.dt[k]
        if residual == "discrete":
            c = engine.cond_expect(k, S[:, k + 1])
            zt = engine.cond_expect_dB(k, S[:, k + 1], c) / dt
            dphi = c - S[:, k] + dt * driver.f_at(t, x, S[:, k], zt)
        elif residual == "analytic":
            if obstacle.phi_residual is None:
                raise ValueError("analytic residual needs an obstacle from decompose_obstacle")
            dphi = obstacle.phi_residual(t, x) * dt
            zt = np.asarray(obstacle.Ztilde(t, x), dtype=float).reshape(n, d)
        else:
            raise ValueError(f"unknown residual method {residual!r}")
        dR[:, k] = np.maximum(-dphi, 0.0)
        dC[:, k] = np.maximum(dphi, 0.0)
        Zt[:, k] = zt
    return DiscreteObstacle(S, dR, dC, Zt, residual)


# --------------------------------------------------------------------------
# solutions


@dataclass(eq=False)
class RBSDESolution:
    """Reflected solution on an engine.

    ``dK[:, k]`` is the control increment over ``(tau_k, tau_{k+1}]`` at
    state ``k``; ``K`` is its running sum per state (``K[:, 0] = 0``).  For
    lattice solutions the pathwise control is ``K_along(idx)``.
    """

    grid: TimeGrid
    Y: np.ndarray
    Z: np.ndarray
    dK: np.ndarray
    obstacle: DiscreteObstacle
    mode: str
    engine: object = None
    report: SolveReport = field(default_factory=SolveReport)
    scheme: str = "reflected"

    @property
    def K(self) -> np.ndarray:
        K = np.zeros(self.Y.shape)
        np.cumsum(self.dK, axis=1, out=K[:, 1:])
        return K

    @property
    def S(self) -> np.ndarray:
        return self.obstacle.S

    @property
    def dR(self) -> np.ndarray:
        return self.obstacle.dR

    def K_along(self, idx: np.ndarray) -> np.ndarray:
        dk = along(self.dK, idx)
        K = np.zeros((idx.shape[0], self.grid.n_steps + 1))
        np.cumsum(dk, axis=1, out=K[:, 1:])
        return K

    def value(self, x=None, k: int = 0) -> float:
        if self.mode == "lattice":
            if x is None:
                raise ValueError("lattice solutions need a point x")
            return float(self.engine.lattice.interpolate(self.Y[:, k], x)[0])
        return float(np.mean(self.Y[:, k]))

    def to_csv(self, path) -> None:
        """Rows ``(node, time, state, Y, S, dK, Z_1..Z_d)``; ``dK`` is empty at the last node."""
        d = self.Z.shape[2]
        N = self.grid.n_steps
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "time", "state", "Y", "S", "dK"] + [f"Z{i + 1}" for i in range(d)])
            for k, t in enumerate(self.grid.nodes):
                for s in range(self.Y.shape[0]):
                    dk = repr(float(self.dK[s, k])) if k < N else ""
                    w.writerow([k, repr(float(t)), s, repr(float(self.Y[s, k])), repr(float(self.S[s, k])), dk]
                               + [repr(float(v)) for v in self.Z[s, k]])


@dataclass(eq=False)
class HomographicIterate(RBSDESolution):
    """Solution of the homographic equation at level ``n``; ``dK = alpha dR``."""

    n: int = 1
    alpha: np.ndarray = None
    parent: Optional[RBSDESolution] = None

    @property
    def Y_n(self):
        return self.Y

    @property
    def Z_n(self):
        return self.Z

    @property
    def K_n(self):
        return self.K

    @property
    def alpha_n(self):
        return self.alpha


# --------------------------------------------------------------------------
# scalar closed forms


def penalty_root(b, S, lam):
    """Root of ``y = b + lam (S - y)^+``."""
    return np.where(b >= S, b, (b + lam * S) / (1.0 + lam))


def homographic_root(b, S, dR, n):
    """Largest root of ``y = b + dR / (1 + n |y - S|)``.

    With ``beta = b - S``: if ``beta + dR >= 0`` the largest root lies above
    ``S`` and solves ``n u^2 + (1 - n beta) u - (beta + dR) = 0`` for
    ``u = y - S``; otherwise it is the unique root below ``S``.
    """
    beta = b - S
    r = beta + dR
    p = 1.0 - n * beta
    D_up = np.maximum(p * p + 4.0 * n * r, 0.0)
    sq = np.sqrt(D_up)
    with np.errstate(divide="ignore", invalid="ignore"):
        u_pos = np.where(p > 0, 2.0 * r / np.where(p + sq > 0, p + sq, 1.0), (-p + sq) / (2.0 * n))
    # below the barrier: n v^2 + (1 + n beta) v + r = 0 with v = S - y > 0
    p2 = 1.0 + n * beta
    D_dn = np.maximum(p2 * p2 - 4.0 * n * r, 0.0)
    sq2 = np.sqrt(D_dn)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(p2 < 0, (-p2 + sq2) / (2.0 * n), -2.0 * r / np.where(p2 + sq2 > 0, p2 + sq2, 1.0))
    up = r >= 0
    return np.where(up, S + np.maximum(u_pos, 0.0), S - np.maximum(v, 0.0))


# --------------------------------------------------------------------------
# solvers


def _run(engine, driver: DriverSpec, disc: DiscreteObstacle, scheme: str, n: float = 0.0,
         tol: float = 1e-13, max_iter: int = 500):
    grid = engine.grid
    N = grid.n_steps
    measure_on = getattr(engine, "measure", None) is not None or getattr(engine, "functional", None) is not None
    terminal = driver.phi_at(engine.states(N))
    dK = np.zeros((engine.n_states, N))
    alpha = np.ones((engine.n_states, N)) if scheme == "homographic" else None
    stats = {"iterations": 0, "residual": 0.0}
    incr = np.zeros(engine.n_states)

    def step(k, c, z):
        t = float(grid.nodes[k])
        x = engine.states(k)
        dt = grid.dt[k]
        S = disc.S[:, k]
        dr = disc.dR[:, k]
        dmu = engine.dR(k) if measure_on else None

        def b(y):
            out = c + dt * driver.f_at(t, x, y, z)
            if dmu is not None:
                out = out + driver.g_at(t, x, y) * dmu
            return out

        if scheme == "penalization":
            inner = lambda y: penalty_root(b(y), S, n * dt)
        elif scheme == "homographic":
            inner = lambda y: homographic_root(b(y), S, dr, n)
        elif scheme == "reflected":
            inner = lambda y: np.maximum(b(y), S)
        elif scheme == "free":
            inner = b
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        y, it, res = solve_fixed_point(inner, np.maximum(c, S), k, tol, max_iter)
        stats["iterations"] = max(stats["iterations"], it)
        stats["residual"] = max(stats["residual"], res)
        if scheme == "penalization":
            dK[:, k] = n * dt * np.maximum(S - y, 0.0)
        elif scheme == "homographic":
            a = 1.0 / (1.0 + n * np.abs(y - S))
            alpha[:, k] = a
            dK[:, k] = a * dr
        elif scheme == "reflected":
            by = b(y)
            dK[:, k] = np.maximum(y - by, 0.0)
            stats["stopped"] = S >= by
        incr[:] += y - c
        return y, None

    carry = None
    if engine.mode == "monte-carlo" and scheme == "reflected":
        # stopped paths take the barrier, the others keep their realized value
        def carry(k, y, c, v):
            stats["carried"] = np.where(stats["stopped"], y, y + v - c)
            return stats["carried"]

    Y, Z, _ = backward_induction(engine, terminal, step, carry)
    rep = SolveReport(stats["iterations"], stats["residual"])
    if engine.mode == "monte-carlo":
        theta = Y[:, -1] + incr if carry is None else stats["carried"]
        rep.y0_stderr = float(np.std(theta, ddof=1) / math.sqrt(theta.size))
    return Y, Z, dK, alpha, rep


def _check_terminal(engine, driver, disc, tol=1e-12):
    N = engine.grid.n_steps
    gap = driver.phi_at(engine.states(N)) - disc.S[:, N]
    if np.any(gap < -tol):
        raise ValueError(f"terminal value below the barrier (worst gap {gap.min():.3g})")


def solve_rbsde_reflected(engine, driver: DriverSpec, obstacle: ObstacleSpec,
                          residual: str = "auto", disc: Optional[DiscreteObstacle] = None) -> RBSDESolution:
    """Reflected scheme ``Y_k = max(S_k, b(Y_k))`` with ``dK = Y - b(Y)``."""
    disc = disc or discretize_obstacle(engine, driver, obstacle, residual)
    _check_terminal(engine, driver, disc)
    Y, Z, dK, _, rep = _run(engine, driver, disc, "reflected")
    return RBSDESolution(engine.grid, Y, Z, dK, disc, engine.mode, engine, rep, "reflected")


def solve_rbsde_free(engine, driver: DriverSpec, obstacle: ObstacleSpec,
                     residual: str = "auto", disc: Optional[DiscreteObstacle] = None) -> RBSDESolution:
    """Unreflected solve on the same engine (``K = 0``), for comparisons."""
    disc = disc or discretize_obstacle(engine, driver, obstacle, residual)
    Y, Z, dK, _, rep = _run(engine, driver, disc, "free")
    return RBSDESolution(engine.grid, Y, Z, dK, disc, engine.mode, engine, rep, "free")


def penalized_iterate(engine, driver: DriverSpec, obstacle: ObstacleSpec, n: float,
                      residual: str = "auto", disc: Optional[DiscreteObstacle] = None) -> RBSDESolution:
    """Solution with the penalty ``n (Y - S)^- dt``; ``dK`` collects the penalty."""
    disc = disc or discretize_obstacle(engine, driver, obstacle, residual)
    _check_terminal(engine, driver, disc)
    Y, Z, dK, _, rep = _run(engine, driver, disc, "penalization", float(n))
    return RBSDESolution(engine.grid, Y, Z, dK, disc, engine.mode, engine, rep, f"penalization[n={n}]")


def solve_rbsde_penalization(engine, driver: DriverSpec, obstacle: ObstacleSpec,
                             n_schedule: Sequence[int] = DEFAULT_SCHEDULE, residual: str = "auto",
                             mono_tol: float = 1e-8, keep_iterates: bool = False) -> RBSDESolution:
    """Penalised sequence with its increase certificate, returning the limit.

    On a fixed grid the penalised iterates increase to the reflected scheme
    ``Y = max(S, b(Y))``, which is returned.  ``report.history`` holds
    ``(n, Y at the first state and node, sup distance to the limit)`` and
    ``report.iterates`` the iterates when ``keep_iterates`` is set.
    """
    disc = discretize_obstacle(engine, driver, obstacle, residual)
    limit = solve_rbsde_reflected(engine, driver, obstacle, disc=disc)
    prev = None
    history, iterates = [], []
    for n in n_schedule:
        it = penalized_iterate(engine, driver, obstacle, n, disc=disc)
        if prev is not None:
            drop = float((prev.Y - it.Y).max())
            if drop > mono_tol:
                raise MonotonicityError(f"penalised iterate n={n} decreased by {drop:.3g}", n=n, excess=drop)
        over = float((it.Y - limit.Y).max())
        if over > mono_tol:
            raise MonotonicityError(f"penalised iterate n={n} exceeds the reflected limit by {over:.3g}",
                                    n=n, excess=over)
        history.append((int(n), float(it.Y[0, 0]), float(np.abs(limit.Y - it.Y).max())))
        if keep_iterates:
            iterates.append(it)
        prev = it
    limit.report.history = history
    limit.report.iterates = iterates
    return limit


def solve_rbsde_homographic(engine, driver: DriverSpec, obstacle: ObstacleSpec, n: float,
                            residual: str = "auto", disc: Optional[DiscreteObstacle] = None,
                            parent: Optional[RBSDESolution] = None) -> HomographicIterate:
    """Largest-root homographic scheme at level ``n``."""
    if n <= 0:
        raise ValueError("n must be positive")
    disc = disc or discretize_obstacle(engine, driver, obstacle, residual)
    _check_terminal(engine, driver, disc)
    Y, Z, dK, alpha, rep = _run(engine, driver, disc, "homographic", float(n))
    return HomographicIterate(engine.grid, Y, Z, dK, disc, engine.mode, engine, rep,
                              f"homographic[n={n}]", n=n, alpha=alpha, parent=parent)


# --------------------------------------------------------------------------
# checks


def _weights(sol: RBSDESolution, start=None) -> np.ndarray:
    """Per-(state, node) probability weights: occupation on a lattice, ``1/P`` on paths."""
    eng = sol.engine
    if sol.mode == "lattice":
        s = eng.start_index(np.zeros(eng.dim) if start is None else start)
        return eng.occupation(s).T
    P = sol.Y.shape[0]
    return np.full(sol.Y.shape, 1.0 / P)


def check_skorokhod(sol: RBSDESolution, start=None, absolute: bool = True) -> float:
    """``E sum_k (Y_k - S_k) dK_k``; ``absolute`` uses ``|Y - S|``.

    Lattice solutions are weighted by the occupation law of the chain
    started at ``start`` (default the node nearest the origin).
    """
    w = _weights(sol, start)[:, :-1]
    gap = sol.Y[:, :-1] - sol.S[:, :-1]
    if absolute:
        gap = np.abs(gap)
    return float(np.sum(w * gap * sol.dK))


def expected_control(sol: RBSDESolution, start=None) -> float:
    """``E K_T`` under the same weighting as :func:`check_skorokhod`."""
    w = _weights(sol, start)[:, :-1]
    return float(np.sum(w * sol.dK))


def reachable_sup(sol: RBSDESolution, start=None, values: Optional[np.ndarray] = None) -> float:
    """Sup of ``|values|`` (default ``Y``) over states charged by the chain from ``start``."""
    w = _weights(sol, start)
    v = sol.Y if values is None else values
    return float(np.max(np.abs(v[w > 0])))


@dataclass
class LSReport:
    n_violations: int
    lower_excess: float
    upper_excess: float
    n_checked: int

    @property
    def ok(self) -> bool:
        return self.n_violations == 0


def check_lewy_stampacchia(sol: RBSDESolution, eps_contact: Optional[float] = None,
                           tol: float = 1e-8) -> LSReport:
    """Nodewise ``0 <= dK <= 1{|Y - S| <= eps} dR + tol``.

    ``eps_contact`` defaults to twice the lattice spacing (or ``dt`` on
    paths).
    """
    if eps_contact is None:
        dx = getattr(sol.engine, "dx", 0.0) or 0.0
        eps_contact = 2.0 * dx if dx > 0 else float(sol.grid.uniform_dt)
    gap = np.abs(sol.Y[:, :-1] - sol.S[:, :-1])
    contact = gap <= eps_contact
    lower = -sol.dK
    upper = sol.dK - np.where(contact, sol.dR, 0.0)
    bad = (lower > tol) | (upper > tol)
    return LSReport(int(bad.sum()), float(max(lower.max(), 0.0)), float(max(upper.max(), 0.0)), bad.size)


@dataclass
class ControlDensityReport:
    alpha_hat: np.ndarray
    defined: np.ndarray
    in_range: bool
    support_ok: bool
    max_alpha: float
    min_alpha: float


def control_density(sol: RBSDESolution, tol: float = 1e-6, denom_tol: float = 1e-14,
                    eps_contact: Optional[float] = None) -> ControlDensityReport:
    """``alpha_hat = dK / ((f + U)^- dt)`` where the denominator is positive.

    The denominator is the barrier residual increment ``dR``; elsewhere
    ``alpha_hat`` is NaN (undefined, never inferred).
    """
    if eps_contact is None:
        dx = getattr(sol.engine, "dx", 0.0) or 0.0
        eps_contact = 2.0 * dx if dx > 0 else float(sol.grid.uniform_dt)
    dR = sol.dR
    defined = dR > denom_tol
    ah = np.full(dR.shape, np.nan)
    ah[defined] = sol.dK[defined] / dR[defined]
    vals = ah[defined]
    in_range = bool(np.all((vals >= -tol) & (vals <= 1.0 + tol))) if vals.size else True
    off = np.abs(sol.Y[:, :-1] - sol.S[:, :-1]) > eps_contact
    support_ok = bool(np.all(np.abs(np.where(defined & off, ah, 0.0)) <= tol))
    mx = float(vals.max()) if vals.size else math.nan
    mn = float(vals.min()) if vals.size else math.nan
    return ControlDensityReport(ah, defined, in_range, support_ok, mx, mn)


# --------------------------------------------------------------------------
# convergence of the homographic sequence


@dataclass
class ConvergenceRow:
    n: int
    sup_gap_Y: float
    int_gap_Z: float
    sup_gap_K: float
    skorokhod: float
    ls_violations: int


@dataclass
class ConvergenceReport:
    rows: list
    iterates: list
    reference: RBSDESolution
    monotone: bool
    min_domination: float

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def to_csv(self, path) -> None:
        cols = ["n", "sup_gap_Y", "int_gap_Z", "sup_gap_K", "skorokhod", "ls_violations"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                w.writerow([r.n] + [repr(float(getattr(r, c))) for c in cols[1:5]] + [r.ls_violations])


def gap_metrics(it: RBSDESolution, ref: RBSDESolution, idx: np.ndarray) -> tuple:
    """RMS path gaps ``(sup|Y^n - Y|, int |Z^n - Z|^2, sup|K^n - K|)``."""
    N = it.grid.n_steps
    dY = along(it.Y - ref.Y, idx)
    dZ = along(it.Z[:, :N] - ref.Z[:, :N], idx)
    dK = it.K_along(idx) - ref.K_along(idx)
    gy = math.sqrt(float(np.mean(np.max(dY ** 2, axis=1))))
    gz = math.sqrt(float(np.mean(np.sum(np.sum(dZ ** 2, axis=2) * it.grid.dt, axis=1))))
    gk = math.sqrt(float(np.mean(np.max(dK ** 2, axis=1))))
    return gy, gz, gk


def homographic_sequence(engine, driver: DriverSpec, obstacle: ObstacleSpec, n_list: Sequence[int],
                         reference: Optional[RBSDESolution] = None, residual: str = "auto",
                         start=None, n_paths: int = 2000, seed: int = 0, mono_tol: float = 1e-6,
                         dom_tol: Optional[float] = None) -> ConvergenceReport:
    """Solve for each ``n`` and tabulate the gaps to ``reference``.

    Without a reference the reflected scheme on the same engine is used.
    Raises :class:`MonotonicityError` if ``Y^n >= Y^{n'} >= S`` fails for
    consecutive ``n < n'`` beyond the tolerances.
    """
    disc = discretize_obstacle(engine, driver, obstacle, residual)
    if reference is None:
        reference = solve_rbsde_reflected(engine, driver, obstacle, disc=disc)
    if dom_tol is None:
        dom_tol = (getattr(engine, "dx", 0.0) or 0.0) + float(engine.grid.uniform_dt)
    if engine.mode == "lattice":
        s_idx = engine.start_index(np.zeros(engine.dim) if start is None else start)
        idx = engine.sample_indices(s_idx, n_paths, seed)
    else:
        s_idx = None
        idx = engine.sample_indices()
    rows, iterates = [], []
    prev = None
    min_dom = math.inf
    for n in sorted(n_list):
        it = solve_rbsde_homographic(engine, driver, obstacle, n, disc=disc, parent=reference)
        dom = float((it.Y - it.S).min())
        min_dom = min(min_dom, dom)
        if dom < -dom_tol:
            raise MonotonicityError(f"homographic iterate n={n} dips {-dom:.3g} below the barrier",
                                    n=n, excess=-dom)
        if prev is not None:
            rise = float((it.Y - prev.Y).max())
            if rise > mono_tol:
                raise MonotonicityError(f"homographic iterate n={n} exceeds its predecessor by {rise:.3g}",
                                        n=n, excess=rise)
        gy, gz, gk = gap_metrics(it, reference, idx)
        sk = check_skorokhod(it, start=None if s_idx is None else engine.lattice.nodes[s_idx])
        ls = check_lewy_stampacchia(it).n_violations
        rows.append(ConvergenceRow(int(n), gy, gz, gk, sk, ls))
        iterates.append(it)
        prev = it
    return ConvergenceReport(rows, iterates, reference, True, min_dom)
