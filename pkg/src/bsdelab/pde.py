"""Finite-difference solvers for the semilinear Cauchy problem with measure
data and for the obstacle problem.

Time stepping is implicit Euler, backward from ``u(T) = phi``:

    (u_k - u_{k+1}) / dt - A_k u_k - F_k(u_k) = reaction_k,

where ``A_k`` discretises ``L`` at ``tau_k`` in flux form and
``F_k(u) = f(tau_k, x, u, sigma^T grad u_{k+1}) + g(tau_k, x, u) q(tau_k, x)``.
The gradient inside ``f`` is lagged one step, like ``Z`` in the backward
schemes.  Boundary rows carry no operator, so boundary nodes follow the
nodewise ODE in time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .core import DiffusionSpec, DriverSpec, MeasureData, TimeGrid, WeightSpec, sigma_from_a, weight_eval
from .errors import ConvergenceError, MonotonicityError


@dataclass(frozen=True, eq=False)
class SpaceTimeGrid:
    """Uniform box ``[lo, hi]`` (1D or 2D tensor) times a :class:`TimeGrid`."""

    time: TimeGrid
    lo: tuple
    hi: tuple
    n_space: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        ns = tuple(int(v) for v in np.broadcast_to(np.atleast_1d(self.n_space), (len(lo),)))
        if len(lo) != len(hi) or len(lo) not in (1, 2):
            raise ValueError("space box must be 1D or 2D")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError("need hi > lo in every dimension")
        if any(n < 3 for n in ns):
            raise ValueError("need at least 3 nodes per dimension")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n_space", ns)

    @classmethod
    def uniform(cls, t0, T, n_steps, lo, hi, n_space) -> "SpaceTimeGrid":
        return cls(TimeGrid(t0, T, n_steps), lo, hi, n_space)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def axes(self) -> tuple:
        return tuple(np.linspace(l, h, n) for l, h, n in zip(self.lo, self.hi, self.n_space))

    @property
    def dx(self) -> tuple:
        return tuple((h - l) / (n - 1) for l, h, n in zip(self.lo, self.hi, self.n_space))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    @property
    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.n_space))

    @property
    def boundary(self) -> np.ndarray:
        multi = np.stack(np.unravel_index(np.arange(self.n_nodes), self.n_space), axis=1)
        return np.any((multi == 0) | (multi == np.array(self.n_space) - 1), axis=1)

    def refine(self) -> "SpaceTimeGrid":
        """Halve ``dx`` and ``dt``; coarse nodes stay nodes of the fine grid."""
        return SpaceTimeGrid(self.time.refine(2), self.lo, self.hi, tuple(2 * (n - 1) + 1 for n in self.n_space))


@dataclass(eq=False)
class PDESolution:
    """``u`` and ``grad_u`` are ``(N+1, nodes[, d])``; ``reaction`` is ``(N, nodes)``."""

    grid: SpaceTimeGrid
    u: np.ndarray
    grad_u: np.ndarray
    reaction: Optional[np.ndarray] = None
    mu_n_sequence: list = field(default_factory=list)
    phi_minus: Optional[np.ndarray] = None
    h_values: Optional[np.ndarray] = None
    spec: Optional[DiffusionSpec] = None
    driver: Optional[DriverSpec] = None
    measure: Optional[MeasureData] = None
    obstacle: Optional[Callable] = None
    mode: str = "cauchy"
    newton_iterations: int = 0

    def value(self, x, t: Optional[float] = None, k: Optional[int] = None) -> np.ndarray:
        """Piecewise-linear in space, previous time node; ``x`` is ``(m, d)`` or one point."""
        from scipy.interpolate import RegularGridInterpolator

        if k is None:
            k = 0 if t is None else int(np.searchsorted(self.grid.time.nodes, t + 1e-12, side="right") - 1)
        pts = np.asarray(x, dtype=float).reshape(-1, self.grid.dim)
        interp = RegularGridInterpolator(self.grid.axes, self.u[k].reshape(self.grid.n_space))
        return interp(pts)

    def gradient(self, x, t: Optional[float] = None, k: Optional[int] = None) -> np.ndarray:
        from scipy.interpolate import RegularGridInterpolator

        if k is None:
            k = 0 if t is None else int(np.searchsorted(self.grid.time.nodes, t + 1e-12, side="right") - 1)
        pts = np.asarray(x, dtype=float).reshape(-1, self.grid.dim)
        d = self.grid.dim
        out = np.empty((pts.shape[0], d))
        for i in range(d):
            interp = RegularGridInterpolator(self.grid.axes, self.grad_u[k, :, i].reshape(self.grid.n_space))
            out[:, i] = interp(pts)
        return out

    def to_csv(self, path) -> None:
        """Rows ``(k, t, x_1..x_d, u, reaction)``; reaction empty at the terminal layer."""
        nodes = self.grid.nodes
        N = self.grid.time.n_steps
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "t"] + [f"x{i + 1}" for i in range(self.grid.dim)] + ["u", "reaction"])
            for k, t in enumerate(self.grid.time.nodes):
                for i in range(nodes.shape[0]):
                    r = "" if (self.reaction is None or k == N) else repr(float(self.reaction[k, i]))
                    w.writerow([k, repr(float(t))] + [repr(float(v)) for v in nodes[i]]
                               + [repr(float(self.u[k, i])), r])


# --------------------------------------------------------------------------
# spatial operator


def assemble_operator(spec: DiffusionSpec, grid: SpaceTimeGrid, t: float) -> sparse.csr_matrix:
    """Sparse matrix of ``1/2 div(a grad u) + b . grad u`` at time ``t``.

    Diagonal diffusion uses the conservative flux stencil with ``a`` at
    half nodes; off-diagonal entries use the central cross difference with
    the matching drift correction.  Advection is central unless the cell
    Peclet number exceeds one, then upwind.
    """
    d = grid.dim
    ns = grid.n_space
    n = grid.n_nodes
    nodes = grid.nodes
    dxs = grid.dx
    bnd = grid.boundary
    inner = np.nonzero(~bnd)[0]
    multi = np.stack(np.unravel_index(inner, ns), axis=1)
    xin = nodes[inner]
    a_c = spec.a_at(t, xin)
    b = spec.b_at(t, xin)
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    def shift(i, s):
        m = multi.copy()
        m[:, i] += s
        return np.ravel_multi_index(tuple(m.T), ns)

    vel = b.copy()
    if d == 2:
        div = spec.div_a_at(t, xin)
        for i in range(d):
            e = np.zeros(d)
            e[i] = 0.5 * dxs[i]
            da_ii = (spec.a_at(t, xin + e)[:, i, i] - spec.a_at(t, xin - e)[:, i, i]) / dxs[i]
            vel[:, i] += 0.5 * (div[:, i] - da_ii)
    for i in range(d):
        e = np.zeros(d)
        e[i] = 0.5 * dxs[i]
        a_p = spec.a_at(t, xin + e)[:, i, i]
        a_m = spec.a_at(t, xin - e)[:, i, i]
        h2 = dxs[i] ** 2
        up = shift(i, 1)
        dn = shift(i, -1)
        add(inner, up, 0.5 * a_p / h2)
        add(inner, dn, 0.5 * a_m / h2)
        add(inner, inner, -0.5 * (a_p + a_m) / h2)
        v = vel[:, i]
        pe = np.abs(v) * dxs[i] / np.maximum(a_c[:, i, i], 1e-300)
        central = pe <= 1.0
        vc = np.where(central, v, 0.0)
        add(inner, up, vc / (2 * dxs[i]))
        add(inner, dn, -vc / (2 * dxs[i]))
        vp = np.where(central, 0.0, np.maximum(v, 0.0))
        vm = np.where(central, 0.0, np.minimum(v, 0.0))
        add(inner, up, vp / dxs[i])
        add(inner, inner, -vp / dxs[i] + vm / dxs[i])
        add(inner, dn, -vm / dxs[i])
    if d == 2:
        a12 = a_c[:, 0, 1]
        coef = a12 / (4 * dxs[0] * dxs[1])
        # 1/2 (a12 + a21) d12 u = a12 d12 u
        for s0, s1, sg in ((1, 1, 1.0), (-1, -1, 1.0), (1, -1, -1.0), (-1, 1, -1.0)):
            m = multi.copy()
            m[:, 0] += s0
            m[:, 1] += s1
            add(inner, np.ravel_multi_index(tuple(m.T), ns), sg * coef)
    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    A.sum_duplicates()
    return A


def gradient_field(u: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """Central differences inside, one-sided on the boundary; ``(nodes, d)``."""
    g = np.gradient(u.reshape(grid.n_space), *grid.dx, edge_order=1)
    if grid.dim == 1:
        g = [g]
    return np.stack([gi.reshape(-1) for gi in g], axis=1)


def _z_of(spec, t, nodes, grad):
    sig = sigma_from_a(spec, t, nodes).reshape(nodes.shape[0], spec.dim, spec.dim)
    return np.einsum("nji,nj->ni", sig, grad)


class _Stepper:
    """Shared per-step data: ``M = I - dt A``, nodewise ``F`` and its derivative."""

    def __init__(self, grid, spec, driver, measure):
        self.grid = grid
        self.spec = spec
        self.driver = driver
        self.measure = measure
        self.nodes = grid.nodes
        self._A_cache = None

    def matrix(self, k):
        t = float(self.grid.time.nodes[k])
        dt = float(self.grid.time.dt[k])
        key = (dt,) if self.spec.is_constant else (t, dt)
        if self._A_cache is None or self._A_cache[0] != key:
            A = assemble_operator(self.spec, self.grid, t)
            M = (sparse.identity(self.grid.n_nodes, format="csr") - dt * A).tocsc()
            self._A_cache = (key, A, M)
        return self._A_cache[1], self._A_cache[2]

    def F(self, k, u, z):
        t = float(self.grid.time.nodes[k])
        out = self.driver.f_at(t, self.nodes, u, z)
        if self.measure is not None:
            q = self.measure.density_at(t, self.nodes)
            out = out + self.driver.g_at(t, self.nodes, u) * q
        return out

    def dF(self, k, u, z, eps=1e-7):
        s = eps * (1.0 + np.abs(u))
        return (self.F(k, u + s, z) - self.F(k, u - s, z)) / (2 * s)


def _newton(G, J, u0, k, tol=1e-11, max_iter=60):
    """Damped Newton with backtracking on ``max|G|``."""
    u = u0.copy()
    g = G(u)
    res = float(np.max(np.abs(g)))
    for it in range(1, max_iter + 1):
        scale = tol * (1.0 + float(np.max(np.abs(u))))
        if res <= scale:
            return u, it - 1
        step = spsolve(J(u), -g)
        lam = 1.0
        while True:
            cand = u + lam * step
            gc = G(cand)
            rc = float(np.max(np.abs(gc)))
            if rc < res or lam < 1e-6:
                break
            lam *= 0.5
        u, g, res = cand, gc, rc
    if res <= tol * (1.0 + float(np.max(np.abs(u)))) * 10:
        return u, max_iter
    node = int(np.argmax(np.abs(g)))
    raise ConvergenceError(f"Newton failed at time layer {k}, node {node} (residual {res:.3g})",
                           step=k, node=node)


def _terminal(grid, driver):
    return driver.phi_at(grid.nodes)


def solve_parabolic_measure(grid: SpaceTimeGrid, spec: DiffusionSpec, driver: DriverSpec,
                            mu: Optional[MeasureData] = None, tol: float = 1e-13) -> PDESolution:
    """Implicit Euler for ``du/dt + L u = -f(u, sigma^T grad u) - g(u) q``."""
    if spec.dim != grid.dim:
        raise ValueError("diffusion and grid dimensions differ")
    st = _Stepper(grid, spec, driver, mu)
    N = grid.time.n_steps
    n = grid.n_nodes
    u = np.empty((N + 1, n))
    grad = np.empty((N + 1, n, grid.dim))
    u[N] = _terminal(grid, driver)
    grad[N] = gradient_field(u[N], grid)
    total = 0
    for k in range(N - 1, -1, -1):
        _, M = st.matrix(k)
        dt = float(grid.time.dt[k])
        t = float(grid.time.nodes[k])
        z = _z_of(spec, t, st.nodes, grad[k + 1])
        nxt = u[k + 1]
        G = lambda v: M @ v - dt * st.F(k, v, z) - nxt
        J = lambda v: (M - sparse.diags(dt * st.dF(k, v, z))).tocsc()
        u[k], its = _newton(G, J, nxt, k, tol)
        total += its
        grad[k] = gradient_field(u[k], grid)
    return PDESolution(grid, u, grad, spec=spec, driver=driver, measure=mu, mode="cauchy",
                       newton_iterations=total)


def _obstacle_values(grid, h):
    nodes = grid.nodes
    return np.stack([np.asarray(h(float(t), nodes), dtype=float) * np.ones(nodes.shape[0])
                     for t in grid.time.nodes])


def _check_terminal(grid, driver, H, tol=1e-12):
    gap = _terminal(grid, driver) - H[-1]
    if np.any(gap < -tol):
        i = int(np.argmin(gap))
        raise ValueError(f"terminal value below the obstacle at x={grid.nodes[i]} (gap {gap[i]:.3g})")


def solve_obstacle_projected(grid: SpaceTimeGrid, spec: DiffusionSpec, driver: DriverSpec, h: Callable,
                             tol: float = 1e-11, max_iter: int = 200) -> PDESolution:
    """Implicit obstacle step ``min(u - h, G(u)) = 0`` solved exactly per layer.

    ``G(u) = (I - dt A) u - dt F(u) - u_{k+1}``.  Each layer runs a
    semismooth Newton (policy iteration) on the active set
    ``{u - h < G(u)}``.  The reaction is ``r = G(u) / dt >= 0`` and vanishes
    off the active set.
    """
    st = _Stepper(grid, spec, driver, None)
    N = grid.time.n_steps
    n = grid.n_nodes
    H = _obstacle_values(grid, h)
    _check_terminal(grid, driver, H)
    u = np.empty((N + 1, n))
    grad = np.empty((N + 1, n, grid.dim))
    r = np.zeros((N, n))
    u[N] = _terminal(grid, driver)
    grad[N] = gradient_field(u[N], grid)
    total = 0
    for k in range(N - 1, -1, -1):
        _, M = st.matrix(k)
        dt = float(grid.time.dt[k])
        t = float(grid.time.nodes[k])
        z = _z_of(spec, t, st.nodes, grad[k + 1])
        nxt = u[k + 1]
        hk = H[k]
        G = lambda v: M @ v - dt * st.F(k, v, z) - nxt
        v = np.maximum(nxt, hk)
        active = None
        for it in range(1, max_iter + 1):
            g = G(v)
            new_active = (v - hk) < g
            J = (M - sparse.diags(dt * st.dF(k, v, z))).tocsr()
            rhs = J @ v - g
            # active rows become identity rows pinned to the obstacle
            keep = sparse.diags((~new_active).astype(float))
            pin = sparse.diags(new_active.astype(float))
            Jm = (keep @ J + pin).tocsc()
            rhs = np.where(new_active, hk, rhs)
            v_new = spsolve(Jm, rhs)
            change = float(np.max(np.abs(v_new - v)))
            v = v_new
            # nodes with u = h and G(u) = 0 up to roundoff may flip sets without moving v
            if active is not None and change <= tol * (1 + np.max(np.abs(v))):
                break
            active = new_active
        else:
            raise ConvergenceError(f"obstacle step did not converge at time layer {k}", step=k)
        total += it
        g = G(v)
        resid = np.minimum(v - hk, g)
        if np.max(np.abs(resid)) > 1e-9 * (1 + np.max(np.abs(v))):
            node = int(np.argmax(np.abs(resid)))
            raise ConvergenceError(f"complementarity residual {resid[node]:.3g} at layer {k}", step=k, node=node)
        u[k] = v
        r[k] = np.where(v - hk <= g, np.maximum(g, 0.0), 0.0) / dt
        grad[k] = gradient_field(u[k], grid)
    return PDESolution(grid, u, grad, reaction=r, h_values=H, spec=spec, driver=driver,
                       obstacle=h, mode="obstacle", newton_iterations=total)


def discrete_barrier_residual(grid: SpaceTimeGrid, spec: DiffusionSpec, driver: DriverSpec,
                              h: Callable, H: Optional[np.ndarray] = None) -> np.ndarray:
    """``Phi_k = (h_{k+1} - h_k)/dt + A_k h_k + F_k(h_k)`` on every node, ``(N, nodes)``.

    Uses the same stencils as the solvers, so ``G(h_k) = -dt Phi_k`` when
    ``u_{k+1} = h_{k+1}``.
    """
    st = _Stepper(grid, spec, driver, None)
    if H is None:
        H = _obstacle_values(grid, h)
    N = grid.time.n_steps
    out = np.empty((N, grid.n_nodes))
    for k in range(N):
        A, _ = st.matrix(k)
        dt = float(grid.time.dt[k])
        t = float(grid.time.nodes[k])
        z = _z_of(spec, t, st.nodes, gradient_field(H[k + 1], grid))
        out[k] = (H[k + 1] - H[k]) / dt + A @ H[k] + st.F(k, H[k], z)
    return out


def solve_obstacle_homographic(grid: SpaceTimeGrid, spec: DiffusionSpec, driver: DriverSpec, h: Callable,
                               n_list: Sequence[int], tol: float = 1e-13, mono_tol: float = 1e-6,
                               dom_tol: float = 1e-9) -> PDESolution:
    """Homographic sequence ``mu_n = Phi^- / (1 + n |u_n - h|)``.

    Each layer solves ``G(u) = dt Phi^- abar(u)`` with the decreasing
    ``abar(u) = 1 - n (u - h) / (1 + n |u - h|)`` by damped Newton.  Its
    unique root dominates every root of the homographic equation, and
    it lies above ``h``, so it is the maximal solution.  The returned
    solution is the last member; ``mu_n_sequence`` holds
    ``(n, mu_n, u_n)`` for every ``n``.
    """
    H = _obstacle_values(grid, h)
    _check_terminal(grid, driver, H)
    phi = discrete_barrier_residual(grid, spec, driver, h, H)
    phim = np.maximum(-phi, 0.0)
    st = _Stepper(grid, spec, driver, None)
    N = grid.time.n_steps
    n_nodes = grid.n_nodes
    seq = []
    prev = None
    last = None
    for nn in sorted(n_list):
        u = np.empty((N + 1, n_nodes))
        grad = np.empty((N + 1, n_nodes, grid.dim))
        mu = np.zeros((N, n_nodes))
        u[N] = _terminal(grid, driver)
        grad[N] = gradient_field(u[N], grid)
        total = 0
        for k in range(N - 1, -1, -1):
            _, M = st.matrix(k)
            dt = float(grid.time.dt[k])
            t = float(grid.time.nodes[k])
            z = _z_of(spec, t, st.nodes, grad[k + 1])
            nxt = u[k + 1]
            hk = H[k]
            pk = dt * phim[k]

            def abar(v):
                dv = v - hk
                return 1.0 - nn * dv / (1.0 + nn * np.abs(dv))

            def dabar(v):
                return -nn / (1.0 + nn * np.abs(v - hk)) ** 2

            G = lambda v: M @ v - dt * st.F(k, v, z) - nxt - pk * abar(v)
            J = lambda v: (M - sparse.diags(dt * st.dF(k, v, z) + pk * dabar(v))).tocsc()
            start = np.maximum(nxt, hk) + pk
            v, its = _newton(G, J, start, k, tol)
            total += its
            u[k] = v
            mu[k] = phim[k] / (1.0 + nn * np.abs(v - hk))
            grad[k] = gradient_field(v, grid)
        dom = float((u - H).min())
        if dom < -dom_tol:
            raise MonotonicityError(f"u_n dips {-dom:.3g} below the obstacle at n={nn}", n=nn, excess=-dom)
        if prev is not None:
            rise = float((u - prev).max())
            if rise > mono_tol:
                raise MonotonicityError(f"u_n increased by {rise:.3g} at n={nn}", n=nn, excess=rise)
        seq.append((int(nn), mu, u))
        prev = u
        last = PDESolution(grid, u, grad, reaction=mu, h_values=H, phi_minus=phim, spec=spec, driver=driver,
                           obstacle=h, mode="homographic", newton_iterations=total)
    last.mu_n_sequence = seq
    return last


# --------------------------------------------------------------------------
# diagnostics


def obstacle_residual(sol: PDESolution) -> np.ndarray:
    """Discrete ``-(du/dt + L u + F(u))`` on every layer, ``(N, nodes)``."""
    grid = sol.grid
    st = _Stepper(grid, sol.spec, sol.driver, sol.measure)
    N = grid.time.n_steps
    out = np.empty((N, grid.n_nodes))
    for k in range(N):
        A, M = st.matrix(k)
        dt = float(grid.time.dt[k])
        t = float(grid.time.nodes[k])
        z = _z_of(sol.spec, t, st.nodes, sol.grad_u[k + 1])
        out[k] = (M @ sol.u[k] - dt * st.F(k, sol.u[k], z) - sol.u[k + 1]) / dt
    return out


@dataclass
class ReactionReport:
    alpha_hat: np.ndarray
    defined: np.ndarray
    in_range: bool
    support_ok: bool
    min_alpha: float
    max_alpha: float


def recover_reaction_density(sol: PDESolution, phi_minus: Optional[np.ndarray] = None,
                             tol: float = 1e-6, denom_tol: float = 1e-12,
                             band: Optional[float] = None) -> ReactionReport:
    """``alpha_hat = r / Phi^-`` where ``Phi^- > denom_tol``; NaN elsewhere."""
    if sol.reaction is None or sol.h_values is None:
        raise ValueError("needs an obstacle solution")
    if phi_minus is None:
        phi_minus = sol.phi_minus
    if phi_minus is None:
        phi = discrete_barrier_residual(sol.grid, sol.spec, sol.driver, sol.obstacle, sol.h_values)
        phi_minus = np.maximum(-phi, 0.0)
    if band is None:
        band = 2.0 * max(sol.grid.dx)
    defined = phi_minus > denom_tol
    ah = np.full(phi_minus.shape, np.nan)
    ah[defined] = sol.reaction[defined] / phi_minus[defined]
    vals = ah[defined]
    in_range = bool(np.all((vals >= -tol) & (vals <= 1 + tol))) if vals.size else True
    off = np.abs(sol.u[:-1] - sol.h_values[:-1]) > band
    support_ok = bool(np.all(np.abs(np.where(defined & off, ah, 0.0)) <= tol))
    mn = float(vals.min()) if vals.size else math.nan
    mx = float(vals.max()) if vals.size else math.nan
    return ReactionReport(ah, defined, in_range, support_ok, mn, mx)


@dataclass
class PDELSReport:
    n_violations: int
    lower_excess: float
    upper_excess: float
    n_checked: int

    @property
    def ok(self) -> bool:
        return self.n_violations == 0


def check_pde_lewy_stampacchia(sol: PDESolution, h: Optional[Callable] = None, spec: Optional[DiffusionSpec] = None,
                               band: Optional[float] = None, tol: float = 1e-8) -> PDELSReport:
    """Nodewise ``0 <= -(du/dt + L u + f_u) <= 1{|u - h| <= band} Phi^-`` (symmetric ``L`` only)."""
    spec = spec or sol.spec
    h = h or sol.obstacle
    probe = sol.grid.nodes
    for t in sol.grid.time.nodes[:: max(1, sol.grid.time.n_steps // 8)]:
        if np.any(np.abs(spec.b_at(float(t), probe)) > 0):
            raise ValueError("the two-sided bound is stated for symmetric operators (b = 0)")
    if band is None:
        band = 2.0 * max(sol.grid.dx)
    H = sol.h_values if sol.h_values is not None else _obstacle_values(sol.grid, h)
    res = obstacle_residual(sol)
    phi = discrete_barrier_residual(sol.grid, spec, sol.driver, h, H)
    phim = np.maximum(-phi, 0.0)
    contact = np.abs(sol.u[:-1] - H[:-1]) <= band
    interior = ~sol.grid.boundary
    scale = tol * (1.0 + np.abs(sol.u[:-1]).max())
    lower = np.where(interior, -res, -np.inf)
    upper = np.where(interior, res - np.where(contact, phim, 0.0), -np.inf)
    bad = (lower > scale) | (upper > scale)
    return PDELSReport(int(bad.sum()), float(max(lower.max(), 0.0)), float(max(upper.max(), 0.0)),
                       int(interior.sum()) * sol.grid.time.n_steps)


def weighted_l2(values: np.ndarray, grid: SpaceTimeGrid, weight: Optional[WeightSpec] = None,
                layer: Optional[int] = None) -> float:
    """``sqrt(sum v^2 rho^2 dx dt)`` over space-time, or over one layer when ``layer`` is set."""
    rho2 = np.ones(grid.n_nodes) if weight is None else weight_eval(weight, grid.nodes) ** 2
    vol = grid.cell_volume
    if layer is not None:
        return math.sqrt(float(np.sum(values[layer] ** 2 * rho2) * vol))
    v = values[:-1] if values.shape[0] == grid.time.n_steps + 1 else values
    dt = grid.time.dt[: v.shape[0]]
    return math.sqrt(float(np.sum((v ** 2 * rho2[None, :]).sum(axis=1) * dt) * vol))


def restrict(fine: np.ndarray, fine_grid: SpaceTimeGrid, coarse_grid: SpaceTimeGrid) -> np.ndarray:
    """Sample a fine ``(N_f+1, nodes_f)`` field on the coarse nodes."""
    tf = fine_grid.time.n_steps // coarse_grid.time.n_steps
    sf = tuple((nf - 1) // (nc - 1) for nf, nc in zip(fine_grid.n_space, coarse_grid.n_space))
    arr = fine[::tf].reshape((-1,) + fine_grid.n_space)
    sl = (slice(None),) + tuple(slice(None, None, s) for s in sf)
    return arr[sl].reshape(arr.shape[0], -1)


@dataclass
class SelfConvergence:
    errors: list
    ratios: list
    solutions: list


def self_convergence(solve: Callable[[SpaceTimeGrid], PDESolution], grid: SpaceTimeGrid, levels: int = 2,
                     weight: Optional[WeightSpec] = None) -> SelfConvergence:
    """Successive-refinement changes ``|u_{l+1} - u_l|`` in the weighted norm on the coarsest grid.

    ``errors[l]`` compares level ``l`` with level ``l + 1``; ``ratios`` are
    consecutive error quotients.
    """
    grids = [grid]
    for _ in range(levels):
        grids.append(grids[-1].refine())
    sols = [solve(g) for g in grids]
    errs = []
    for l in range(levels):
        a = restrict(sols[l].u, grids[l], grid)
        b = restrict(sols[l + 1].u, grids[l + 1], grid)
        errs.append(weighted_l2(a - b, grid, weight))
    ratios = [errs[i] / errs[i + 1] if errs[i + 1] > 0 else math.inf for i in range(len(errs) - 1)]
    return SelfConvergence(errs, ratios, sols)
