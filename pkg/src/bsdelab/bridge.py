"""Cross-validation between the PDE solvers and the backward schemes:
``u(s, x) = Y^{s,x}_s``, ``Z = sigma^T grad u`` and the pairing between a
measure and its additive functional.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .core import DiffusionSpec, DriverSpec, MeasureData, TimeGrid, as_points, sigma_from_a
from .engine import LatticeEngine, RegressionEngine, along
from .errors import SpecMismatchError
from .forward import accumulate_functional, build_lattice, gaussian_density, path_blocks, simulate_paths
from .gbsde import solve_gbsde
from .pde import PDESolution
from .rbsde import decompose_obstacle, solve_rbsde_reflected


@dataclass(frozen=True, eq=False)
class BridgeInputs:
    """Data handed to the backward side; must be the objects the PDE was solved with."""

    spec: DiffusionSpec
    driver: DriverSpec
    measure: Optional[MeasureData] = None
    obstacle: Optional[Callable] = None


@dataclass
class BridgeReport:
    points: list
    pde_value: list
    mc_value: list
    mc_stderr: list
    z_gap: list
    allowance: list
    passes: list
    k_mu_gap: float = math.nan
    mode: str = "monte-carlo"

    @property
    def passed(self) -> bool:
        return all(self.passes)

    @property
    def max_z_gap(self) -> float:
        vals = [z for z in self.z_gap if not math.isnan(z)]
        return max(vals) if vals else math.nan

    def rows(self) -> list:
        out = []
        for i, (s, x) in enumerate(self.points):
            out.append({"s": s, "x": ";".join(repr(float(v)) for v in np.atleast_1d(x)),
                        "pde": self.pde_value[i], "bsde": self.mc_value[i], "stderr": self.mc_stderr[i],
                        "gap": abs(self.pde_value[i] - self.mc_value[i]), "allowance": self.allowance[i],
                        "z_gap": self.z_gap[i], "pass": self.passes[i]})
        return out

    def to_csv(self, path) -> None:
        rows = self.rows()
        cols = ["s", "x", "pde", "bsde", "stderr", "gap", "allowance", "z_gap", "pass"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in rows:
                w.writerow([r[c] if isinstance(r[c], (str, bool)) else repr(float(r[c])) for c in cols])

    def summary(self) -> str:
        lines = [f"{'s':>6} {'x':>16} {'pde':>12} {'bsde':>12} {'stderr':>10} {'gap':>10} {'allow':>10}  ok"]
        for r in self.rows():
            lines.append(f"{r['s']:6.3f} {r['x']:>16} {r['pde']:12.6f} {r['bsde']:12.6f} {r['stderr']:10.2e} "
                         f"{r['gap']:10.2e} {r['allowance']:10.2e}  {'yes' if r['pass'] else 'NO'}")
        return "\n".join(lines)


def _check_inputs(pde: PDESolution, inputs: BridgeInputs) -> None:
    pairs = (("diffusion", pde.spec, inputs.spec), ("driver", pde.driver, inputs.driver),
             ("measure", pde.measure, inputs.measure), ("obstacle", pde.obstacle, inputs.obstacle))
    for what, a, b in pairs:
        if a is not b:
            raise SpecMismatchError(f"{what} differs between the PDE solution and the backward inputs")


def compare_representation(pde: PDESolution, inputs: BridgeInputs, points: Sequence, n_paths: int = 10000,
                           seed: int = 0, mode: str = "monte-carlo", abs_allowance: float = 1e-3,
                           rel_allowance: float = 0.0, basis_order: int = 3, n_space: Optional[int] = None
                           ) -> BridgeReport:
    """Solve the backward equation from each ``(s, x)`` and compare with ``u``.

    Monte Carlo runs use the PDE time step from ``s``; lattice runs reuse
    the PDE box and spacing.  A point passes when
    ``|u - Y| <= 3 stderr + abs_allowance + rel_allowance |u|``.  ``z_gap``
    is the path-averaged ``||Z - sigma^T grad u|| / ||Z||``.
    """
    _check_inputs(pde, inputs)
    if mode not in ("monte-carlo", "lattice"):
        raise ValueError(f"unknown mode {mode!r}")
    tg = pde.grid.time
    spec, driver = inputs.spec, inputs.driver
    obstacle = None
    if inputs.obstacle is not None:
        obstacle = decompose_obstacle(inputs.obstacle, driver, spec)
    rep = BridgeReport([], [], [], [], [], [], [], mode=mode)
    for j, (s, x) in enumerate(points):
        x = np.asarray(x, dtype=float).reshape(spec.dim)
        k0 = tg.index_of(float(s))
        sub = tg.sub_grid(float(s))
        if mode == "monte-carlo":
            paths = simulate_paths(spec, sub, (float(s), x), n_paths, seed + j)
            R = accumulate_functional(paths, inputs.measure) if inputs.measure is not None else None
            eng = RegressionEngine(paths, R, basis_order)
        else:
            lat = build_lattice(spec, sub, pde.grid.lo, pde.grid.hi, n_space or pde.grid.n_space)
            eng = LatticeEngine(lat, inputs.measure)
        if obstacle is None:
            sol = solve_gbsde(eng, driver)
        else:
            sol = solve_rbsde_reflected(eng, driver, obstacle)
        if mode == "monte-carlo":
            y, se = float(np.mean(sol.Y[:, 0])), float(sol.report.y0_stderr)
        else:
            y, se = float(lat.interpolate(sol.Y[:, 0], x)[0]), 0.0
        u = float(pde.value(x, k=k0)[0])
        zg = _z_gap(sol, pde, spec, eng, k0, x)
        allow = 3.0 * se + abs_allowance + rel_allowance * abs(u)
        rep.points.append((float(s), x.tolist() if spec.dim > 1 else float(x[0])))
        rep.pde_value.append(u)
        rep.mc_value.append(y)
        rep.mc_stderr.append(se)
        rep.z_gap.append(zg)
        rep.allowance.append(allow)
        rep.passes.append(abs(u - y) <= allow)
    return rep


def _z_gap(sol, pde: PDESolution, spec: DiffusionSpec, eng, k0: int, x, zero_tol: float = 1e-8) -> float:
    grid = sol.grid
    N = grid.n_steps
    dt = grid.dt
    num = 0.0
    den = 0.0
    den_ref = 0.0
    if eng.mode == "lattice":
        pi = eng.occupation(eng.start_index(x))
        nodes = eng.lattice.nodes
        for k in range(N):
            t = float(grid.nodes[k])
            g = pde.gradient(nodes, k=k0 + k)
            ref = np.einsum("nji,nj->ni", sigma_from_a(spec, t, nodes).reshape(-1, spec.dim, spec.dim), g)
            w = pi[k] * dt[k]
            num += float(np.sum(w * np.sum((sol.Z[:, k] - ref) ** 2, axis=1)))
            den += float(np.sum(w * np.sum(sol.Z[:, k] ** 2, axis=1)))
            den_ref += float(np.sum(w * np.sum(ref ** 2, axis=1)))
    else:
        for k in range(1, N):
            t = float(grid.nodes[k])
            xs = eng.states(k)
            g = pde.gradient(np.clip(xs, pde.grid.lo, pde.grid.hi), k=k0 + k)
            ref = np.einsum("nji,nj->ni", sigma_from_a(spec, t, xs).reshape(-1, spec.dim, spec.dim), g)
            num += float(np.mean(np.sum((sol.Z[:, k] - ref) ** 2, axis=1))) * dt[k]
            den += float(np.mean(np.sum(sol.Z[:, k] ** 2, axis=1))) * dt[k]
            den_ref += float(np.mean(np.sum(ref ** 2, axis=1))) * dt[k]
    # both fields vanish (e.g. space-independent solutions): nothing to compare
    if max(den, den_ref) <= zero_tol ** 2:
        return 0.0
    return math.sqrt(num / den) if den > 0 else math.inf


# --------------------------------------------------------------------------
# measure <-> additive functional


@dataclass
class CorrespondenceResult:
    lhs: float
    rhs: float
    gap: float
    stderr: float

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.gap))

    @property
    def within(self) -> float:
        """Gap in units of the standard error (inf when the error is zero and the gap is not)."""
        if self.stderr > 0:
            return self.gap / self.stderr
        return 0.0 if self.gap == 0 else math.inf


def _hermite(order: int, d: int):
    z, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / math.sqrt(2 * math.pi)
    if d == 1:
        return z.reshape(-1, 1), w
    Z1, Z2 = np.meshgrid(z, z, indexing="ij")
    W = np.outer(w, w).reshape(-1)
    return np.stack([Z1.reshape(-1), Z2.reshape(-1)], axis=1), W


def gaussian_pairing(spec: DiffusionSpec, density: Callable, xi: Callable, s: float, x, T: float,
                     order: int = 60, epsabs: float = 1e-12, epsrel: float = 1e-10) -> float:
    """``int_s^T int xi(t, y) p(s, x, t, y) q(t, y) dy dt`` for constant coefficients.

    The space integral uses Gauss-Hermite nodes in the variable
    ``y = x + b (t - s) + sigma sqrt(t - s) w``; time is adaptive.
    """
    if not spec.is_constant:
        raise ValueError("closed-form pairing needs constant coefficients")
    d = spec.dim
    x = np.asarray(x, dtype=float).reshape(d)
    W, wts = _hermite(order, d)
    sig = np.linalg.cholesky(spec.const_a)

    def inner(t):
        h = t - s
        if h <= 0:
            y = np.tile(x, (1, 1))
            return float(np.asarray(xi(t, y))[0] * np.asarray(density(t, y))[0])
        y = x + spec.const_b * h + math.sqrt(h) * W @ sig.T
        return float(np.sum(wts * np.asarray(xi(t, y)) * np.asarray(density(t, y))))

    return float(integrate.quad(inner, s, T, epsabs=epsabs, epsrel=epsrel, limit=200)[0])


def verify_measure_correspondence(spec: DiffusionSpec, mu: MeasureData, xi: Callable, point, T: float,
                                  n_paths: int = 20000, seed: int = 0, n_steps: int = 200,
                                  lattice=None) -> CorrespondenceResult:
    """``E int xi dR`` by simulation against ``int int xi p q`` by quadrature.

    The right side uses the closed-form Gaussian density, or the occupation
    law of ``lattice`` (a :class:`MarkovLattice` starting at ``s``) when
    given.
    """
    s, x = point
    x = np.asarray(x, dtype=float).reshape(spec.dim)
    grid = TimeGrid(float(s), float(T), n_steps)
    total = 0.0
    total2 = 0.0
    for X, _ in path_blocks(spec, grid, (float(s), x), n_paths, seed):
        acc = np.zeros(X.shape[0])
        for k in range(n_steps):
            t = float(grid.nodes[k])
            acc += np.asarray(xi(t, X[:, k]), dtype=float) * mu.density_at(t, X[:, k]) * grid.dt[k]
        total += float(acc.sum())
        total2 += float((acc * acc).sum())
    mean = total / n_paths
    var = max(total2 / n_paths - mean * mean, 0.0) * n_paths / max(n_paths - 1, 1)
    se = math.sqrt(var / n_paths)
    if lattice is None:
        rhs = gaussian_pairing(spec, lambda t, y: mu.density_at(t, y), xi, float(s), x, float(T))
    else:
        rhs = lattice_pairing(lattice, lambda k, t, y: np.asarray(xi(t, y)) * mu.density_at(t, y) *
                              lattice.grid.dt[k], x)
    return CorrespondenceResult(mean, rhs, abs(mean - rhs), se)


def lattice_pairing(lattice, increment: Callable, x) -> float:
    """``sum_k sum_y pi_k(y) increment(k, t_k, y)`` under the chain from the node nearest ``x``."""
    pi = lattice.distribution(int(lattice.nearest_index(x)[0]))
    nodes = lattice.nodes
    total = 0.0
    for k in range(lattice.grid.n_steps):
        total += float(pi[k] @ np.asarray(increment(k, float(lattice.grid.nodes[k]), nodes), dtype=float))
    return total


@dataclass
class ControlMeasureReport:
    bsde_pairings: list
    pde_pairings: list
    gaps: list
    stderr: list
    passes: list

    @property
    def passed(self) -> bool:
        return all(self.passes)


def verify_control_measure(rbsde_sol, pde_sol: PDESolution, test_fns: Sequence[Callable], x,
                           rel_tol: float = 0.05, abs_tol: float = 1e-10) -> ControlMeasureReport:
    """Pair test functions with ``dK`` (backward side) and with ``r dt`` (PDE side).

    Both sides integrate against the law of ``X`` from ``x`` at the first
    node of ``rbsde_sol``: the lattice occupation law (or the simulated
    paths) for ``dK``; for ``r`` the same law, with ``r`` interpolated from
    the PDE nodes onto the states.
    """
    from scipy.interpolate import RegularGridInterpolator

    grid = rbsde_sol.grid
    tg = pde_sol.grid.time
    k0 = tg.index_of(grid.t0)
    N = grid.n_steps
    eng = rbsde_sol.engine
    x = np.asarray(x, dtype=float).reshape(eng.dim)
    lattice_mode = rbsde_sol.mode == "lattice"
    if lattice_mode:
        pi = eng.occupation(eng.start_index(x))
    if pde_sol.reaction is None:
        raise ValueError("PDE solution carries no reaction density")
    if tg.n_steps - k0 != N:
        raise ValueError("time grids of the two solutions differ")
    bs, pd, gaps, ses, ok = [], [], [], [], []
    for xi in test_fns:
        acc_b = np.zeros(eng.n_states) if not lattice_mode else 0.0
        acc_p = np.zeros(eng.n_states) if not lattice_mode else 0.0
        for k in range(N):
            t = float(grid.nodes[k])
            states = eng.states(k)
            xv = np.asarray(xi(t, states), dtype=float) * np.ones(states.shape[0])
            interp = RegularGridInterpolator(pde_sol.grid.axes, pde_sol.reaction[k0 + k].reshape(pde_sol.grid.n_space),
                                             bounds_error=False, fill_value=0.0)
            rv = interp(states) * grid.dt[k]
            if lattice_mode:
                acc_b += float(pi[k] @ (xv * rbsde_sol.dK[:, k]))
                acc_p += float(pi[k] @ (xv * rv))
            else:
                acc_b = acc_b + xv * rbsde_sol.dK[:, k]
                acc_p = acc_p + xv * rv
        if lattice_mode:
            b, p, se = float(acc_b), float(acc_p), 0.0
        else:
            b, p = float(np.mean(acc_b)), float(np.mean(acc_p))
            se = float(np.std(acc_b - acc_p, ddof=1) / math.sqrt(acc_b.size))
        gap = abs(b - p)
        bs.append(b)
        pd.append(p)
        gaps.append(gap)
        ses.append(se)
        ok.append(gap <= 3 * se + rel_tol * max(abs(b), abs(p)) + abs_tol)
    return ControlMeasureReport(bs, pd, gaps, ses, ok)
