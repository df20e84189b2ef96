"""Simulation and lattice discretisation of the diffusion driven by the
divergence-form operator, plus the additive functional of a measure.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from .core import DiffusionSpec, MeasureData, TimeGrid, as_points, sigma_from_a
from .errors import CFLError

_MAGIC = b"BSDLPATH"
_VERSION = 1
_HEADER = struct.Struct("<8sIIIIqdd")  # magic, version, d, n_paths, n_steps, seed, t0, T


def _rng_for_block(seed: int, block: int) -> np.random.Generator:
    """Counter-based stream for one path block."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), block])))


@dataclass(frozen=True, eq=False)
class PathBundle:
    """Simulated paths: ``X`` is ``(P, N+1, d)``, ``dB`` is ``(P, N, d)``."""

    grid: TimeGrid
    start: tuple
    X: np.ndarray
    dB: np.ndarray
    seed: int

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[2]

    def to_binary(self, path) -> None:
        """Write the flat layout: fixed header then row-major float64 X, dB."""
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _VERSION, self.dim, self.n_paths, self.grid.n_steps,
                                  int(self.seed), float(self.grid.t0), float(self.grid.T)))
            fh.write(np.ascontiguousarray(self.grid.nodes, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.X, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.dB, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "PathBundle":
        with open(path, "rb") as fh:
            raw = fh.read()
        magic, version, d, P, N, seed, t0, T = _HEADER.unpack_from(raw, 0)
        if magic != _MAGIC or version != _VERSION:
            raise ValueError(f"{path}: not a path bundle (magic={magic!r}, version={version})")
        off = _HEADER.size
        nodes = np.frombuffer(raw, "<f8", N + 1, off)
        off += 8 * (N + 1)
        X = np.frombuffer(raw, "<f8", P * (N + 1) * d, off).reshape(P, N + 1, d).copy()
        off += 8 * X.size
        dB = np.frombuffer(raw, "<f8", P * N * d, off).reshape(P, N, d).copy()
        grid = TimeGrid(t0, T, N, nodes.copy())
        return cls(grid, (t0, X[0, 0].copy()), X, dB, seed)

    def to_csv(self, path, max_paths: int = 1000) -> None:
        """Long format ``path, node, time, x_1..x_d`` for small runs."""
        if self.n_paths > max_paths:
            raise ValueError(f"CSV export limited to {max_paths} paths; use to_binary")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "node", "time"] + [f"x{i + 1}" for i in range(self.dim)])
            for p in range(self.n_paths):
                for k, t in enumerate(self.grid.nodes):
                    w.writerow([p, k, repr(float(t))] + [repr(float(v)) for v in self.X[p, k]])


def path_blocks(spec: DiffusionSpec, grid: TimeGrid, start, n_paths: int, seed: int,
                block_size: int = 8192):
    """Yield ``(X, dB)`` for consecutive path blocks.

    Increments for paths ``[j*block_size, (j+1)*block_size)`` come from an
    independent Philox stream keyed by ``(seed, j)``, so the output does not
    depend on how blocks are scheduled or consumed.
    """
    s, x0 = start
    if abs(float(s) - grid.t0) > 1e-12:
        raise ValueError(f"start time {s} must equal grid.t0 = {grid.t0}")
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    d = spec.dim
    x0 = np.asarray(x0, dtype=float).reshape(d)
    N = grid.n_steps
    dt = grid.dt
    sq = np.sqrt(dt)[None, :, None]
    const_sig = sigma_from_a(spec, grid.t0, x0) if spec.is_constant else None
    for j, lo in enumerate(range(0, n_paths, block_size)):
        m = min(lo + block_size, n_paths) - lo
        dB = _rng_for_block(seed, j).standard_normal((m, N, d)) * sq
        X = np.empty((m, N + 1, d))
        X[:, 0] = x0
        for k in range(N):
            t = float(grid.nodes[k])
            xk = X[:, k]
            mu = spec.drift(t, xk)
            if const_sig is not None:
                noise = dB[:, k] @ const_sig.T
            else:
                sig = sigma_from_a(spec, t, xk).reshape(m, d, d)
                noise = np.einsum("pij,pj->pi", sig, dB[:, k])
            X[:, k + 1] = xk + mu * dt[k] + noise
        yield X, dB


def simulate_paths(spec: DiffusionSpec, grid: TimeGrid, start, n_paths: int, seed: int,
                   block_size: int = 8192) -> PathBundle:
    """Euler-Maruyama paths of the Ito diffusion with drift ``b + 1/2 div a``.

    Blocks come from :func:`path_blocks`, so results are bit-identical for
    identical inputs.
    """
    blocks = list(path_blocks(spec, grid, start, n_paths, seed, block_size))
    X = np.concatenate([b[0] for b in blocks], axis=0)
    dB = np.concatenate([b[1] for b in blocks], axis=0)
    x0 = np.asarray(start[1], dtype=float).reshape(spec.dim)
    return PathBundle(grid, (float(start[0]), x0), X, dB, int(seed))


@dataclass(frozen=True, eq=False)
class FunctionalPath:
    """Additive functional ``R`` of shape ``(P, N+1)`` with ``R[:, 0] = 0``."""

    R: np.ndarray

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.R, axis=1)

    def between(self, j: int, k: int) -> np.ndarray:
        return self.R[:, k] - self.R[:, j]


def accumulate_functional(paths: PathBundle, mu: MeasureData) -> FunctionalPath:
    """Left-point sums ``R_k = sum_{j<k} q(tau_j, X_j) dt_j``."""
    P, N = paths.n_paths, paths.grid.n_steps
    inc = np.empty((P, N))
    for k in range(N):
        t = float(paths.grid.nodes[k])
        inc[:, k] = mu.density_at(t, paths.X[:, k]) * paths.grid.dt[k]
    R = np.zeros((P, N + 1))
    np.cumsum(inc, axis=1, out=R[:, 1:])
    return FunctionalPath(R)


def gaussian_density(s: float, x, t: float, y, spec: DiffusionSpec):
    """Transition density of the constant-coefficient diffusion.

    ``y`` may be one point or ``(m, d)`` points; returns a float or ``(m,)``.
    """
    if not spec.is_constant:
        raise ValueError("gaussian_density needs constant coefficients (DiffusionSpec.constant)")
    if not t > s:
        raise ValueError(f"need t > s, got s={s}, t={t}")
    d = spec.dim
    x = np.asarray(x, dtype=float).reshape(d)
    yarr = np.asarray(y, dtype=float)
    single = yarr.ndim == 0 or (yarr.ndim == 1 and (d > 1 or yarr.shape[0] == 1))
    Y = as_points(yarr if yarr.ndim else yarr.reshape(1), d)
    h = t - s
    cov = spec.const_a * h
    diff = Y - (x + spec.const_b * h)
    sol = np.linalg.solve(cov, diff.T).T
    quad = np.sum(diff * sol, axis=1)
    norm = 1.0 / math.sqrt((2 * math.pi) ** d * np.linalg.det(cov))
    val = norm * np.exp(-0.5 * quad)
    return float(val[0]) if single else val


# --------------------------------------------------------------------------
# lattice


def _trinomial(a, mu, dt, dx):
    """Up / mid / down weights matching mean ``mu dt`` and second moment ``a dt``."""
    r = a * dt / dx ** 2
    m = mu * dt / dx
    return 0.5 * (r + m), 1.0 - r, 0.5 * (r - m)


@dataclass(frozen=True, eq=False)
class MarkovLattice:
    """Trinomial (tensor in 2D) Markov chain on a uniform box.

    ``transition[k]`` and ``brownian[k][i]`` are CSR matrices; the latter
    give ``E[Delta B_i ; x -> y]`` surrogates so that
    ``(brownian[k][i] @ v)[x] = E[v(X_{k+1}) Delta B_i | X_k = x]``.
    Boundary nodes are absorbing.
    """

    grid: TimeGrid
    axes: tuple
    nodes: np.ndarray
    transition: list
    brownian: list
    boundary: np.ndarray
    spec: DiffusionSpec

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(len(ax) for ax in self.axes)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def dx(self) -> tuple:
        return tuple(float(ax[1] - ax[0]) for ax in self.axes)

    def expect(self, k: int, v: np.ndarray) -> np.ndarray:
        """``E[v(X_{k+1}) | X_k]`` at every node."""
        return self.transition[k] @ v

    def expect_dB(self, k: int, v: np.ndarray) -> np.ndarray:
        """``E[v(X_{k+1}) Delta B_k | X_k]``, shape ``(n, d)``."""
        return np.stack([W @ v for W in self.brownian[k]], axis=-1)

    def distribution(self, start: int, k_from: int = 0) -> np.ndarray:
        """Occupation probabilities ``(N+1-k_from, n)`` of the chain started at node ``start``."""
        N = self.grid.n_steps
        out = np.zeros((N + 1 - k_from, self.n_nodes))
        out[0, start] = 1.0
        for j, k in enumerate(range(k_from, N)):
            out[j + 1] = self.transition[k].T @ out[j]
        return out

    def sample_chain(self, start: int, n_paths: int, seed: int, k_from: int = 0) -> np.ndarray:
        """Index paths ``(n_paths, N+1-k_from)`` of the chain from node ``start``."""
        rng = _rng_for_block(seed, 0)
        N = self.grid.n_steps
        idx = np.empty((n_paths, N + 1 - k_from), dtype=np.int64)
        idx[:, 0] = start
        for j, k in enumerate(range(k_from, N)):
            P = self.transition[k]
            u = rng.random(n_paths)
            cur = idx[:, j]
            lo = P.indptr[cur]
            cnt = P.indptr[cur + 1] - lo
            nxt = np.empty(n_paths, dtype=np.int64)
            # rows hold at most 9 entries; walk the cumulative weights
            acc = np.zeros(n_paths)
            chosen = np.zeros(n_paths, dtype=bool)
            for e in range(int(cnt.max())):
                has = e < cnt
                pos = np.where(has, lo + e, 0)
                acc = acc + np.where(has, P.data[pos], 0.0)
                take = has & ~chosen & ((u < acc) | (e == cnt - 1))
                nxt[take] = P.indices[pos[take]]
                chosen |= take
            idx[:, j + 1] = nxt
        return idx

    def nearest_index(self, x) -> np.ndarray:
        pts = as_points(x, self.dim)
        flat = np.zeros(pts.shape[0], dtype=np.int64)
        for i, ax in enumerate(self.axes):
            j = np.clip(np.rint((pts[:, i] - ax[0]) / (ax[1] - ax[0])), 0, len(ax) - 1).astype(np.int64)
            flat = flat * len(ax) + j
        return flat

    def interpolate(self, values: np.ndarray, x) -> np.ndarray:
        """Piecewise (bi)linear interpolation of node values at points ``x``."""
        from scipy.interpolate import RegularGridInterpolator

        pts = as_points(x, self.dim)
        v = np.asarray(values, dtype=float).reshape(self.shape + np.shape(values)[1:])
        interp = RegularGridInterpolator(self.axes, v, bounds_error=False, fill_value=None)
        return interp(pts)


def default_box(spec: DiffusionSpec, grid: TimeGrid, center) -> tuple:
    half = 6.0 * math.sqrt(spec.lambda_hi * (grid.T - grid.t0))
    c = np.asarray(center, dtype=float).reshape(spec.dim)
    return c - half, c + half


def check_lattice_cfl(spec: DiffusionSpec, grid: TimeGrid, space_lo, space_hi, n_space) -> float:
    """Validate lattice weights without building the chain; returns the worst ``a dt / dx^2``.

    Raises :class:`CFLError` naming the required ``n_steps``.
    """
    d = spec.dim
    lo = np.broadcast_to(np.asarray(space_lo, dtype=float), (d,))
    hi = np.broadcast_to(np.asarray(space_hi, dtype=float), (d,))
    ns = np.broadcast_to(np.asarray(n_space, dtype=int), (d,))
    axes = [np.linspace(lo[i], hi[i], ns[i])[1:-1] for i in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    dxs = (hi - lo) / (ns - 1)
    worst = 0.0
    amax = 0.0
    for k in range(grid.n_steps):
        t = float(grid.nodes[k])
        a = spec.a_at(t, pts)
        diag = np.stack([a[:, i, i] for i in range(d)], axis=1)
        amax = max(amax, float(np.max(diag / dxs ** 2)))
        worst = max(worst, float(np.max(diag * grid.dt[k] / dxs ** 2)))
        peclet = np.abs(spec.drift(t, pts)) * dxs / diag
        if np.any(peclet > 1.0 + 1e-12):
            raise CFLError(f"lattice drift too strong at step {k}: |mu| dx / a = "
                           f"{float(np.max(peclet)):.4g} > 1; refine the space grid")
        if spec.is_constant:
            break
    if worst > 1.0 + 1e-12:
        need = int(math.ceil((grid.T - grid.t0) * amax - 1e-9))
        raise CFLError(f"lattice CFL violated: a*dt/dx^2 = {worst:.4g} > 1; need n_steps >= {need}",
                       required_n_steps=need)
    return worst


def build_lattice(spec: DiffusionSpec, grid: TimeGrid, space_lo=None, space_hi=None,
                  n_space=101, center=None, diag_tol: float = 1e-12) -> MarkovLattice:
    """Trinomial lattice with per-step moment matching.

    ``n_space`` is the node count per dimension.  Without an explicit box the
    default ``center +/- 6 sqrt(Lambda T)`` is used.  Raises
    :class:`CFLError` when some weight would be negative.
    """
    d = spec.dim
    if d > 2:
        raise ValueError("lattices are limited to d <= 2; use Monte Carlo for higher dimension")
    if space_lo is None or space_hi is None:
        lo, hi = default_box(spec, grid, np.zeros(d) if center is None else center)
        space_lo = lo if space_lo is None else space_lo
        space_hi = hi if space_hi is None else space_hi
    lo = np.broadcast_to(np.asarray(space_lo, dtype=float), (d,))
    hi = np.broadcast_to(np.asarray(space_hi, dtype=float), (d,))
    ns = np.broadcast_to(np.asarray(n_space, dtype=int), (d,))
    if np.any(ns < 3):
        raise ValueError("need at least 3 space nodes per dimension")
    if np.any(hi <= lo):
        raise ValueError("space_hi must exceed space_lo")
    axes = tuple(np.linspace(lo[i], hi[i], ns[i]) for i in range(d))
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.reshape(-1) for m in mesh], axis=1)
    n = nodes.shape[0]
    dxs = np.array([ax[1] - ax[0] for ax in axes])
    multi = np.stack(np.unravel_index(np.arange(n), tuple(ns)), axis=1)
    boundary = np.any((multi == 0) | (multi == ns - 1), axis=1)
    interior = ~boundary

    transitions, brownians = [], []
    prev_key = None
    for k in range(grid.n_steps):
        t = float(grid.nodes[k])
        dt = float(grid.dt[k])
        a = spec.a_at(t, nodes)
        mu = spec.drift(t, nodes)
        key = (dt, a.tobytes(), mu.tobytes())
        if key == prev_key:
            transitions.append(transitions[-1])
            brownians.append(brownians[-1])
            continue
        if d == 2:
            off = np.abs(a[:, 0, 1])
            if np.any(off[interior] > diag_tol * (1 + np.abs(a[interior, 0, 0]))):
                raise ValueError("2D lattices need a diagonal diffusion matrix")
        diag = np.stack([a[:, i, i] for i in range(d)], axis=1)
        ratio = diag * dt / dxs ** 2
        worst = float(np.max(ratio[interior]))
        if worst > 1.0 + 1e-12:
            need = int(math.ceil((grid.T - grid.t0) * float(np.max(diag[interior] / dxs ** 2)) - 1e-9))
            raise CFLError(f"lattice CFL violated at step {k}: a*dt/dx^2 = {worst:.4g} > 1; "
                           f"need n_steps >= {need}", required_n_steps=need)
        peclet = np.abs(mu) * dxs / diag
        if np.any(peclet[interior] > 1.0 + 1e-12):
            raise CFLError(f"lattice drift too strong at step {k}: |mu| dx / a = "
                           f"{float(np.max(peclet[interior])):.4g} > 1; refine the space grid")
        sig = np.sqrt(diag)
        pu, pm, pdn = _trinomial(diag, mu, dt, dxs)
        probs = np.stack([pdn, pm, pu], axis=2)  # (n, d, 3) for offsets -1, 0, +1
        rows, cols, vals = [], [], []
        bw_vals = [[] for _ in range(d)]
        idx_int = np.nonzero(interior)[0]
        for offs in np.ndindex(*(3,) * d):
            step = np.array(offs) - 1
            target = multi[idx_int] + step
            flat = np.ravel_multi_index(tuple(target.T), tuple(ns))
            w = np.ones(idx_int.size)
            for i in range(d):
                w = w * probs[idx_int, i, offs[i]]
            rows.append(idx_int)
            cols.append(flat)
            vals.append(w)
            for i in range(d):
                incr = (step[i] * dxs[i] - mu[idx_int, i] * dt) / sig[idx_int, i]
                bw_vals[i].append(w * incr)
        idx_b = np.nonzero(boundary)[0]
        rows.append(idx_b)
        cols.append(idx_b)
        vals.append(np.ones(idx_b.size))
        for i in range(d):
            bw_vals[i].append(np.zeros(idx_b.size))
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        P = sparse.csr_matrix((np.concatenate(vals), (r, c)), shape=(n, n))
        P.sum_duplicates()
        if P.data.min() < -1e-15:
            raise CFLError(f"negative transition weight at step {k}")
        Ws = []
        for i in range(d):
            W = sparse.csr_matrix((np.concatenate(bw_vals[i]), (r, c)), shape=(n, n))
            W.sum_duplicates()
            Ws.append(W)
        transitions.append(P)
        brownians.append(Ws)
        prev_key = key
    return MarkovLattice(grid, axes, nodes, transitions, brownians, boundary, spec)
