"""Conditional-expectation engines shared by the backward solvers.

Both engines expose the same small surface, so that the GBSDE, penalised
and homographic schemes run on identical discretisations:

* ``states(k)`` -- points where the solution is represented at node ``k``
* ``cond_expect(k, v)`` -- ``E[v_{k+1} | state_k]``
* ``cond_expect_dB(k, v, c)`` -- ``E[(v_{k+1} - c) Delta B_k | state_k]``
* ``dR(k, cap)`` -- increment of the (optionally truncated) functional
* ``sample_indices(start, n_paths, seed)`` -- state index paths used by
  path-averaged metrics
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.preprocessing import PolynomialFeatures

from .core import MeasureData, TimeGrid
from .errors import RegressionError
from .forward import FunctionalPath, MarkovLattice, PathBundle


class LatticeEngine:
    """Exact conditional expectations on a :class:`MarkovLattice`."""

    mode = "lattice"

    def __init__(self, lattice: MarkovLattice, measure: Optional[MeasureData] = None):
        self.lattice = lattice
        self.measure = measure
        self.grid: TimeGrid = lattice.grid
        self.dim = lattice.dim

    @property
    def n_states(self) -> int:
        return self.lattice.n_nodes

    @property
    def dx(self) -> float:
        return max(self.lattice.dx)

    def states(self, k: int) -> np.ndarray:
        return self.lattice.nodes

    def cond_expect(self, k: int, v: np.ndarray) -> np.ndarray:
        return self.lattice.expect(k, v)

    def cond_expect_dB(self, k: int, v: np.ndarray, c: Optional[np.ndarray] = None) -> np.ndarray:
        # E[Delta B | x] = 0 exactly on the lattice, so the centring is implicit
        return self.lattice.expect_dB(k, v)

    def density(self, k: int, cap: Optional[float] = None) -> np.ndarray:
        if self.measure is None:
            return np.zeros(self.n_states)
        q = self.measure.density_at(float(self.grid.nodes[k]), self.lattice.nodes)
        return q if cap is None else np.minimum(q, cap)

    def dR(self, k: int, cap: Optional[float] = None) -> np.ndarray:
        """Left-point increment ``q(tau_k, x) dt``; ``cap`` truncates the density."""
        return self.density(k, cap) * self.grid.dt[k]

    def start_index(self, x) -> int:
        return int(self.lattice.nearest_index(x)[0])

    def sample_indices(self, start=None, n_paths: int = 2000, seed: int = 0) -> np.ndarray:
        if start is None:
            start = self.start_index(np.zeros(self.dim))
        return self.lattice.sample_chain(int(start), n_paths, seed)

    def occupation(self, start: int) -> np.ndarray:
        return self.lattice.distribution(int(start))


class RegressionEngine:
    """Least-squares Monte Carlo conditional expectations on simulated paths.

    The regression basis is the full polynomial of total degree
    ``basis_order`` in the standardised state.  At nodes where every path
    sits at the same point the basis collapses to the constant.
    """

    mode = "monte-carlo"

    def __init__(self, paths: PathBundle, functional: Optional[FunctionalPath] = None,
                 basis_order: int = 3, min_paths_per_coef: int = 10):
        if basis_order < 0:
            raise ValueError("basis_order must be nonnegative")
        self.paths = paths
        self.functional = functional
        self.grid: TimeGrid = paths.grid
        self.dim = paths.dim
        self.basis_order = basis_order
        self._poly = PolynomialFeatures(degree=basis_order, include_bias=True)
        self._poly.fit(np.zeros((1, self.dim)))
        n_basis = self._poly.n_output_features_
        if paths.n_paths < min_paths_per_coef * n_basis:
            raise ValueError(f"need n_paths >= {min_paths_per_coef} x basis dimension "
                             f"= {min_paths_per_coef * n_basis}, got {paths.n_paths}")
        if functional is not None and functional.R.shape != paths.X.shape[:2]:
            raise ValueError("functional shape does not match the path bundle")
        self._cache_k = None
        self._cache_Q = None

    @property
    def n_basis(self) -> int:
        return self._poly.n_output_features_

    @property
    def n_states(self) -> int:
        return self.paths.n_paths

    @property
    def dx(self) -> float:
        return 0.0

    def states(self, k: int) -> np.ndarray:
        return self.paths.X[:, k]

    def _projector(self, k: int) -> np.ndarray:
        """Orthonormal basis of the regression space at node ``k``."""
        if self._cache_k == k:
            return self._cache_Q
        x = self.paths.X[:, k]
        std = x.std(axis=0)
        if np.all(std <= 1e-14 * (1.0 + np.abs(x.mean(axis=0)))):
            Q = np.full((x.shape[0], 1), 1.0 / np.sqrt(x.shape[0]))
        else:
            z = (x - x.mean(axis=0)) / np.where(std > 0, std, 1.0)
            A = self._poly.transform(z)
            Q, R = np.linalg.qr(A)
            diag = np.abs(np.diag(R))
            if diag.min() <= 1e-10 * diag.max():
                raise RegressionError(f"rank-deficient regression at time step {k} "
                                      f"(basis order {self.basis_order})", step=k)
        self._cache_k, self._cache_Q = k, Q
        return Q

    def project(self, k: int, v: np.ndarray) -> np.ndarray:
        Q = self._projector(k)
        return Q @ (Q.T @ v)

    def cond_expect(self, k: int, v: np.ndarray) -> np.ndarray:
        return self.project(k, v)

    def cond_expect_dB(self, k: int, v: np.ndarray, c: Optional[np.ndarray] = None) -> np.ndarray:
        centred = v if c is None else v - c
        target = centred[:, None] * self.paths.dB[:, k]
        return self.project(k, target)

    def dR(self, k: int, cap: Optional[float] = None) -> np.ndarray:
        if self.functional is None:
            return np.zeros(self.n_states)
        R = self.functional.R
        if cap is None:
            return R[:, k + 1] - R[:, k]
        return np.minimum(R[:, k + 1], cap) - np.minimum(R[:, k], cap)

    def start_index(self, x=None) -> int:
        return 0

    def sample_indices(self, start=None, n_paths: Optional[int] = None, seed: int = 0) -> np.ndarray:
        P, N1 = self.paths.n_paths, self.grid.n_steps + 1
        return np.broadcast_to(np.arange(P)[:, None], (P, N1))


def along(values: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Gather ``values[state, time, ...]`` along index paths ``idx[path, time]``.

    ``values`` may have fewer time columns than ``idx`` (increments).
    """
    m = values.shape[1]
    cols = np.arange(m)[None, :]
    return values[idx[:, :m], cols]
