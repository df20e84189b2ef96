"""scikit-learn style wrappers around the lattice and PDE solvers.

``fit`` runs the backward solve (the optional ``X`` only sets the space
box when none is given), ``predict`` evaluates the value function at
query points and ``transform`` returns ``Z = sigma^T grad u`` there.
All hyper-parameters are constructor arguments, so ``get_params`` /
``set_params`` / ``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import TimeGrid, sigma_from_a
from .engine import LatticeEngine
from .forward import build_lattice
from .gbsde import maximal_solution, minimal_solution, solve_gbsde
from .pde import SpaceTimeGrid, solve_obstacle_homographic, solve_obstacle_projected, solve_parabolic_measure
from .rbsde import (decompose_obstacle, penalized_iterate, solve_rbsde_homographic, solve_rbsde_penalization,
                    solve_rbsde_reflected)


class _SolverBase(BaseEstimator, RegressorMixin, TransformerMixin):
    """Shared box handling and query validation."""

    def _box(self, X):
        if self.box is not None:
            lo, hi = self.box
            return float(lo), float(hi)
        if X is None:
            raise ValueError("give box=(lo, hi) or sample points X to fit")
        X = check_array(X, ensure_2d=True)
        lo, hi = float(X.min()), float(X.max())
        pad = self.margin + 0.05 * (hi - lo)
        return lo - pad, hi + pad

    def _query(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, ensure_2d=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, the solver was fitted with {self.n_features_in_}")
        lo, hi = self.box_
        if np.any(X < lo) or np.any(X > hi):
            raise ValueError(f"query points must lie in the fitted box [{lo}, {hi}]")
        return X

    def _time_index(self, t):
        if t is None:
            return 0
        return int(np.searchsorted(self.grid_.nodes, float(t) + 1e-12, side="right") - 1)

    def score(self, X, y, sample_weight=None, t=None):
        from sklearn.metrics import r2_score

        return r2_score(y, self.predict(X, t=t), sample_weight=sample_weight)


class GBSDESolver(_SolverBase):
    """Lattice solver for ``Y = phi(X_T) + int f ds + int g dR - int Z dB``.

    Parameters
    ----------
    spec, driver : DiffusionSpec, DriverSpec
    measure : MeasureData, optional
        Density of the increasing functional ``R``.
    T, n_steps, box, n_space : grid parameters; ``box`` may be inferred from ``X``.
    solution : {"direct", "minimal", "maximal"}
        ``"direct"`` is the Lipschitz solve; the other two run the
        regularised monotone sequence over ``n_schedule``.
    """

    def __init__(self, spec=None, driver=None, measure=None, T=1.0, n_steps=200, box=None, n_space=61,
                 solution="direct", n_schedule=(1, 2, 4, 8, 16, 32), margin=1.0):
        self.spec = spec
        self.driver = driver
        self.measure = measure
        self.T = T
        self.n_steps = n_steps
        self.box = box
        self.n_space = n_space
        self.solution = solution
        self.n_schedule = n_schedule
        self.margin = margin

    def fit(self, X=None, y=None):
        if self.spec is None or self.driver is None:
            raise ValueError("spec and driver are required")
        if self.solution not in ("direct", "minimal", "maximal"):
            raise ValueError(f"unknown solution {self.solution!r}")
        lo, hi = self._box(X)
        self.grid_ = TimeGrid(0.0, float(self.T), int(self.n_steps))
        self.lattice_ = build_lattice(self.spec, self.grid_, lo, hi, self.n_space)
        if self.solution == "direct":
            self.solution_ = solve_gbsde(LatticeEngine(self.lattice_, self.measure), self.driver)
        elif self.solution == "minimal":
            self.solution_ = minimal_solution(self.lattice_, self.driver, self.measure, self.n_schedule)
        else:
            self.solution_ = maximal_solution(self.lattice_, self.driver, self.measure, self.n_schedule)
        self.box_ = (lo, hi)
        self.n_features_in_ = self.spec.dim
        return self

    def predict(self, X, t=None):
        X = self._query(X)
        return self.lattice_.interpolate(self.solution_.Y[:, self._time_index(t)], X)

    def transform(self, X, t=None):
        X = self._query(X)
        k = min(self._time_index(t), self.grid_.n_steps - 1)
        Z = self.solution_.Z[:, k]
        return np.stack([self.lattice_.interpolate(Z[:, i], X) for i in range(Z.shape[1])], axis=1)


class RBSDESolver(_SolverBase):
    """Lattice reflected solver above ``S_t = h(t, X_t)``.

    ``scheme`` is ``"reflected"`` (the discrete Snell recursion),
    ``"penalization"`` (increasing penalised sequence, limit returned) or
    ``"homographic"`` (the iterate at the largest ``n`` in ``n_list``).
    """

    def __init__(self, spec=None, driver=None, obstacle=None, T=1.0, n_steps=500, box=None, n_space=101,
                 scheme="reflected", n_list=(1, 2, 4, 8, 16, 32), margin=1.0):
        self.spec = spec
        self.driver = driver
        self.obstacle = obstacle
        self.T = T
        self.n_steps = n_steps
        self.box = box
        self.n_space = n_space
        self.scheme = scheme
        self.n_list = n_list
        self.margin = margin

    def fit(self, X=None, y=None):
        if self.spec is None or self.driver is None or self.obstacle is None:
            raise ValueError("spec, driver and obstacle are required")
        lo, hi = self._box(X)
        self.grid_ = TimeGrid(0.0, float(self.T), int(self.n_steps))
        self.lattice_ = build_lattice(self.spec, self.grid_, lo, hi, self.n_space)
        eng = LatticeEngine(self.lattice_)
        ob = decompose_obstacle(self.obstacle, self.driver, self.spec)
        if self.scheme == "reflected":
            sol = solve_rbsde_reflected(eng, self.driver, ob)
        elif self.scheme == "penalization":
            sol = solve_rbsde_penalization(eng, self.driver, ob, self.n_list)
        elif self.scheme == "homographic":
            sol = solve_rbsde_homographic(eng, self.driver, ob, max(self.n_list))
        elif self.scheme == "penalized_iterate":
            sol = penalized_iterate(eng, self.driver, ob, max(self.n_list))
        else:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        self.solution_ = sol
        self.box_ = (lo, hi)
        self.n_features_in_ = self.spec.dim
        return self

    def predict(self, X, t=None):
        X = self._query(X)
        return self.lattice_.interpolate(self.solution_.Y[:, self._time_index(t)], X)

    def transform(self, X, t=None):
        X = self._query(X)
        k = min(self._time_index(t), self.grid_.n_steps - 1)
        Z = self.solution_.Z[:, k]
        return np.stack([self.lattice_.interpolate(Z[:, i], X) for i in range(Z.shape[1])], axis=1)


class _PDEBase(_SolverBase):
    def _grid(self, X):
        lo, hi = self._box(X)
        d = self.spec.dim
        self.box_ = (lo, hi)
        return SpaceTimeGrid.uniform(0.0, float(self.T), int(self.n_steps), [lo] * d, [hi] * d, [self.n_space] * d)

    def predict(self, X, t=None):
        X = self._query(X)
        return self.solution_.value(X, k=self._time_index(t))

    def transform(self, X, t=None):
        X = self._query(X)
        k = self._time_index(t)
        g = self.solution_.gradient(X, k=k)
        sig = sigma_from_a(self.spec, float(self.grid_.nodes[k]), X).reshape(-1, self.spec.dim, self.spec.dim)
        return np.einsum("nji,nj->ni", sig, g)


class ParabolicSolver(_PDEBase):
    """Implicit finite-difference solver for ``du/dt + Lu + f(u, sigma^T grad u) + g(u) q = 0``."""

    def __init__(self, spec=None, driver=None, measure=None, T=1.0, n_steps=200, box=None, n_space=121,
                 margin=1.0):
        self.spec = spec
        self.driver = driver
        self.measure = measure
        self.T = T
        self.n_steps = n_steps
        self.box = box
        self.n_space = n_space
        self.margin = margin

    def fit(self, X=None, y=None):
        if self.spec is None or self.driver is None:
            raise ValueError("spec and driver are required")
        grid = self._grid(X)
        self.grid_ = grid.time
        self.solution_ = solve_parabolic_measure(grid, self.spec, self.driver, self.measure)
        self.n_features_in_ = self.spec.dim
        return self


class ObstacleSolver(_PDEBase):
    """Obstacle PDE ``u >= h``: projected (exact complementarity) or homographic at ``max(n_list)``."""

    def __init__(self, spec=None, driver=None, obstacle=None, T=1.0, n_steps=200, box=None, n_space=121,
                 method="projected", n_list=(1, 2, 4, 8, 16, 32), margin=1.0):
        self.spec = spec
        self.driver = driver
        self.obstacle = obstacle
        self.T = T
        self.n_steps = n_steps
        self.box = box
        self.n_space = n_space
        self.method = method
        self.n_list = n_list
        self.margin = margin

    def fit(self, X=None, y=None):
        if self.spec is None or self.driver is None or self.obstacle is None:
            raise ValueError("spec, driver and obstacle are required")
        grid = self._grid(X)
        self.grid_ = grid.time
        if self.method == "projected":
            self.solution_ = solve_obstacle_projected(grid, self.spec, self.driver, self.obstacle)
        elif self.method == "homographic":
            self.solution_ = solve_obstacle_homographic(grid, self.spec, self.driver, self.obstacle, self.n_list)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.n_features_in_ = self.spec.dim
        return self

    def reaction(self, X, t=None):
        """Reaction density ``r(t, x)`` at query points (zero off the contact set)."""
        from scipy.interpolate import RegularGridInterpolator

        X = self._query(X)
        k = min(self._time_index(t), self.grid_.n_steps - 1)
        g = self.solution_.grid
        interp = RegularGridInterpolator(g.axes, self.solution_.reaction[k].reshape(g.n_space))
        return interp(X)
