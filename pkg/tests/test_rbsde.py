import math

import numpy as np
import pytest
from scipy import stats

from bsdelab.core import DiffusionSpec, TimeGrid
from bsdelab.engine import LatticeEngine
from bsdelab.errors import MonotonicityError
from bsdelab.families import make_driver, make_obstacle
from bsdelab.forward import build_lattice
from bsdelab.rbsde import (check_lewy_stampacchia, check_skorokhod, control_density, decompose_obstacle,
                           discretize_obstacle, expected_control, homographic_root, homographic_sequence,
                           penalized_iterate, penalty_root, solve_rbsde_free, solve_rbsde_homographic,
                           solve_rbsde_penalization, solve_rbsde_reflected)


def bachelier_put(x, strike, sigma, T):
    s = sigma * math.sqrt(T)
    d = (strike - x) / s
    return (strike - x) * stats.norm.cdf(d) + s * stats.norm.pdf(d)


@pytest.fixture(scope="module")
def barrier_setup():
    spec = DiffusionSpec.constant(1.0, 0.0, 1)
    drv = make_driver()
    ob = decompose_obstacle(make_obstacle({"family": "linear_barrier", "c": 1.0, "T": 1.0}), drv, spec)
    eng = LatticeEngine(build_lattice(spec, TimeGrid(0.0, 1.0, 200), -3.0, 3.0, 21))
    return eng, drv, ob


@pytest.fixture(scope="module")
def put_setup():
    spec = DiffusionSpec.constant(0.09, 0.0, 1)
    drv = make_driver({"family": "linear", "r": 0.1}, terminal={"family": "put", "strike": 1.0})
    ob = decompose_obstacle(make_obstacle({"family": "put", "strike": 1.0}), drv, spec)
    eng = LatticeEngine(build_lattice(spec, TimeGrid(0.0, 1.0, 400), -0.8, 2.8, 91))
    return eng, drv, ob


class TestDecomposition:
    def test_linear_barrier_residual(self, barrier_setup):
        eng, drv, ob = barrier_setup
        x = np.linspace(-1, 1, 5)[:, None]
        # Phi = dh/dt = -c, so R has density c and C vanishes
        np.testing.assert_allclose(ob.R_density(0.3, x), 1.0, atol=1e-6)
        np.testing.assert_allclose(ob.C_density(0.3, x), 0.0, atol=1e-6)

    def test_discrete_identity(self, put_setup):
        eng, drv, ob = put_setup
        disc = discretize_obstacle(eng, drv, ob)
        k = 10
        t = float(eng.grid.nodes[k])
        x = eng.states(k)
        lhs = disc.S[:, k]
        c = eng.cond_expect(k, disc.S[:, k + 1])
        rhs = c + eng.grid.dt[k] * drv.f_at(t, x, disc.S[:, k], disc.Ztilde[:, k]) - disc.dC[:, k] + disc.dR[:, k]
        np.testing.assert_allclose(lhs, rhs, atol=1e-14)

    def test_unknown_residual(self, barrier_setup):
        eng, drv, ob = barrier_setup
        with pytest.raises(ValueError):
            discretize_obstacle(eng, drv, ob, residual="spline")

    def test_terminal_below_barrier(self):
        spec = DiffusionSpec.constant(1.0, 0.0, 1)
        drv = make_driver()
        ob = decompose_obstacle(make_obstacle({"family": "put", "strike": 1.0}), drv, spec)
        with pytest.raises(ValueError):
            ob.check_terminal(drv, np.array([[0.0]]), 1.0)


class TestReflected:
    def test_barrier_solution_is_barrier(self, barrier_setup):
        eng, drv, ob = barrier_setup
        sol = solve_rbsde_reflected(eng, drv, ob)
        np.testing.assert_allclose(sol.Y, sol.S, atol=1e-12)
        # K_T = c T on every path
        assert expected_control(sol) == pytest.approx(1.0, abs=1e-12)
        assert check_skorokhod(sol) <= 1e-12

    def test_no_early_exercise_without_discount(self):
        # martingale state and convex payoff: the reflected value is the European one
        spec = DiffusionSpec.constant(0.09, 0.0, 1)
        drv = make_driver(terminal={"family": "put", "strike": 1.0})
        ob = decompose_obstacle(make_obstacle({"family": "put", "strike": 1.0}), drv, spec)
        eng = LatticeEngine(build_lattice(spec, TimeGrid(0.0, 1.0, 400), -1.0, 3.0, 101))
        sol = solve_rbsde_reflected(eng, drv, ob)
        free = solve_rbsde_free(eng, drv, ob)
        np.testing.assert_allclose(sol.Y, free.Y, atol=1e-12)
        for x in (0.8, 1.0, 1.3):
            assert sol.value(np.array([x])) == pytest.approx(bachelier_put(x, 1.0, 0.3, 1.0), abs=2e-3)

    def test_discounted_put_above_payoff(self, put_setup):
        eng, drv, ob = put_setup
        sol = solve_rbsde_reflected(eng, drv, ob)
        free = solve_rbsde_free(eng, drv, ob)
        assert np.all(sol.Y >= sol.S - 1e-12)
        assert np.all(sol.Y >= free.Y - 1e-12)
        assert np.all(sol.dK >= 0)
        assert check_lewy_stampacchia(sol).ok
        cd = control_density(sol)
        assert cd.in_range and cd.support_ok

    def test_csv_and_k(self, barrier_setup, tmp_path):
        eng, drv, ob = barrier_setup
        sol = solve_rbsde_reflected(eng, drv, ob)
        assert sol.K.shape == sol.Y.shape
        np.testing.assert_allclose(sol.K[:, 0], 0.0)
        sol.to_csv(tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text().startswith("node,time,state,Y,")


class TestApproximations:
    def test_penalization_increases_to_reflected(self, put_setup):
        eng, drv, ob = put_setup
        lim = solve_rbsde_penalization(eng, drv, ob, (1, 4, 16, 64), keep_iterates=True)
        gaps = [g for _, _, g in lim.report.history]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        its = lim.report.iterates
        for a, b in zip(its, its[1:]):
            assert np.all(b.Y >= a.Y - 1e-10)
        assert np.all(its[-1].Y <= lim.Y + 1e-10)

    def test_penalty_skorokhod_shrinks(self, put_setup):
        eng, drv, ob = put_setup
        x0 = np.array([1.0])
        sk = [check_skorokhod(penalized_iterate(eng, drv, ob, n), start=x0) for n in (2, 8, 32)]
        assert sk[0] > sk[1] > sk[2]

    def test_homographic_decreases_to_reflected(self, put_setup):
        eng, drv, ob = put_setup
        rep = homographic_sequence(eng, drv, ob, [1, 4, 16, 64], n_paths=300)
        gaps = rep.column("sup_gap_Y")
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        assert rep.min_domination >= -1e-9
        for it in rep.iterates:
            # dK = alpha dR with alpha in [0, 1]; contact localisation only holds in the limit
            assert np.all(it.dK >= 0) and np.all(it.dK <= it.obstacle.dR + 1e-14)
            a = it.alpha_n
            assert np.nanmin(a) >= 0 and np.nanmax(a) <= 1 + 1e-12

    def test_homographic_needs_positive_n(self, barrier_setup):
        eng, drv, ob = barrier_setup
        with pytest.raises(ValueError):
            solve_rbsde_homographic(eng, drv, ob, 0)

    def test_monotonicity_guard(self, put_setup):
        eng, drv, ob = put_setup
        # a decreasing schedule reverses the order and must be rejected
        with pytest.raises(MonotonicityError):
            solve_rbsde_penalization(eng, drv, ob, (32, 1))


class TestRoots:
    def test_penalty_root_solves_equation(self):
        b = np.array([0.5, -0.2, 1.0])
        S = np.array([0.0, 0.0, 2.0])
        lam = 3.0
        y = penalty_root(b, S, lam)
        np.testing.assert_allclose(y, b + lam * np.maximum(S - y, 0.0), atol=1e-14)

    def test_homographic_root_is_largest(self):
        b = np.array([0.2, -0.5, 1.0])
        S = np.zeros(3)
        dR = np.array([0.3, 0.3, 0.0])
        n = 4.0
        y = homographic_root(b, S, dR, n)
        np.testing.assert_allclose(y, b + dR / (1 + n * np.abs(y - S)), atol=1e-12)
        # above S exactly when b + dR >= S
        assert y[0] >= 0 and y[1] < 0
        grid = np.linspace(-2, 2, 400001)
        for i in range(3):
            res = grid - b[i] - dR[i] / (1 + n * np.abs(grid - S[i]))
            roots = grid[:-1][np.sign(res[:-1]) != np.sign(res[1:])]
            assert y[i] >= roots.max() - 1e-5
