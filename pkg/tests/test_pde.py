import math

import numpy as np
import pytest
from scipy import stats

from bsdelab.core import DiffusionSpec, MeasureData, WeightSpec
from bsdelab.families import make_driver, make_obstacle
from bsdelab.pde import (SpaceTimeGrid, assemble_operator, check_pde_lewy_stampacchia, obstacle_residual,
                         recover_reaction_density, restrict, self_convergence, solve_obstacle_homographic,
                         solve_obstacle_projected, solve_parabolic_measure, weighted_l2)


@pytest.fixture(scope="module")
def put_data():
    spec = DiffusionSpec.constant(0.09, 0.0, 1)
    drv = make_driver({"family": "linear", "r": 0.1}, terminal={"family": "put", "strike": 1.0})
    h = make_obstacle({"family": "put", "strike": 1.0})
    grid = SpaceTimeGrid.uniform(0.0, 1.0, 100, [-0.8], [2.8], [73])
    return spec, drv, h, grid


@pytest.fixture(scope="module")
def projected(put_data):
    spec, drv, h, grid = put_data
    return solve_obstacle_projected(grid, spec, drv, h)


class TestGrid:
    def test_shape_and_boundary(self):
        g = SpaceTimeGrid.uniform(0.0, 1.0, 4, [-1, -2], [1, 2], [5, 9])
        assert g.n_nodes == 45
        assert g.boundary.sum() == 45 - 3 * 7
        r = g.refine()
        assert r.n_space == (9, 17) and r.time.n_steps == 8

    def test_validation(self):
        with pytest.raises(ValueError):
            SpaceTimeGrid.uniform(0.0, 1.0, 4, [1.0], [0.0], [5])
        with pytest.raises(ValueError):
            SpaceTimeGrid.uniform(0.0, 1.0, 4, [0.0], [1.0], [2])

    def test_restrict_inverts_refine(self):
        g = SpaceTimeGrid.uniform(0.0, 1.0, 3, [0.0], [1.0], [5])
        f = g.refine()
        field = np.tile(f.nodes[:, 0], (f.time.n_steps + 1, 1))
        np.testing.assert_allclose(restrict(field, f, g), np.tile(g.nodes[:, 0], (4, 1)))


class TestOperator:
    def test_divergence_form_on_polynomials(self):
        spec = DiffusionSpec.trigonometric(1.0, 0.3, 1.0, 0.2, 0.0)
        g = SpaceTimeGrid.uniform(0.0, 1.0, 1, [-2.0], [2.0], [401])
        A = assemble_operator(spec, g, 0.0)
        x = g.nodes[:, 0]
        inner = ~g.boundary
        # L x = 1/2 a' + b, L x^2 = a + x a' + 2 b x
        a = spec.a_at(0.0, g.nodes)[:, 0, 0]
        da = spec.div_a_at(0.0, g.nodes)[:, 0]
        np.testing.assert_allclose((A @ x)[inner], (0.5 * da + 0.2)[inner], atol=1e-4)
        np.testing.assert_allclose((A @ x ** 2)[inner], (a + x * da + 0.4 * x)[inner], atol=1e-4)
        np.testing.assert_allclose(A @ np.ones_like(x), 0.0, atol=1e-9)

    def test_cross_term_2d(self):
        spec = DiffusionSpec.constant([[1.0, 0.4], [0.4, 2.0]])
        g = SpaceTimeGrid.uniform(0.0, 1.0, 1, [-1, -1], [1, 1], [11, 11])
        A = assemble_operator(spec, g, 0.0)
        xy = g.nodes[:, 0] * g.nodes[:, 1]
        inner = ~g.boundary
        # 1/2 div(a grad(xy)) = a12
        np.testing.assert_allclose((A @ xy)[inner], 0.4, atol=1e-12)


class TestParabolic:
    def test_heat_gaussian(self):
        spec = DiffusionSpec.constant(1.0, 0.0, 1)
        g = SpaceTimeGrid.uniform(0.0, 1.0, 200, [-8.0], [8.0], [161])
        sol = solve_parabolic_measure(g, spec, make_driver(terminal={"family": "gaussian"}))
        x = np.array([0.0, 1.0, -2.0])
        exact = np.exp(-x ** 2 / 4) / math.sqrt(2)
        np.testing.assert_allclose(sol.value(x[:, None]), exact, atol=3e-3)
        np.testing.assert_allclose(sol.gradient(np.array([[1.0]]))[0, 0], -0.5 * exact[1], atol=5e-3)

    def test_discount_and_clock(self):
        spec = DiffusionSpec.constant(1.0, 0.0, 1)
        g = SpaceTimeGrid.uniform(0.0, 1.0, 100, [-3.0], [3.0], [31])
        sol = solve_parabolic_measure(g, spec, make_driver(g={"family": "constant", "c": 1.0}),
                                      MeasureData.constant(1.0))
        np.testing.assert_allclose(sol.u, np.tile((1 - g.time.nodes)[:, None], (1, 31)), atol=1e-12)
        drv = make_driver({"family": "linear", "r": 1.0}, terminal={"family": "constant", "c": 1.0})
        sol = solve_parabolic_measure(g, spec, drv)
        # implicit Euler on y' = y gives (1 + dt)^-N
        assert sol.value(np.array([[0.0]]))[0] == pytest.approx(1.01 ** -100, rel=1e-10)

    def test_dimension_mismatch(self):
        g = SpaceTimeGrid.uniform(0.0, 1.0, 4, [0.0], [1.0], [5])
        with pytest.raises(ValueError):
            solve_parabolic_measure(g, DiffusionSpec.constant(1.0, 0.0, 2), make_driver())

    def test_2d_product_solution(self):
        spec = DiffusionSpec.constant(1.0, 0.0, 2)
        g = SpaceTimeGrid.uniform(0.0, 0.5, 50, [-6, -6], [6, 6], [49, 49])
        sol = solve_parabolic_measure(g, spec, make_driver(terminal={"family": "gaussian"}))
        # product of two 1D heat kernels with width^2 + T = 1.5
        assert sol.value(np.zeros((1, 2)))[0] == pytest.approx(1 / 1.5, abs=1e-2)

    def test_csv(self, tmp_path):
        g = SpaceTimeGrid.uniform(0.0, 1.0, 2, [0.0], [1.0], [3])
        sol = solve_parabolic_measure(g, DiffusionSpec.constant(1.0, 0.0, 1), make_driver())
        sol.to_csv(tmp_path / "u.csv")
        lines = (tmp_path / "u.csv").read_text().splitlines()
        assert lines[0] == "k,t,x1,u,reaction" and len(lines) == 1 + 3 * 3


class TestObstacle:
    def test_complementarity(self, projected):
        u, H, r = projected.u, projected.h_values, projected.reaction
        assert np.all(u >= H - 1e-12)
        assert np.all(r >= -1e-12)
        assert np.max(np.abs((u[:-1] - H[:-1]) * r)) <= 1e-9

    def test_residual_matches_reaction(self, projected):
        res = obstacle_residual(projected)
        inner = ~projected.grid.boundary
        np.testing.assert_allclose(res[:, inner], projected.reaction[:, inner], atol=1e-9)

    def test_european_when_undiscounted(self):
        spec = DiffusionSpec.constant(0.09, 0.0, 1)
        drv = make_driver(terminal={"family": "put", "strike": 1.0})
        h = make_obstacle({"family": "put", "strike": 1.0})
        g = SpaceTimeGrid.uniform(0.0, 1.0, 200, [-1.0], [3.0], [161])
        sol = solve_obstacle_projected(g, spec, drv, h)
        exact = 0.3 * stats.norm.pdf(0.0)
        assert sol.value(np.array([[1.0]]))[0] == pytest.approx(exact, abs=2e-3)

    def test_homographic_sequence(self, put_data, projected):
        spec, drv, h, grid = put_data
        sol = solve_obstacle_homographic(grid, spec, drv, h, [1, 4, 16, 64])
        us = [u for _, _, u in sol.mu_n_sequence]
        for a, b in zip(us, us[1:]):
            assert np.all(b <= a + 1e-9)
        assert np.all(us[-1] >= sol.h_values - 1e-9)
        w = WeightSpec(1.0)
        gaps = [weighted_l2(u - projected.u, grid, w) for u in us]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))

    def test_lewy_stampacchia_and_alpha(self, projected):
        assert check_pde_lewy_stampacchia(projected).ok
        rep = recover_reaction_density(projected)
        assert rep.in_range and rep.support_ok

    def test_lewy_stampacchia_needs_symmetric(self):
        spec = DiffusionSpec.constant(0.09, 0.05, 1)
        drv = make_driver(terminal={"family": "put", "strike": 1.0})
        h = make_obstacle({"family": "put", "strike": 1.0})
        g = SpaceTimeGrid.uniform(0.0, 1.0, 20, [-1.0], [3.0], [21])
        with pytest.raises(ValueError):
            check_pde_lewy_stampacchia(solve_obstacle_projected(g, spec, drv, h))

    def test_reaction_needs_obstacle(self):
        g = SpaceTimeGrid.uniform(0.0, 1.0, 2, [0.0], [1.0], [3])
        sol = solve_parabolic_measure(g, DiffusionSpec.constant(1.0, 0.0, 1), make_driver())
        with pytest.raises(ValueError):
            recover_reaction_density(sol)


class TestSelfConvergence:
    def test_heat_first_order(self):
        spec = DiffusionSpec.constant(1.0, 0.0, 1)
        drv = make_driver(terminal={"family": "gaussian"})
        g = SpaceTimeGrid.uniform(0.0, 1.0, 20, [-6.0], [6.0], [25])
        sc = self_convergence(lambda gg: solve_parabolic_measure(gg, spec, drv), g, levels=2, weight=WeightSpec(1.0))
        assert len(sc.errors) == 2
        # implicit Euler: the change halves (roughly) with each refinement
        assert 1.5 < sc.ratios[0] < 4.5
