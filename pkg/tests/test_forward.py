import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from bsdelab.core import DiffusionSpec, MeasureData, TimeGrid
from bsdelab.errors import CFLError
from bsdelab.forward import (PathBundle, accumulate_functional, build_lattice, check_lattice_cfl,
                             gaussian_density, path_blocks, simulate_paths)


class TestPaths:
    def test_same_seed_same_paths(self, bm):
        g = TimeGrid(0.0, 1.0, 20)
        a = simulate_paths(bm, g, (0.0, np.zeros(1)), 300, seed=7)
        b = simulate_paths(bm, g, (0.0, np.zeros(1)), 300, seed=7)
        c = simulate_paths(bm, g, (0.0, np.zeros(1)), 300, seed=8)
        assert np.array_equal(a.X, b.X)
        assert not np.array_equal(a.X, c.X)

    def test_blocks_are_prefix_stable(self, bm):
        g = TimeGrid(0.0, 1.0, 5)
        small = simulate_paths(bm, g, (0.0, np.zeros(1)), 100, seed=3, block_size=64)
        large = simulate_paths(bm, g, (0.0, np.zeros(1)), 200, seed=3, block_size=64)
        assert np.array_equal(small.X, large.X[:100])

    def test_terminal_moments(self):
        spec = DiffusionSpec.constant(0.5, 0.3, 1)
        g = TimeGrid(0.0, 2.0, 40)
        p = simulate_paths(spec, g, (0.0, np.array([1.0])), 20000, seed=0)
        xT = p.X[:, -1, 0]
        # mean 1 + 0.3*2, variance 0.5*2
        se = np.sqrt(1.0 / xT.size)
        assert abs(xT.mean() - 1.6) < 4 * se
        assert abs(xT.var() - 1.0) < 0.05

    def test_start_time_mismatch(self, bm):
        with pytest.raises(ValueError):
            next(path_blocks(bm, TimeGrid(0.0, 1.0, 4), (0.5, np.zeros(1)), 10, 0))

    def test_binary_round_trip(self, bm, tmp_path):
        p = simulate_paths(bm, TimeGrid(0.0, 1.0, 6), (0.0, np.zeros(1)), 17, seed=11)
        f = tmp_path / "paths.bin"
        p.to_binary(f)
        q = PathBundle.from_binary(f)
        assert np.array_equal(p.X, q.X) and np.array_equal(p.dB, q.dB)
        assert q.seed == 11
        np.testing.assert_array_equal(q.grid.nodes, p.grid.nodes)

    def test_binary_bad_magic(self, tmp_path):
        f = tmp_path / "junk.bin"
        f.write_bytes(b"\0" * 128)
        with pytest.raises(ValueError):
            PathBundle.from_binary(f)

    def test_csv_limit(self, bm, tmp_path):
        p = simulate_paths(bm, TimeGrid(0.0, 1.0, 2), (0.0, np.zeros(1)), 5, seed=0)
        p.to_csv(tmp_path / "p.csv")
        assert len((tmp_path / "p.csv").read_text().splitlines()) == 1 + 5 * 3
        with pytest.raises(ValueError):
            p.to_csv(tmp_path / "q.csv", max_paths=2)

    def test_clock_functional(self, bm):
        p = simulate_paths(bm, TimeGrid(0.0, 1.0, 10), (0.0, np.zeros(1)), 4, seed=0)
        R = accumulate_functional(p, MeasureData.constant(2.0))
        np.testing.assert_allclose(R.R, 2.0 * p.grid.nodes[None, :].repeat(4, 0))
        np.testing.assert_allclose(R.between(2, 5), 0.6)


class TestGaussianDensity:
    def test_matches_scipy(self):
        spec = DiffusionSpec.constant(0.4, -0.2, 1)
        y = np.linspace(-2, 2, 9)
        got = gaussian_density(0.1, 0.5, 0.6, y[:, None], spec)
        ref = stats.norm.pdf(y, loc=0.5 - 0.1, scale=np.sqrt(0.2))
        np.testing.assert_allclose(got, ref, rtol=1e-12)

    def test_unit_mass_2d(self):
        spec = DiffusionSpec.constant([[1.0, 0.3], [0.3, 0.5]])
        mass = integrate.dblquad(lambda y2, y1: gaussian_density(0.0, [0, 0], 1.0, [y1, y2], spec),
                                 -8, 8, -8, 8)[0]
        assert mass == pytest.approx(1.0, abs=1e-7)

    def test_requires_constant(self):
        with pytest.raises(ValueError):
            gaussian_density(0.0, 0.0, 1.0, 0.0, DiffusionSpec.trigonometric())


class TestLattice:
    def test_moment_matching(self):
        spec = DiffusionSpec.trigonometric(1.0, 0.4, 1.0, 0.1, 0.2)
        g = TimeGrid(0.0, 1.0, 200)
        lat = build_lattice(spec, g, -3.0, 3.0, 41)
        x = lat.nodes[:, 0]
        inner = ~lat.boundary
        dt = g.dt[0]
        m1 = lat.expect(0, x) - x
        m2 = lat.expect(0, x ** 2) - 2 * x * lat.expect(0, x) + x ** 2
        np.testing.assert_allclose(m1[inner], spec.drift(0.0, x[:, None])[inner, 0] * dt, atol=1e-14)
        np.testing.assert_allclose(m2[inner], spec.a_at(0.0, x[:, None])[inner, 0, 0] * dt, atol=1e-14)
        # rows are probability vectors and boundaries absorb
        np.testing.assert_allclose(lat.transition[0].sum(axis=1).A1, 1.0)
        assert lat.expect(0, x)[0] == x[0]

    def test_brownian_surrogate_has_unit_variance(self, bm):
        lat = build_lattice(bm, TimeGrid(0.0, 1.0, 100), -3.0, 3.0, 31)
        x = lat.nodes[:, 0]
        inner = ~lat.boundary
        # E[X_{k+1} dB] = sigma dt for Brownian motion
        np.testing.assert_allclose(lat.expect_dB(0, x)[inner, 0], 0.01, atol=1e-14)

    def test_cfl_error_names_required_steps(self, bm):
        with pytest.raises(CFLError) as exc:
            build_lattice(bm, TimeGrid(0.0, 1.0, 10), -3.0, 3.0, 61)
        assert exc.value.required_n_steps == 100
        with pytest.raises(CFLError):
            check_lattice_cfl(bm, TimeGrid(0.0, 1.0, 10), -3.0, 3.0, 61)
        assert check_lattice_cfl(bm, TimeGrid(0.0, 1.0, 100), -3.0, 3.0, 61) == pytest.approx(1.0)

    def test_drift_too_strong(self):
        spec = DiffusionSpec.constant(0.01, 5.0, 1)
        with pytest.raises(CFLError, match="drift"):
            build_lattice(spec, TimeGrid(0.0, 1.0, 1000), -1.0, 1.0, 11)

    def test_2d_requires_diagonal(self):
        spec = DiffusionSpec.constant([[1.0, 0.2], [0.2, 1.0]])
        with pytest.raises(ValueError):
            build_lattice(spec, TimeGrid(0.0, 1.0, 50), -3.0, 3.0, 11)

    def test_distribution_conserves_mass(self, bm):
        lat = build_lattice(bm, TimeGrid(0.0, 1.0, 50), -4.0, 4.0, 21)
        start = int(lat.nearest_index(np.zeros(1))[0])
        dist = lat.distribution(start)
        np.testing.assert_allclose(dist.sum(axis=1), 1.0)
        paths = lat.sample_chain(start, 500, seed=2)
        assert np.array_equal(paths, lat.sample_chain(start, 500, seed=2))
        emp = np.bincount(paths[:, -1], minlength=lat.n_nodes) / 500
        assert np.abs(emp - dist[-1]).sum() < 0.3

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-1.9, 1.9), st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
    def test_interpolation_exact_on_affine(self, x, a, b):
        lat = build_lattice(DiffusionSpec.constant(1.0, 0.0, 1), TimeGrid(0.0, 1.0, 100), -2.0, 2.0, 21)
        vals = a + b * lat.nodes[:, 0]
        assert lat.interpolate(vals, np.array([[x]]))[0] == pytest.approx(a + b * x, abs=1e-12)
