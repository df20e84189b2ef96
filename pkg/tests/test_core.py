import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsdelab.core import (DiffusionSpec, DriverSpec, MeasureData, TimeGrid, WeightSpec, dyadic_spacing,
                          inf_convolution, regularize_driver, sigma_from_a, weight_eval)
from bsdelab.errors import DecompositionError, EllipticityError
from bsdelab.families import make_driver


class TestTimeGrid:
    def test_uniform_nodes(self):
        g = TimeGrid(0.0, 1.0, 4)
        np.testing.assert_allclose(g.nodes, [0, 0.25, 0.5, 0.75, 1.0])
        np.testing.assert_allclose(g.dt, 0.25)
        assert g.uniform_dt == 0.25

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            TimeGrid(0.0, 1.0, 0)
        with pytest.raises(ValueError):
            TimeGrid(1.0, 1.0, 3)
        with pytest.raises(ValueError):
            TimeGrid(0.0, 1.0, 2, nodes=[0.0, 0.7, 0.5])

    def test_sub_grid_and_refine(self):
        g = TimeGrid(0.0, 1.0, 10)
        sub = g.sub_grid(0.3)
        assert sub.t0 == pytest.approx(0.3)
        assert sub.n_steps == 7
        assert g.refine(2).n_steps == 20
        with pytest.raises(ValueError):
            g.index_of(0.33)

    def test_nodes_read_only(self):
        g = TimeGrid(0.0, 1.0, 3)
        with pytest.raises(ValueError):
            g.nodes[0] = 5.0


class TestWeight:
    def test_values(self):
        w = WeightSpec(1.0)
        assert weight_eval(w, np.array([0.0])) == 1.0
        np.testing.assert_allclose(weight_eval(w, np.array([[1.0], [2.0]])), [0.5, 0.2])

    def test_negative_alpha(self):
        with pytest.raises(ValueError):
            WeightSpec(-0.5)


class TestDiffusion:
    def test_constant_matrix_in_2d(self):
        spec = DiffusionSpec.constant([[2.0, 0.5], [0.5, 1.0]])
        assert spec.dim == 2
        assert spec.is_constant
        x = np.zeros((3, 2))
        sig = sigma_from_a(spec, 0.0, x)
        np.testing.assert_allclose(sig @ np.swapaxes(sig, 1, 2), spec.a_at(0.0, x))

    def test_not_positive_definite(self):
        with pytest.raises(EllipticityError):
            DiffusionSpec.constant([[1.0, 2.0], [2.0, 1.0]])

    def test_trigonometric_divergence_matches_fd(self):
        spec = DiffusionSpec.trigonometric(1.0, 0.5, 2.0)
        x = np.linspace(-2, 2, 7)[:, None]
        h = 1e-6
        fd = (spec.a_at(0.0, x + h)[:, 0, 0] - spec.a_at(0.0, x - h)[:, 0, 0]) / (2 * h)
        np.testing.assert_allclose(spec.div_a_at(0.0, x)[:, 0], fd, atol=1e-6)

    def test_trigonometric_rejects_degenerate(self):
        with pytest.raises(EllipticityError):
            DiffusionSpec.trigonometric(1.0, 1.0)

    def test_ellipticity_probe(self):
        spec = DiffusionSpec.trigonometric(1.0, 0.5)
        assert spec.check_ellipticity([0.0, 0.5], np.linspace(-3, 3, 11)[:, None])

    def test_affine_drift_bound_violation(self):
        spec = DiffusionSpec.affine(1.0, 0.0, 1.0)
        with pytest.raises(EllipticityError):
            spec.check_ellipticity([0.0], np.array([[5.0]]))

    def test_singular_custom_matrix(self):
        spec = DiffusionSpec(1, lambda t, x: np.zeros((x.shape[0], 1, 1)) - 1.0,
                             lambda t, x: np.zeros((x.shape[0], 1)), 1.0, 1.0)
        with pytest.raises(DecompositionError) as exc:
            sigma_from_a(spec, 0.5, np.array([[0.3]]))
        assert exc.value.t == 0.5

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.1, 3.0), st.floats(-0.9, 0.9), st.floats(0.1, 3.0))
    def test_sigma_factorises_a(self, a11, rho, a22):
        off = rho * math.sqrt(a11 * a22)
        spec = DiffusionSpec.constant([[a11, off], [off, a22]])
        sig = sigma_from_a(spec, 0.0, np.zeros(2))
        np.testing.assert_allclose(sig @ sig.T, spec.const_a, atol=1e-12)


class TestDriver:
    def test_flipped_negates(self):
        drv = make_driver({"family": "linear", "r": 0.5, "c": 0.2}, {"family": "constant", "c": 1.0},
                          {"family": "constant", "c": 2.0})
        fl = drv.flipped()
        x = np.zeros((3, 1))
        y = np.array([-1.0, 0.0, 1.0])
        z = np.zeros((3, 1))
        np.testing.assert_allclose(fl.f_at(0.0, x, y, z), -drv.f_at(0.0, x, -y, -z))
        np.testing.assert_allclose(fl.phi_at(x), -2.0)

    def test_growth_and_lipschitz_checks(self):
        drv = make_driver({"family": "linear", "r": 0.5, "c": 0.2})
        pts = np.linspace(-1, 1, 5)[:, None]
        assert drv.check_growth([0.0], pts, [-1, 0, 1], [0.0, 1.0])
        assert drv.check_lipschitz([0.0], pts, np.linspace(-2, 2, 9))

    def test_growth_violation(self):
        drv = DriverSpec(lambda t, x, y, z: 10 * y, lambda t, x, y: 0 * y, lambda x: 0 * x[:, 0],
                         lambda t, x: np.zeros(x.shape[0]), const_K=1.0)
        with pytest.raises(ValueError):
            drv.check_growth([0.0], np.zeros((1, 1)), [1.0], [0.0])

    def test_lipschitz_missing(self):
        drv = make_driver({"family": "sqrt_cap"})
        with pytest.raises(ValueError):
            drv.check_lipschitz([0.0], np.zeros((1, 1)), [0.0, 1.0])


class TestMeasure:
    def test_negative_density(self):
        q = MeasureData(lambda t, x: -np.ones(x.shape[0]))
        with pytest.raises(ValueError):
            q.density_at(0.0, np.zeros((2, 1)))
        with pytest.raises(ValueError):
            MeasureData.constant(-1.0)

    def test_h_minus_one_pairing(self):
        # q = 1 + 2x written as f - d/dx fbar with f = 1, fbar = -x^2
        q = MeasureData(lambda t, x: 1.0 + 2.0 * x[:, 0],
                        h_minus_one_pair=(lambda t, x: np.ones(x.shape[0]), lambda t, x: -x ** 2))
        eta = (lambda t, x: np.sin(np.pi * x[:, 0]), lambda t, x: np.pi * np.cos(np.pi * x[:, 0]))
        gaps = q.check_pairing([eta], 0.0, 1.0, 0.0, 1.0)
        assert gaps[0] < 1e-8


class TestInfConvolution:
    def test_abs_value_oracle(self):
        # inf-convolution of |y| with slope 2 is |y| itself; of -|y| with slope 1 is -|y|
        grid = np.linspace(-2, 2, 401)
        q = np.array([[-0.7], [0.0], [1.3]])
        np.testing.assert_allclose(inf_convolution(lambda p: np.abs(p[:, 0]), 2.0, grid, q), [0.7, 0.0, 1.3],
                                   atol=1e-12)
        assert inf_convolution(lambda p: p[:, 0] ** 2, 1.0, grid, 2.0) == pytest.approx(1.75, abs=1e-3)

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            inf_convolution(lambda p: p[:, 0], 1.0, np.array([]), 0.0)

    def test_dyadic_spacing(self):
        assert dyadic_spacing(1.0) == 2.0 ** -4
        assert dyadic_spacing(4.0) == 2.0 ** -8

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-2.0, 2.0), min_size=1, max_size=6))
    def test_regularized_sqrt_is_monotone_and_below(self, ys):
        drv = make_driver({"family": "sqrt_cap", "cap": 1.0})
        y = np.array(ys)
        x = np.zeros((y.size, 1))
        z = np.zeros((y.size, 1))
        exact = drv.f_at(0.0, x, y, z)
        prev = -np.inf
        for n in (1, 2, 4, 8):
            fn = regularize_driver(drv, n, 3.0).f_at(0.0, x, y, z)
            assert np.all(fn <= exact + 1e-12)
            assert np.all(fn >= prev - 1e-12)
            prev = fn

    def test_regularized_is_lipschitz(self):
        drv = make_driver({"family": "sqrt_cap", "cap": 1.0})
        n = 4.0
        y = np.linspace(-1, 1, 201)
        x = np.zeros((y.size, 1))
        fn = regularize_driver(drv, n, 3.0).f_at(0.0, x, y, np.zeros((y.size, 1)))
        assert np.max(np.abs(np.diff(fn)) / np.diff(y)) <= n + 1e-9
