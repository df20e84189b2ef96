import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from bsdelab import GBSDESolver, ObstacleSolver, ParabolicSolver, RBSDESolver
from bsdelab.core import DiffusionSpec
from bsdelab.families import make_driver, make_obstacle


def heat_gaussian(x, T):
    s2 = 1.0 + T
    return np.exp(-x ** 2 / (2 * s2)) / math.sqrt(s2)


@pytest.fixture(scope="module")
def heat():
    return DiffusionSpec.constant(1.0, 0.0, 1), make_driver(terminal={"family": "gaussian"})


class TestGBSDESolver:
    def test_fit_predict_closed_form(self, heat):
        spec, drv = heat
        est = GBSDESolver(spec, drv, box=(-6.0, 6.0), n_steps=400).fit()
        X = np.array([[-1.0], [0.0], [1.6]])
        np.testing.assert_allclose(est.predict(X), heat_gaussian(X[:, 0], 1.0), atol=2e-3)
        np.testing.assert_allclose(est.predict(X, t=1.0), heat_gaussian(X[:, 0], 0.0), atol=1e-12)
        # Z = grad u for unit volatility
        z = est.transform(np.array([[1.0]]))[0, 0]
        assert z == pytest.approx(-0.5 * heat_gaussian(1.0, 1.0), abs=5e-3)
        assert est.score(X, heat_gaussian(X[:, 0], 1.0)) > 0.99

    def test_get_params_and_clone(self, heat):
        spec, drv = heat
        est = GBSDESolver(spec, drv, n_space=41)
        params = est.get_params()
        assert params["n_space"] == 41 and params["solution"] == "direct"
        c = clone(est).set_params(n_steps=50)
        assert c.n_steps == 50 and est.n_steps == 200
        assert not hasattr(c, "solution_")

    def test_unfitted(self, heat):
        with pytest.raises(NotFittedError):
            GBSDESolver(*heat).predict(np.zeros((1, 1)))

    def test_box_from_samples(self, heat):
        X = np.linspace(-1.0, 1.0, 5)[:, None]
        est = GBSDESolver(*heat, n_steps=100, margin=2.0).fit(X)
        lo, hi = est.box_
        assert lo == pytest.approx(-3.1) and hi == pytest.approx(3.1)
        assert est.predict(X).shape == (5,)

    def test_query_checks(self, heat):
        est = GBSDESolver(*heat, box=(-3.0, 3.0), n_steps=100).fit()
        with pytest.raises(ValueError, match="features"):
            est.predict(np.zeros((2, 2)))
        with pytest.raises(ValueError, match="box"):
            est.predict(np.array([[5.0]]))

    def test_requires_box_or_samples(self, heat):
        with pytest.raises(ValueError):
            GBSDESolver(*heat).fit()
        with pytest.raises(ValueError):
            GBSDESolver(*heat, box=(-1, 1), solution="median").fit()


class TestRBSDESolver:
    def test_barrier(self):
        spec = DiffusionSpec.constant(1.0, 0.0, 1)
        h = make_obstacle({"family": "linear_barrier", "c": 1.0, "T": 1.0})
        est = RBSDESolver(spec, make_driver(), h, box=(-3.0, 3.0), n_steps=100, n_space=21).fit()
        np.testing.assert_allclose(est.predict(np.array([[0.0], [1.0]]), t=0.25), 0.75, atol=1e-12)

    @pytest.mark.parametrize("scheme", ["penalization", "homographic", "penalized_iterate"])
    def test_schemes_bracket(self, scheme):
        spec = DiffusionSpec.constant(0.09, 0.0, 1)
        drv = make_driver({"family": "linear", "r": 0.1}, terminal={"family": "put", "strike": 1.0})
        h = make_obstacle({"family": "put", "strike": 1.0})
        kw = dict(box=(-0.8, 2.8), n_steps=200, n_space=61, n_list=(1, 4, 16))
        ref = RBSDESolver(spec, drv, h, **kw).fit()
        est = RBSDESolver(spec, drv, h, scheme=scheme, **kw).fit()
        X = np.array([[0.8], [1.0]])
        diff = est.predict(X) - ref.predict(X)
        if scheme == "homographic":
            assert np.all(diff >= -1e-9)
        elif scheme == "penalized_iterate":
            assert np.all(diff <= 1e-9)
        assert np.max(np.abs(diff)) < 0.05

    def test_missing_obstacle(self):
        with pytest.raises(ValueError):
            RBSDESolver(DiffusionSpec.constant(1.0, 0.0, 1), make_driver(), box=(-1, 1)).fit()


class TestPDESolvers:
    def test_parabolic_matches_lattice(self, heat):
        X = np.array([[0.0], [1.0]])
        pde = ParabolicSolver(*heat, box=(-6.0, 6.0), n_space=121).fit()
        lat = GBSDESolver(*heat, box=(-6.0, 6.0)).fit()
        np.testing.assert_allclose(pde.predict(X), lat.predict(X), atol=3e-3)
        np.testing.assert_allclose(pde.transform(X), lat.transform(X), atol=5e-3)

    def test_obstacle_reaction(self):
        spec = DiffusionSpec.constant(0.09, 0.0, 1)
        drv = make_driver({"family": "linear", "r": 0.1}, terminal={"family": "put", "strike": 1.0})
        h = make_obstacle({"family": "put", "strike": 1.0})
        est = ObstacleSolver(spec, drv, h, box=(-0.8, 2.8), n_steps=100, n_space=73).fit()
        X = np.array([[0.2], [0.9], [2.0]])
        u = est.predict(X)
        assert np.all(u >= np.maximum(1.0 - X[:, 0], 0.0) - 1e-9)
        r = est.reaction(X)
        # on the contact set the reaction is r h = r (K - x); far out of the money it vanishes
        assert r[0] == pytest.approx(0.1 * 0.8, rel=1e-6)
        assert r[2] == 0.0

    def test_unknown_method(self):
        spec = DiffusionSpec.constant(1.0, 0.0, 1)
        h = make_obstacle({"family": "put"})
        with pytest.raises(ValueError):
            ObstacleSolver(spec, make_driver(terminal={"family": "put"}), h, box=(-1, 3), method="x").fit()
