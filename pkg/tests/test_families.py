import numpy as np
import pytest

from bsdelab.families import (DIFFUSIONS, F_FAMILIES, G_FAMILIES, MEASURES, OBSTACLES, TERMINALS,
                              family_parameters, make_diffusion, make_driver, make_measure, make_obstacle)


class TestLookup:
    def test_unknown_family(self):
        with pytest.raises(KeyError, match="unknown f family"):
            make_driver({"family": "cubic"})
        with pytest.raises(KeyError, match="obstacle"):
            make_obstacle({"family": "wall"})

    def test_unknown_parameter(self):
        with pytest.raises(KeyError, match="strike"):
            make_driver(terminal={"family": "gaussian", "strike": 1.0})

    def test_none_passes_through(self):
        assert make_obstacle(None) is None
        assert make_measure(None) is None

    def test_every_family_builds_with_defaults(self):
        for table in (DIFFUSIONS, OBSTACLES, MEASURES, TERMINALS, F_FAMILIES, G_FAMILIES):
            for name, factory in table.items():
                assert factory() is not None, name

    def test_parameters_listed(self):
        assert family_parameters(OBSTACLES, "put") == ["strike"]


class TestValues:
    def test_put_obstacle_and_terminal(self):
        x = np.array([[0.5], [1.5]])
        np.testing.assert_allclose(make_obstacle({"family": "put", "strike": 1.0})(0.3, x), [0.5, 0.0])
        drv = make_driver(terminal={"family": "put", "strike": 1.0})
        np.testing.assert_allclose(drv.phi_at(x), [0.5, 0.0])

    def test_negative_measure_rejected(self):
        with pytest.raises(ValueError):
            make_measure({"family": "gaussian", "c": -1.0})

    def test_diffusion_dimension(self):
        spec = make_diffusion({"family": "constant", "a": 2.0, "dim": 2})
        assert spec.dim == 2
