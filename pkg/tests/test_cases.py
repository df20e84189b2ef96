import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsdelab.cases import CATALOG, fit_inverse_n, list_cases, random_ordered_pair, smooth_test_functions


class TestFitInverseN:
    def test_exact_rate(self):
        C, r2 = fit_inverse_n([1, 2, 4, 8], [3.0, 1.5, 0.75, 0.375])
        assert C == pytest.approx(3.0) and r2 == pytest.approx(1.0)

    def test_zeros_are_perfect(self):
        assert fit_inverse_n([1, 2, 4], [0.0, 0.0, 0.0]) == (0.0, 1.0)

    def test_wrong_rate_scores_low(self):
        ns = np.array([1, 2, 4, 8, 16])
        assert fit_inverse_n(ns, 1.0 / np.sqrt(ns))[1] < 0.95


class TestCatalog:
    def test_thirteen_cases(self):
        assert len(CATALOG) == 13
        assert [n for n, _, _ in list_cases("LEWY")] == ["lewy_stampacchia_stochastic", "lewy_stampacchia_pde"]
        assert list_cases("nothing_matches") == []

    def test_smooth_functions(self):
        x = np.array([[0.0], [1.0]])
        vals = [f(0.5, x) for f in smooth_test_functions()]
        np.testing.assert_allclose(vals[0], 1.0)
        np.testing.assert_allclose(vals[2][0], 1.5)


class TestOrderedPair:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_data_are_ordered(self, seed):
        rng = np.random.default_rng(seed)
        d1, d2 = random_ordered_pair(rng)
        x = np.linspace(-3, 3, 13)[:, None]
        y = np.linspace(-2, 2, 13)
        z = np.linspace(-1, 1, 13)[:, None]
        assert np.all(d1.f_at(0.3, x, y, z) <= d2.f_at(0.3, x, y, z) + 1e-12)
        assert np.all(d1.g_at(0.3, x, y) <= d2.g_at(0.3, x, y) + 1e-12)
        assert np.all(d1.phi_at(x) <= d2.phi_at(x) + 1e-12)
