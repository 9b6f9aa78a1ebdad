import math

import numpy as np
import pytest
from scipy import integrate as sp_integrate

from multiendpoint.quadrature import GAUSS_WEIGHTS, KRONROD_WEIGHTS, NODES, QuadratureError, integrate


class TestRule:
    def test_kronrod_exact_through_degree_22(self):
        for d in range(23):
            exact = 0.0 if d % 2 else 2.0 / (d + 1)
            assert KRONROD_WEIGHTS @ NODES**d == pytest.approx(exact, abs=1e-15)

    def test_gauss_exact_through_degree_13(self):
        for d in range(14):
            exact = 0.0 if d % 2 else 2.0 / (d + 1)
            assert GAUSS_WEIGHTS @ NODES**d == pytest.approx(exact, abs=1e-15)
        assert abs(GAUSS_WEIGHTS @ NODES**14 - 2 / 15) > 1e-6


class TestIntegrate:
    def test_polynomial_single_panel(self):
        res = integrate(lambda x: 3 * x**2, 0.0, 2.0)
        assert res.value == pytest.approx(8.0, abs=1e-14)
        assert res.panels == 1

    def test_kink_with_breakpoint(self):
        res = integrate(np.abs, -1.0, 2.0, breakpoints=[0.0], tol=1e-12)
        assert res.value == pytest.approx(2.5, abs=1e-13)

    def test_kink_without_breakpoint(self):
        res = integrate(np.abs, -1.0, 2.0, tol=1e-10)
        assert res.value == pytest.approx(2.5, abs=1e-10)

    def test_against_scipy(self):
        f = lambda x: np.exp(-x * x) * np.cos(5 * x)
        res = integrate(f, -3.0, 4.0, tol=1e-12)
        ref, _ = sp_integrate.quad(lambda x: math.exp(-x * x) * math.cos(5 * x), -3, 4, epsabs=1e-14)
        assert res.value == pytest.approx(ref, abs=1e-12)

    def test_vector_valued(self):
        res = integrate(lambda x: np.stack([np.sin(x), np.cos(x)], axis=1), 0.0, math.pi)
        assert np.allclose(res.value, [2.0, 0.0], atol=1e-12)

    def test_panel_limit(self):
        with pytest.raises(QuadratureError) as err:
            integrate(lambda x: np.sign(np.sin(37 * x)), 0.0, 10.0, tol=1e-14, max_panels=50)
        assert err.value.estimate is not None

    def test_empty_interval(self):
        with pytest.raises(ValueError):
            integrate(np.sin, 1.0, 1.0)
