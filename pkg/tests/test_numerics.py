import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ruinless.errors import DepthExceeded, NoBracket, NoConvergence
from ruinless.numerics import (
    QuadConfig,
    RootConfig,
    find_root_bracketed,
    integrate,
    simpson_segments,
)


class TestRoot:
    def test_sqrt2(self):
        assert find_root_bracketed(lambda x: x * x - 2, 1, 2) == pytest.approx(math.sqrt(2), abs=1e-12)

    def test_origin(self):
        assert find_root_bracketed(lambda x: x, -1, 1) == pytest.approx(0.0, abs=1e-12)

    def test_amplitude_equation_example1(self):
        beta, c, K = 8.4, 1.1, 0.2
        G = lambda a: K + c / beta * math.log(a * beta / c) + c / beta - a
        root = find_root_bracketed(G, c / beta * (1 + 1e-9), 10.0)
        assert root == pytest.approx(0.5088, abs=5e-4)

    def test_endpoint_root(self):
        assert find_root_bracketed(lambda x: x - 1, 1, 2) == 1

    def test_no_bracket(self):
        with pytest.raises(NoBracket):
            find_root_bracketed(lambda x: x * x + 1, -1, 1)

    def test_empty_bracket(self):
        with pytest.raises(NoBracket):
            find_root_bracketed(lambda x: x, 1, 1)

    def test_no_convergence(self):
        with pytest.raises(NoConvergence):
            find_root_bracketed(lambda x: x**3 - 0.3, 0, 1, RootConfig(abs_tol=1e-15, max_iter=2))

    @settings(max_examples=60, deadline=None)
    @given(
        root=st.floats(-5, 5),
        lo_off=st.floats(0.01, 10),
        hi_off=st.floats(0.01, 10),
        slope=st.floats(0.1, 10),
    )
    def test_stays_in_bracket_and_converges(self, root, lo_off, hi_off, slope):
        lo, hi = root - lo_off, root + hi_off
        seen = []

        def f(x):
            seen.append(x)
            return slope * (x - root) + 0.1 * (x - root) ** 3

        cfg = RootConfig()
        x = find_root_bracketed(f, lo, hi, cfg)
        assert all(lo <= s <= hi for s in seen)
        assert lo <= x <= hi
        tol = 1e-9 * (1 + abs(f(lo)))
        assert abs(f(x)) < tol or f(x - cfg.abs_tol) * f(x + cfg.abs_tol) <= 0

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            RootConfig(abs_tol=0)
        with pytest.raises(ValueError):
            RootConfig(max_iter=0)
        with pytest.raises(ValueError):
            QuadConfig(rel_tol=-1)


class TestIntegrate:
    def test_constant(self):
        assert integrate(lambda x: 1.0, 0, 1) == pytest.approx(1.0, rel=1e-14)

    def test_exponential(self):
        # antiderivative -2 exp(-x/2)
        assert integrate(lambda x: math.exp(-0.5 * x), 0, 2) == pytest.approx(
            2 * (1 - math.exp(-1)), rel=1e-10
        )

    def test_empty_interval(self):
        assert integrate(lambda x: 1 / 0, 3.0, 3.0) == 0.0

    def test_reversed_interval(self):
        with pytest.raises(ValueError):
            integrate(lambda x: x, 1, 0)

    @pytest.mark.parametrize("coeffs", [(1,), (0, 1), (2, -3, 1), (1, 0, 0, 4), (-1, 2, 5, -0.5)])
    def test_exact_on_cubics(self, coeffs):
        p = np.polynomial.Polynomial(coeffs)
        a, b = -0.7, 2.3
        exact = p.integ()(b) - p.integ()(a)
        assert integrate(lambda x: float(p(x)), a, b) == pytest.approx(exact, rel=1e-14, abs=1e-14)

    def test_kink(self):
        val = integrate(lambda x: abs(x - 0.3), 0, 1)
        assert val == pytest.approx(0.5 * 0.3**2 + 0.5 * 0.7**2, rel=1e-10)

    def test_depth_exceeded(self):
        with pytest.raises(DepthExceeded):
            integrate(lambda x: math.sin(1 / x) if x else 0.0, 0, 1, QuadConfig(rel_tol=1e-14, max_depth=4))

    def test_segments_exact_for_piecewise_quadratic(self):
        edges = np.array([0.0, 0.5, 1.5, 4.0])
        f = lambda x: 2 * x * np.interp(x, [0, 0.5, 1.5, 4], [1, 0.8, 0.3, 0.0])
        total = simpson_segments(f, edges).sum()
        ref = integrate(lambda x: float(f(x)), 0, 0.5) + integrate(lambda x: float(f(x)), 0.5, 1.5) \
            + integrate(lambda x: float(f(x)), 1.5, 4)
        assert total == pytest.approx(ref, rel=1e-13)
