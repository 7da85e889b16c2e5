import numpy as np
import pytest

from dbnsens.errors import DegenerateNodesError, DegeneratePolynomialError
from dbnsens.polynomials import (
    Polynomial,
    RationalFunction,
    chebyshev_nodes,
    interpolate,
    roots_in_unit_interval,
    threshold_polynomial,
)
from oracles import grid_crossings, polyval_ascending


def from_roots(roots, lead=1.0):
    return Polynomial(np.polynomial.polynomial.polyfromroots(roots) * lead)


class TestEvaluation:
    def test_square(self):
        assert Polynomial([0, 0, 1])(0.5) == 0.25

    def test_derivative_of_constant(self):
        assert Polynomial([3.0]).derivative().is_zero

    def test_cubic_derivative(self):
        assert Polynomial([0.5, -2, 0, 3]).derivative()(1.0) == pytest.approx(7.0)

    def test_vector_matches_polyval(self):
        rng = np.random.default_rng(10)
        c = rng.normal(size=9)
        x = rng.random(100)
        np.testing.assert_allclose(Polynomial(c)(x), polyval_ascending(c, x), rtol=1e-12, atol=1e-12)

    def test_arithmetic(self):
        p, q = Polynomial([1, 2]), Polynomial([0, 1])
        np.testing.assert_allclose((p * q).coefficients, [0, 1, 2])
        np.testing.assert_allclose((p - q).coefficients, [1, 1])
        np.testing.assert_allclose((2 * p + 1).coefficients, [3, 4])


class TestInterpolate:
    def test_identity_line(self):
        p = interpolate([0, 1], [0, 1], 1).polynomial
        np.testing.assert_allclose(p.coefficients, [0, 1], atol=1e-15)

    def test_constant_trims(self):
        p = interpolate([0, 0.5, 1], [1, 1, 1], 2).polynomial
        assert p.degree == 0 and p.coefficients[0] == pytest.approx(1.0)

    def test_known_cubic(self):
        x = chebyshev_nodes(5)
        y = 3 * x**3 - 2 * x + 0.5
        p = interpolate(x, y, 4).polynomial
        assert p.degree == 3
        np.testing.assert_allclose(p.coefficients, [0.5, -2, 0, 3], atol=1e-9)

    def test_held_out_residuals_expose_wrong_bound(self):
        x = np.concatenate((chebyshev_nodes(3), [0.3, 0.9]))
        good = interpolate(x, x**2, 2)
        bad = interpolate(x, x**3, 2)
        assert np.max(np.abs(good.residuals)) < 1e-14
        assert np.max(np.abs(bad.residuals)) > 1e-3

    def test_round_trip_random_degree(self):
        rng = np.random.default_rng(11)
        for d in range(1, 13):
            c = rng.uniform(-1, 1, d + 1)
            x = chebyshev_nodes(d + 1)
            p = interpolate(x, polyval_ascending(c, x), d).polynomial
            t = rng.random(50)
            np.testing.assert_allclose(p(t), polyval_ascending(c, t), atol=1e-9)

    def test_duplicate_nodes(self):
        with pytest.raises(DegenerateNodesError):
            interpolate([0.1, 0.1, 0.5], [1, 2, 3], 2)

    def test_node_families(self):
        lob, gau = chebyshev_nodes(6), chebyshev_nodes(6, "gauss")
        assert lob[0] == 0 and lob[-1] == 1
        assert np.all(np.diff(gau) > 0) and 0 < gau[0] and gau[-1] < 1


class TestRoots:
    def test_linear(self):
        assert roots_in_unit_interval(Polynomial([-0.5, 1])) == pytest.approx([0.5])

    def test_two_factors(self):
        assert roots_in_unit_interval(from_roots([0.3, 0.7])) == pytest.approx([0.3, 0.7], abs=1e-12)

    def test_tangential_root(self):
        assert roots_in_unit_interval(from_roots([0.4, 0.4])) == pytest.approx([0.4], abs=1e-6)

    def test_endpoints(self):
        assert roots_in_unit_interval(from_roots([0.0, 1.0, 2.0])) == pytest.approx([0.0, 1.0])

    def test_zero_polynomial(self):
        with pytest.raises(DegeneratePolynomialError):
            roots_in_unit_interval(Polynomial.zero())

    def test_nonzero_constant_has_none(self):
        assert roots_in_unit_interval(Polynomial([2.0])) == []

    def test_random_degree_six_against_grid(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            inside = rng.integers(0, 4)
            roots = np.concatenate((rng.uniform(0.01, 0.99, inside), rng.uniform(1.5, 3, 6 - inside)))
            p = from_roots(roots, rng.choice([-1, 1]) * rng.uniform(0.5, 2))
            found = roots_in_unit_interval(p)
            oracle = grid_crossings(lambda x: polyval_ascending(p.coefficients, x), 1_000_001)
            assert len(found) == len(oracle)
            np.testing.assert_allclose(found, oracle, atol=1e-6)


class TestThresholdPolynomial:
    def test_identity_over_one(self):
        q = threshold_polynomial(RationalFunction(Polynomial([0, 1]), Polynomial([1])), 0.12)
        np.testing.assert_allclose(q.coefficients, [-0.12, 1])

    def test_identically_at_threshold(self):
        den = Polynomial([0.4, 0.3, 0.2])
        f = RationalFunction(den * 0.25, den)
        assert threshold_polynomial(f, 0.25).is_zero

    def test_roots_match_function_crossings(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            num = Polynomial(rng.uniform(0, 1, 4))
            den = num + Polynomial(rng.uniform(0.1, 1, 4))
            f = RationalFunction(num, den)
            p = float(rng.uniform(0.2, 0.6))
            found = roots_in_unit_interval(threshold_polynomial(f, p))
            oracle = grid_crossings(lambda x: f(x) - p)
            assert len(found) == len(oracle)
            np.testing.assert_allclose(found, oracle, atol=1e-5)
