"""Univariate polynomials on [0, 1]: evaluation, interpolation and real roots.

Coefficients are stored in ascending order. Evaluation uses compensated
Horner so that values are accurate to a few ulps even where the monomial
basis cancels badly; interpolation depends on that accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateNodesError, DegeneratePolynomialError, InputError

TRIM_TOL = 1e-10
SCAN_SUBINTERVALS = 4096
ROOT_XTOL = 1e-12
ROOT_MERGE_TOL = 1e-9
TANGENT_TOL = 1e-10

_SPLITTER = 134217729.0  # 2**27 + 1


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, al * bl - (((p - ah * bh) - al * bh) - ah * bl)


def _comp_horner(coeffs: np.ndarray, x):
    s = np.full_like(x, coeffs[-1], dtype=float)
    err = np.zeros_like(s)
    for c in coeffs[-2::-1]:
        p, pe = _two_prod(s, x)
        s, se = _two_sum(p, c)
        err = err * x + (pe + se)
    return s + err


@dataclass(frozen=True, eq=False)
class Polynomial:
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.array(self.coefficients, dtype=float))
        if c.ndim != 1:
            raise InputError("polynomial coefficients must be a vector")
        if c.size == 0:
            c = np.zeros(1)
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def zero(cls) -> Polynomial:
        return cls([0.0])

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coefficients)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = _comp_horner(self.coefficients, np.atleast_1d(x))
        return float(out[0]) if x.ndim == 0 else out.reshape(x.shape)

    def derivative(self) -> Polynomial:
        c = self.coefficients
        if len(c) == 1:
            return Polynomial.zero()
        return Polynomial(c[1:] * np.arange(1, len(c)))

    def trimmed(self, tol: float = TRIM_TOL, scale: float | None = None) -> Polynomial:
        """Drop trailing coefficients with magnitude at most ``tol * scale``.

        ``scale`` defaults to the largest coefficient magnitude.
        """
        c = self.coefficients
        if scale is None:
            scale = float(np.max(np.abs(c)))
        keep = np.flatnonzero(np.abs(c) > tol * scale)
        if keep.size == 0:
            return Polynomial.zero()
        return Polynomial(c[: keep[-1] + 1])

    def _padded(self, other, n):
        a = np.zeros(n)
        a[: len(self.coefficients)] = self.coefficients
        b = np.zeros(n)
        b[: len(other.coefficients)] = other.coefficients
        return a, b

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial([other])
        a, b = self._padded(other, max(len(self.coefficients), len(other.coefficients)))
        return Polynomial(a + b)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Polynomial) else -float(other))

    def __neg__(self):
        return Polynomial(-self.coefficients)

    def __mul__(self, k):
        if isinstance(k, Polynomial):
            return Polynomial(np.convolve(self.coefficients, k.coefficients))
        return Polynomial(self.coefficients * float(k))

    __rmul__ = __mul__

    def __repr__(self):
        return f"Polynomial({list(self.coefficients)!r})"


@dataclass(frozen=True)
class RationalFunction:
    """Quotient ``numerator / denominator`` of two polynomials."""

    numerator: Polynomial
    denominator: Polynomial

    def __post_init__(self):
        if self.denominator.is_zero:
            raise DegeneratePolynomialError("denominator is the zero polynomial")

    def __call__(self, x):
        return self.numerator(x) / self.denominator(x)

    def derivative(self, x):
        """First derivative by the quotient rule."""
        n, d = self.numerator(x), self.denominator(x)
        dn, dd = self.numerator.derivative()(x), self.denominator.derivative()(x)
        return (dn * d - n * dd) / (d * d)

    def denominator_roots(self) -> list[float]:
        return roots_in_unit_interval(self.denominator)


class Interpolation(NamedTuple):
    polynomial: Polynomial
    residuals: np.ndarray


def chebyshev_nodes(count: int, kind: str = "lobatto") -> np.ndarray:
    """Ascending Chebyshev nodes mapped to [0, 1].

    ``lobatto`` gives the extrema (endpoints included), ``gauss`` the
    interior roots of T_count.
    """
    if count < 1:
        raise InputError("need at least one node")
    if count == 1:
        return np.array([0.5])
    j = np.arange(count)
    if kind == "lobatto":
        x = 0.5 - 0.5 * np.cos(j * np.pi / (count - 1))
        x[0], x[-1] = 0.0, 1.0
    elif kind == "gauss":
        x = 0.5 - 0.5 * np.cos((2 * j + 1) * np.pi / (2 * count))
    else:
        raise InputError(f"unknown node kind {kind!r}")
    return x


def interpolate(x, y, degree_bound: int, trim: bool = True) -> Interpolation:
    """Newton divided-difference interpolant through the first ``degree_bound + 1`` nodes.

    Any further nodes are held out and their residuals returned. With
    ``trim`` the interpolant is trimmed to find its effective degree; if
    that is below the bound, the fitting nodes are refitted at the lower
    degree by least squares in a Chebyshev basis, so dropped round-off
    coefficients do not bias the remaining ones.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = degree_bound + 1
    if degree_bound < 0 or len(x) < k or len(x) != len(y):
        raise InputError(f"need at least {k} nodes for degree bound {degree_bound}, got {len(x)}")
    if np.unique(x).size != x.size:
        raise DegenerateNodesError("duplicate interpolation nodes")
    if np.any((x < 0) | (x > 1)):
        raise InputError("interpolation nodes must lie in [0, 1]")

    xs, c = x[:k], y[:k].copy()
    for j in range(1, k):
        c[j:] = (c[j:] - c[j - 1:-1]) / (xs[j:] - xs[: k - j])
    coeffs = np.array([c[-1]])
    for i in range(k - 2, -1, -1):
        coeffs = np.concatenate(([0.0], coeffs)) - xs[i] * np.concatenate((coeffs, [0.0]))
        coeffs[0] += c[i]
    p = Polynomial(coeffs)
    if trim:
        p = p.trimmed()
        if 0 < p.degree < degree_bound:
            refit = np.polynomial.Chebyshev.fit(xs, y[:k], p.degree, domain=[0.0, 1.0])
            p = Polynomial(refit.convert(kind=np.polynomial.Polynomial, domain=[0.0, 1.0],
                                         window=[0.0, 1.0]).coef)
        elif p.degree == 0 and degree_bound > 0:
            p = Polynomial([float(np.mean(y[:k]))])
    residuals = p(x[k:]) - y[k:] if len(x) > k else np.zeros(0)
    return Interpolation(p, residuals)


def _bisect_sign_changes(p: Polynomial, grid: np.ndarray, xtol: float) -> np.ndarray:
    v = p(grid)
    exact = grid[v == 0.0]
    idx = np.flatnonzero(v[:-1] * v[1:] < 0.0)
    lo, hi, flo = grid[idx].copy(), grid[idx + 1].copy(), v[idx].copy()
    while lo.size and np.max(hi - lo) > xtol:
        mid = 0.5 * (lo + hi)
        fm = p(mid)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
        hit = fm == 0.0
        lo[hit] = hi[hit] = mid[hit]
    return np.concatenate((exact, 0.5 * (lo + hi)))


def roots_in_unit_interval(p: Polynomial, subintervals: int = SCAN_SUBINTERVALS,
                           xtol: float = ROOT_XTOL) -> list[float]:
    """All real roots of ``p`` in [0, 1], ascending.

    Odd-multiplicity roots come from sign changes on a uniform grid refined
    by bisection; even-multiplicity (tangential) roots are the sign changes
    of the derivative at which ``p`` itself vanishes to working precision.
    """
    if p.is_zero:
        raise DegeneratePolynomialError("every point is a root of the zero polynomial")
    if p.degree == 0:
        return []
    grid = np.linspace(0.0, 1.0, subintervals + 1)
    found = list(_bisect_sign_changes(p, grid, xtol))
    dp = p.derivative()
    if dp.degree >= 1 and not dp.is_zero:
        scale = 1.0 + float(np.max(np.abs(p.coefficients)))
        for c in _bisect_sign_changes(dp, grid, xtol):
            if abs(p(c)) <= TANGENT_TOL * scale:
                found.append(c)
    found.sort()
    merged: list[float] = []
    for r in found:
        if merged and r - merged[-1] <= ROOT_MERGE_TOL:
            if abs(p(r)) < abs(p(merged[-1])):
                merged[-1] = r
            continue
        merged.append(float(r))
    return merged


def threshold_polynomial(f: RationalFunction, p: float) -> Polynomial:
    """``numerator - p * denominator``; its roots are the solutions of f(x) = p.

    The result is trimmed relative to the operands' coefficient scale, so a
    function identically equal to ``p`` yields the zero polynomial.
    """
    num, den = f.numerator, f.denominator
    scale = max(float(np.max(np.abs(num.coefficients))),
                abs(p) * float(np.max(np.abs(den.coefficients))))
    return (num - den * p).trimmed(TRIM_TOL, scale)
