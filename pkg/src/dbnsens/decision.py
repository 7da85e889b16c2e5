"""Threshold decision model and parameter regions of unchanged decision.

Three thresholds p- <= p* <= p+ split the probability axis into Withhold
(below p-), Test (p- to p+, both ends included) and Treat (above p+).
Only p- and p+ bound regions; p* is carried for reporting.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import DegenerateRegionError, InputError
from .polynomials import roots_in_unit_interval, threshold_polynomial
from .sensitivity import BivariateSensitivity, UnivariateSensitivity

DERIVATIVE_ZERO_TOL = 1e-8
BRANCH_GAP = 0.1
_EDGE_TOL = 1e-12
_VANISHING_DENOMINATOR = 1e-9
_ON_CURVE_TOL = 1e-6


class Decision(IntEnum):
    WITHHOLD = 0
    TEST = 1
    TREAT = 2

    @property
    def label(self) -> str:
        return self.name.capitalize()


@dataclass(frozen=True)
class ThresholdModel:
    p_minus: float
    p_star: float
    p_plus: float

    def __post_init__(self):
        if not 0.0 <= self.p_minus <= self.p_star <= self.p_plus <= 1.0:
            raise InputError(
                f"thresholds must satisfy 0 <= p- <= p* <= p+ <= 1, got "
                f"({self.p_minus}, {self.p_star}, {self.p_plus})")


def decide(p: float, t: ThresholdModel) -> Decision:
    if p < t.p_minus:
        return Decision.WITHHOLD
    if p > t.p_plus:
        return Decision.TREAT
    return Decision.TEST


@dataclass(frozen=True)
class DecisionRegions:
    """Partition of [0, 1] into intervals of constant decision.

    ``labels[k]`` holds on the open interval between ``boundaries[k-1]`` and
    ``boundaries[k]`` (the ends 0 and 1 close the first and last interval).
    ``crossings[k]`` names the threshold ('p-' or 'p+') met at boundary k.
    """

    boundaries: tuple[float, ...]
    labels: tuple[Decision, ...]
    nominal: float
    nominal_region_index: int
    margin: float
    derivative_signs: tuple[int, ...] = ()
    crossings: tuple[str, ...] = ()

    @property
    def nominal_decision(self) -> Decision:
        return self.labels[self.nominal_region_index]

    def intervals(self) -> list[tuple[float, float, Decision]]:
        edges = (0.0, *self.boundaries, 1.0)
        return [(edges[k], edges[k + 1], lab) for k, lab in enumerate(self.labels)]

    def region_of(self, theta: float) -> int:
        return bisect.bisect_left(self.boundaries, theta)

    @property
    def nominal_interval(self) -> tuple[float, float]:
        lo, hi, _ = self.intervals()[self.nominal_region_index]
        return lo, hi


def _margin(boundaries, k, nominal) -> float:
    near = []
    if k > 0:
        near.append(nominal - boundaries[k - 1])
    if k < len(boundaries):
        near.append(boundaries[k] - nominal)
    return min(near) if near else math.inf


def _interior(roots):
    return [float(r) for r in roots if _EDGE_TOL < r < 1.0 - _EDGE_TOL]


def _cross(label: Decision, which: str) -> Decision:
    flips = {
        "p-": {Decision.WITHHOLD: Decision.TEST, Decision.TEST: Decision.WITHHOLD},
        "p+": {Decision.TEST: Decision.TREAT, Decision.TREAT: Decision.TEST},
    }[which]
    if label not in flips:
        raise InputError(f"a {which} crossing cannot border a {label.label} region")
    return flips[label]


def _merge_equal(bounds, crossings, labels):
    keep_b, keep_c, keep_l = [], [], [labels[0]]
    for b, c, lab in zip(bounds, crossings, labels[1:]):
        if lab == keep_l[-1]:
            continue
        keep_b.append(b)
        keep_c.append(c)
        keep_l.append(lab)
    return keep_b, keep_c, keep_l


def assemble_regions(lower_roots, upper_roots, nominal: float, nominal_decision: Decision,
                     tangential=()) -> DecisionRegions:
    """Regions from threshold roots alone.

    ``lower_roots`` solve f = p- and ``upper_roots`` solve f = p+; roots
    outside (0, 1) are discarded. Starting from the decision at ``nominal``,
    every simple crossing flips Withhold/Test (p-) or Test/Treat (p+);
    roots listed in ``tangential`` touch the threshold without crossing.
    """
    tagged = sorted([(r, "p-") for r in _interior(lower_roots)]
                    + [(r, "p+") for r in _interior(upper_roots)])
    bounds = [r for r, _ in tagged]
    crossings = [c for _, c in tagged]
    touch = {float(r) for r in tangential}
    k = bisect.bisect_left(bounds, nominal)
    labels: list[Decision | None] = [None] * (len(bounds) + 1)
    labels[k] = Decision(nominal_decision)
    for j in range(k, len(bounds)):
        labels[j + 1] = labels[j] if bounds[j] in touch else _cross(labels[j], crossings[j])
    for j in range(k - 1, -1, -1):
        labels[j] = labels[j + 1] if bounds[j] in touch else _cross(labels[j + 1], crossings[j])
    bounds, crossings, labels = _merge_equal(bounds, crossings, labels)
    k = bisect.bisect_left(bounds, nominal)
    return DecisionRegions(tuple(bounds), tuple(labels), float(nominal), k,
                           _margin(bounds, k, nominal), (), tuple(crossings))


def single_param_regions(f, t: ThresholdModel, nominal: float | None = None) -> DecisionRegions:
    """Regions of unchanged decision for one parameter.

    ``f`` is a :class:`UnivariateSensitivity` (its parameter's nominal value
    is used) or a bare :class:`RationalFunction` with an explicit
    ``nominal``. Boundaries are the roots of f = p- and f = p+ in [0, 1];
    every interval is labelled by the decision at its midpoint.
    """
    if isinstance(f, UnivariateSensitivity):
        if nominal is None:
            nominal = f.param.nominal
        if not f.denominator_positive:
            raise DegenerateRegionError(
                f"denominator vanishes in [0, 1]; function valid only on {f.valid_interval}")
        f = f.function
    elif f.denominator.degree > 0 and roots_in_unit_interval(f.denominator):
        raise DegenerateRegionError("denominator vanishes in [0, 1]")
    if nominal is None:
        raise InputError("nominal parameter value required")

    tagged = []
    for p, which in ((t.p_minus, "p-"), (t.p_plus, "p+")):
        poly = threshold_polynomial(f, p)
        if poly.is_zero:
            raise DegenerateRegionError(f"function identically equal to threshold {which} = {p}")
        tagged += [(r, which) for r in _interior(roots_in_unit_interval(poly))]
    tagged.sort()
    dedup = []
    for r, which in tagged:
        if dedup and r - dedup[-1][0] <= 1e-9:
            continue
        dedup.append((r, which))
    bounds = [r for r, _ in dedup]
    crossings = [c for _, c in dedup]
    edges = [0.0, *bounds, 1.0]
    labels = [decide(float(f(0.5 * (a + b))), t) for a, b in zip(edges, edges[1:])]
    bounds, crossings, labels = _merge_equal(bounds, crossings, labels)

    k = bisect.bisect_left(bounds, nominal)
    if k < len(bounds) and bounds[k] == nominal and labels[k + 1] == decide(float(f(nominal)), t):
        k += 1
    signs = []
    for b in bounds:
        v = float(f.derivative(b))
        signs.append(0 if abs(v) <= DERIVATIVE_ZERO_TOL else int(np.sign(v)))
    return DecisionRegions(tuple(bounds), tuple(labels), float(nominal), k,
                           _margin(bounds, k, nominal), tuple(signs), tuple(crossings))


# -- two parameters -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """Sampled solution set of f(se, sp) = threshold, split into continuous branches."""

    threshold_label: str
    threshold: float
    branches: tuple[np.ndarray, ...]

    @property
    def points(self) -> np.ndarray:
        if not self.branches:
            return np.zeros((0, 2))
        return np.vstack(self.branches)

    @property
    def empty(self) -> bool:
        return not self.branches


def _curve(f: BivariateSensitivity, threshold: float, label: str, grid: np.ndarray,
           gap: float) -> BoundaryCurve:
    branches: list[list[tuple[float, float]]] = []
    for sp in grid:
        rf = f.restrict_sp(float(sp))
        poly = threshold_polynomial(rf, threshold)
        if poly.is_zero:
            roots = [float(s) for s in grid]
        else:
            roots = roots_in_unit_interval(poly)
        den_floor = _VANISHING_DENOMINATOR * float(np.max(np.abs(rf.denominator.coefficients)))
        for se in roots:
            # 0/0 points where the evidence becomes impossible are not boundary points
            if not rf.denominator(se) > den_floor or abs(rf(se) - threshold) > _ON_CURVE_TOL:
                continue
            best, best_d = None, gap * (1 + 1e-9)
            for b in branches:
                d = math.hypot(se - b[-1][0], sp - b[-1][1])
                if d <= best_d:
                    best, best_d = b, d
            if best is None:
                branches.append([(float(se), float(sp))])
            else:
                best.append((float(se), float(sp)))
    return BoundaryCurve(label, threshold, tuple(np.array(b) for b in branches))


def boundary_curves(f: BivariateSensitivity, t: ThresholdModel, samples: int = 101,
                    gap: float = BRANCH_GAP) -> tuple[BoundaryCurve, BoundaryCurve]:
    """Curves l- (f = p-) and l+ (f = p+) in the unit square.

    For each of ``samples`` equally spaced values of the second parameter
    (one grid row) the function is restricted to the first and all
    threshold roots in [0, 1] are collected. A row on which the function
    equals the threshold identically contributes every grid point. Points
    join the nearest branch end within ``gap``.
    """
    if samples < 2:
        raise InputError("need at least 2 samples")
    grid = np.linspace(0.0, 1.0, samples)
    return (_curve(f, t.p_minus, "p-", grid, gap), _curve(f, t.p_plus, "p+", grid, gap))


def classify_2d(f: BivariateSensitivity, t: ThresholdModel, point: tuple[float, float]) -> Decision:
    se, sp = point
    if not (0.0 <= se <= 1.0 and 0.0 <= sp <= 1.0):
        raise InputError(f"point {point} outside the unit square")
    return decide(f(se, sp), t)


def classification_grid(f: BivariateSensitivity, t: ThresholdModel, samples: int):
    """Rows ``(se, sp, probability, decision)`` over a ``samples`` x ``samples`` grid."""
    grid = np.linspace(0.0, 1.0, samples)
    rows = []
    for se in grid:
        for sp in grid:
            p = f(float(se), float(sp))
            rows.append((float(se), float(sp), p, decide(p, t)))
    return rows
