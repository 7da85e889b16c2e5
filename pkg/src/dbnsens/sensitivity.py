"""Sensitivity functions of filtered probabilities.

A filtered probability p(x_r^n | e_n), viewed as a function of one
parameter under proportional co-variation, is a quotient of polynomials
whose degrees grow linearly with the number of time steps. The
coefficients are recovered by refiltering the varied model at Chebyshev
nodes and interpolating the joint p(x_r^n, e_n) and the likelihood
p(e_n) separately, with a fixed a-priori degree bound for each.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    EvidenceDegeneracyError,
    FitFailureError,
    ImpossibleEvidenceError,
    InputError,
)
from .model import (
    EvidenceSequence,
    FactoredDbn,
    ParameterRef,
    apply_parameter,
    as_hmm,
    forward_filter,
)
from .polynomials import Polynomial, RationalFunction, chebyshev_nodes, interpolate, roots_in_unit_interval

logger = logging.getLogger(__name__)

MAX_DEGREE = 20
FIT_TOL = 1e-8
# fractional parts of k * golden ratio, k = 2, 1, 3
HELD_OUT = np.array([0.2360679774997897, 0.6180339887498949, 0.8541019662496845])
_NODE_PLANS = (("lobatto", HELD_OUT), ("gauss", 1.0 - HELD_OUT))


@dataclass(frozen=True)
class SensitivityTarget:
    """Probability of interest: X_time in ``states`` given evidence up to ``time``.

    ``states`` holds one state index for a plain HMM query; several indices
    express a marginal event of a flattened factored model.
    """

    states: tuple[int, ...]
    time: int
    evidence: EvidenceSequence | None = None

    def __post_init__(self):
        states = (self.states,) if np.isscalar(self.states) else self.states
        object.__setattr__(self, "states", tuple(int(s) for s in states))
        if self.time < 1:
            raise InputError(f"time step must be >= 1, got {self.time}")
        if self.evidence is not None and self.evidence.horizon and self.time > self.evidence.horizon:
            raise InputError(f"time step {self.time} beyond evidence horizon {self.evidence.horizon}")

    def observed(self, start: int = 1) -> bool:
        return self.evidence is not None and self.evidence.has_observations(self.time, start)


def expected_degrees(param: ParameterRef, target: SensitivityTarget, window_start: int = 1,
                     factored: bool = False) -> tuple[int, int]:
    """Degree bounds (numerator, denominator) of the sensitivity function.

    With ``h`` time steps in the analysed window: transition parameters give
    order ``h - 1``; observation parameters give ``h`` over ``h`` when the
    parameter row is a target state and ``h - 1`` over ``h`` otherwise;
    initial parameters give linear functions. Without evidence the
    denominator is the constant 1 and observation parameters have no effect.
    For factored models observation rows are parent configurations, so the
    row/state shortcut does not apply and the larger bound is used.
    """
    h = target.time - window_start + 1
    ev = target.observed(window_start)
    if param.kind == "initial":
        return 1, (1 if ev else 0)
    if param.kind == "transition":
        return h - 1, (h - 1 if ev else 0)
    if not ev:
        return 0, 0
    aligned = factored or param.row in target.states
    return (h if aligned else h - 1), h


def _refilter(model, target: SensitivityTarget, start: int, assignments) -> tuple[float, float]:
    varied = model
    for ref, value in assignments:
        varied = apply_parameter(varied, ref, value)
    result = forward_filter(as_hmm(varied), target.evidence, target.time, start=start)
    return result.joint(target.states), result.likelihood


def direct_value(model, target: SensitivityTarget, assignments, window_start: int = 1) -> float:
    """Filtered probability of the target after applying ``(ref, value)`` pairs."""
    joint, lik = _refilter(model, target, window_start, assignments)
    return joint / lik


@dataclass(frozen=True)
class UnivariateSensitivity:
    function: RationalFunction
    param: ParameterRef
    target: SensitivityTarget
    degree_bounds: tuple[int, int]
    fit_residual: float
    valid_interval: tuple[float, float] = (0.0, 1.0)
    window_start: int = 1

    def __call__(self, theta):
        return self.function(theta)

    @property
    def nominal_value(self) -> float:
        return float(self.function(self.param.nominal))

    @property
    def denominator_positive(self) -> bool:
        return self.valid_interval == (0.0, 1.0)


def compute_univariate(model, target: SensitivityTarget, param: ParameterRef, *,
                       window_start: int = 1, max_degree: int = MAX_DEGREE) -> UnivariateSensitivity:
    """Fit the sensitivity function of ``target`` in ``param``.

    ``model`` may be an :class:`HmmModel` or a :class:`FactoredDbn`; in the
    latter case the parameter refers to the factored tables and every
    refiltering run flattens the varied model. ``window_start > 1``
    restarts filtering at that step from the initial vector.
    """
    nb, db = expected_degrees(param, target, window_start, isinstance(model, FactoredDbn))
    if max(nb, db) > max_degree:
        raise InputError(f"degree bound {max(nb, db)} exceeds cap {max_degree}; "
                         "shorten the horizon or analyse a window")
    ev = target.observed(window_start)
    apply_parameter(model, param, param.nominal)  # surfaces co-variation errors up front

    failures = []
    for kind, held in _NODE_PLANS:
        num_x = np.concatenate((chebyshev_nodes(nb + 1, kind), held))
        den_x = np.concatenate((chebyshev_nodes(db + 1, kind), held))
        cache: dict[float, tuple[float, float]] = {}
        try:
            for theta in np.concatenate((num_x, den_x if ev else [])):
                if theta not in cache:
                    cache[theta] = _refilter(model, target, window_start, [(param, theta)])
        except ImpossibleEvidenceError as exc:
            failures.append((float(theta), exc.step))
            logger.warning("impossible evidence at node theta=%.12g (step %d); re-seeding nodes",
                           theta, exc.step)
            continue
        break
    else:
        raise EvidenceDegeneracyError(
            "evidence impossible at interpolation nodes "
            + ", ".join(f"theta={t:.12g} (step {s})" for t, s in failures))

    scale = max(lik for _, lik in cache.values()) if ev else 1.0
    num_fit = interpolate(num_x, [cache[t][0] / scale for t in num_x], nb)
    if ev:
        den_fit = interpolate(den_x, [cache[t][1] / scale for t in den_x], db)
        denominator = den_fit.polynomial
        residual = float(max(np.max(np.abs(num_fit.residuals)), np.max(np.abs(den_fit.residuals))))
    else:
        denominator = Polynomial([1.0])
        residual = float(np.max(np.abs(num_fit.residuals)))
    if residual > FIT_TOL:
        raise FitFailureError(f"held-out residual {residual:.3g} exceeds {FIT_TOL:g}: "
                              f"degree bound {(nb, db)} violated for {param}")
    function = RationalFunction(num_fit.polynomial, denominator)

    interval = (0.0, 1.0)
    if ev and denominator.degree > 0:
        roots = roots_in_unit_interval(denominator)
        if roots:
            lo = max((r for r in roots if r < param.nominal), default=0.0)
            hi = min((r for r in roots if r > param.nominal), default=1.0)
            interval = (lo, hi)
            logger.warning("denominator vanishes in [0, 1]; valid on (%.12g, %.12g)", lo, hi)
    return UnivariateSensitivity(function, param, target, (nb, db), residual, interval, window_start)


# -- two parameters from one observation table ----------------------------------

def _poly2_at(coeffs: np.ndarray, se: float, sp: float) -> float:
    return Polynomial([Polynomial(row)(sp) for row in coeffs])(se)


@dataclass(frozen=True, eq=False)
class BivariateSensitivity:
    """Filtered probability as a function of two rows' parameters of one observation table.

    ``numerator[a, b]`` is the coefficient of ``se**a * sp**b``.
    ``cross_term_magnitude`` is the largest coefficient involving both
    variables, relative to the largest coefficient overall; zero means the
    function is a quotient of sums of univariate polynomials.
    """

    numerator: np.ndarray
    denominator: np.ndarray
    params: tuple[ParameterRef, ParameterRef]
    target: SensitivityTarget
    fit_residual: float
    cross_term_magnitude: float
    window_start: int = 1

    def __call__(self, se, sp):
        se = np.asarray(se, dtype=float)
        sp = np.asarray(sp, dtype=float)
        if se.ndim == 0 and sp.ndim == 0:
            return float(_poly2_at(self.numerator, se, sp) / _poly2_at(self.denominator, se, sp))
        se, sp = np.broadcast_arrays(se, sp)
        flat = [self(a, b) for a, b in zip(se.ravel(), sp.ravel())]
        return np.array(flat).reshape(se.shape)

    def restrict_se(self, se: float) -> RationalFunction:
        """Univariate function of the second parameter with the first fixed at ``se``."""
        num = [Polynomial(self.numerator[:, k])(se) for k in range(self.numerator.shape[1])]
        den = [Polynomial(self.denominator[:, k])(se) for k in range(self.denominator.shape[1])]
        return RationalFunction(Polynomial(num), Polynomial(den))

    def restrict_sp(self, sp: float) -> RationalFunction:
        """Univariate function of the first parameter with the second fixed at ``sp``."""
        num = [Polynomial(row)(sp) for row in self.numerator]
        den = [Polynomial(row)(sp) for row in self.denominator]
        return RationalFunction(Polynomial(num), Polynomial(den))

    @property
    def nominal(self) -> tuple[float, float]:
        return self.params[0].nominal, self.params[1].nominal


def _fit_grid(x, values, d):
    rows = np.array([interpolate(x, v, d, trim=False).polynomial.coefficients for v in values])
    cols = [interpolate(x, rows[:, k], d, trim=False).polynomial.coefficients for k in range(d + 1)]
    return np.array(cols).T


def compute_bivariate(model, target: SensitivityTarget, params: tuple[ParameterRef, ParameterRef], *,
                      window_start: int = 1, max_degree: int = MAX_DEGREE) -> BivariateSensitivity:
    """Fit the sensitivity function in two parameters from distinct rows of one observation table.

    Typically the sensitivity (positive result given the condition) and the
    specificity (negative result given its absence) of one diagnostic test.
    """
    se_ref, sp_ref = params
    if se_ref.kind != "observation" or sp_ref.kind != "observation":
        raise InputError("both parameters must be observation parameters")
    if se_ref.stream != sp_ref.stream or se_ref.row == sp_ref.row:
        raise InputError("parameters must lie in distinct rows of the same observation table")
    h = target.time - window_start + 1
    ev = target.observed(window_start)
    d = h if ev else 0
    if d > max_degree:
        raise InputError(f"degree bound {d} exceeds cap {max_degree}")
    apply_parameter(apply_parameter(model, se_ref, se_ref.nominal), sp_ref, sp_ref.nominal)

    failures = []
    for kind, held in _NODE_PLANS:
        x = chebyshev_nodes(d + 1, kind)
        axis = np.concatenate((x, held))
        joint = np.empty((len(axis), len(axis)))
        lik = np.empty_like(joint)
        try:
            for a, se in enumerate(axis):
                for b, sp in enumerate(axis):
                    if a >= len(x) and b >= len(x) or a < len(x) and b < len(x):
                        joint[a, b], lik[a, b] = _refilter(
                            model, target, window_start, [(se_ref, se), (sp_ref, sp)])
        except ImpossibleEvidenceError as exc:
            failures.append(((float(se), float(sp)), exc.step))
            logger.warning("impossible evidence at node (%.12g, %.12g); re-seeding nodes", se, sp)
            continue
        break
    else:
        raise EvidenceDegeneracyError(
            "evidence impossible at interpolation nodes "
            + ", ".join(f"{p} (step {s})" for p, s in failures))

    k = len(x)
    scale = float(lik[:k, :k].max()) if ev else 1.0
    numerator = _fit_grid(x, joint[:k, :k] / scale, d)
    if ev:
        denominator = _fit_grid(x, lik[:k, :k] / scale, d)
    else:
        denominator = np.ones((1, 1))
    residual = 0.0
    for a in range(k, len(axis)):
        for b in range(k, len(axis)):
            residual = max(residual,
                           abs(_poly2_at(numerator, axis[a], axis[b]) - joint[a, b] / scale))
            if ev:
                residual = max(residual,
                               abs(_poly2_at(denominator, axis[a], axis[b]) - lik[a, b] / scale))
    if residual > FIT_TOL:
        raise FitFailureError(f"held-out residual {residual:.3g} exceeds {FIT_TOL:g} for {params}")
    biggest = max(np.max(np.abs(numerator)), np.max(np.abs(denominator)))
    cross = max(np.max(np.abs(numerator[1:, 1:]), initial=0.0),
                np.max(np.abs(denominator[1:, 1:]), initial=0.0))
    return BivariateSensitivity(numerator, denominator, (se_ref, sp_ref), target, float(residual),
                                float(cross / biggest) if biggest else 0.0, window_start)
