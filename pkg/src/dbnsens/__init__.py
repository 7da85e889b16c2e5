"""Sensitivity analysis and windowed filtering for dynamic Bayesian networks."""

from .contraction import (
    ContractionReport,
    approximate_filter,
    backward_window_approx,
    backward_window_exact,
    backward_window_mbound,
    mixing_rate,
    relative_entropy,
    worst_case_M,
)
from .decision import (
    Decision,
    DecisionRegions,
    ThresholdModel,
    boundary_curves,
    classify_2d,
    decide,
    single_param_regions,
)
from .errors import ComputationError, DbnSensError, InputError
from .model import (
    EvidenceSequence,
    FactoredDbn,
    FactoredStream,
    HmmModel,
    ParameterRef,
    apply_parameter,
    covary,
    flatten,
    forward_filter,
    validate,
)
from .polynomials import Polynomial, RationalFunction, interpolate, roots_in_unit_interval
from .sensitivity import SensitivityTarget, compute_bivariate, compute_univariate

__all__ = [name for name in dir() if not name.startswith("_")]
