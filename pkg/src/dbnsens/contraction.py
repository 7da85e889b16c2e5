"""Contraction-based windowed filtering.

A transition matrix with minimal mixing rate ``delta`` shrinks the
relative entropy between two distributions by at least ``1 - delta`` per
step. Exact and approximate filters that start from different
distributions therefore converge, and the posterior at step n can be
approximated by filtering only the suffix of evidence starting at
``n_phi``, restarting from the initial vector there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWindowError, InputError, ModelValidationError, StateSpaceTooLargeError
from .model import STOCHASTIC_TOL, EvidenceSequence, HmmModel, ParameterRef, forward_filter
from .sensitivity import SensitivityTarget, UnivariateSensitivity, compute_univariate, direct_value

DEFAULT_ASSIGNMENT_CAP = 10**6
_CHUNK = 1 << 20


def mixing_rate(transition) -> float:
    """min over row pairs (i, k) of sum_j min(A[i, j], A[k, j])."""
    a = np.asarray(transition, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ModelValidationError(f"transition matrix must be square, got shape {a.shape}")
    if np.any(a < 0) or np.any(np.abs(a.sum(axis=1) - 1.0) > STOCHASTIC_TOL):
        raise ModelValidationError("transition matrix is not row-stochastic")
    best = 1.0
    for row in a:
        best = min(best, float(np.minimum(row, a).sum(axis=1).min()))
    return min(max(best, 0.0), 1.0)


def relative_entropy(mu, nu) -> float:
    """D[mu || nu] in nats; +inf when mu puts mass where nu has none."""
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise InputError(f"distribution shapes differ: {mu.shape} vs {nu.shape}")
    support = mu > 0
    if np.any(nu[support] <= 0):
        return math.inf
    return max(float(np.sum(mu[support] * np.log(mu[support] / nu[support]))), 0.0)


@dataclass(frozen=True)
class ContractionReport:
    delta: float
    n: int
    n_phi: int
    epsilon: float
    mode: str
    M: float | None = None
    bound: float | None = None
    achieved: float | None = None
    vacuous: bool = False

    @property
    def window_length(self) -> int:
        return self.n - self.n_phi + 1


def approximate_filter(model: HmmModel, evidence: EvidenceSequence | None, n_phi: int, n: int) -> np.ndarray:
    """Posterior at ``n`` from a filter restarted at ``n_phi`` with the initial vector."""
    return forward_filter(model, evidence, n, start=n_phi).posterior


def _bound(delta, steps, divergence):
    factor = (1.0 - delta) ** steps
    return 0.0 if factor == 0.0 else factor * divergence


def backward_window_exact(model: HmmModel, evidence: EvidenceSequence | None, n: int,
                          epsilon: float) -> ContractionReport:
    """Largest window start whose contraction bound is within ``epsilon``.

    Scans n_phi = n, n-1, ..., 1 and stops at the first n_phi with
    (1 - delta)^(n - n_phi) * D[p(X_nphi | e_nphi) || p(X_1)] <= epsilon.
    If none qualifies the full window is used and the report is marked
    vacuous.
    """
    if not epsilon > 0:
        raise InputError("epsilon must be positive")
    exact = forward_filter(model, evidence, n)
    delta = mixing_rate(model.transition)
    n_phi, bound, vacuous = 1, None, True
    for start in range(n, 0, -1):
        b = _bound(delta, n - start, relative_entropy(exact.trajectory[start - 1], model.initial))
        if b <= epsilon:
            n_phi, bound, vacuous = start, b, False
            break
    if vacuous:
        bound = _bound(delta, n - 1, relative_entropy(exact.trajectory[0], model.initial))
    achieved = relative_entropy(exact.posterior, approximate_filter(model, evidence, n_phi, n))
    return ContractionReport(delta, n, n_phi, epsilon, "exact-posteriors", None, bound, achieved, vacuous)


def backward_window_approx(n: int, delta: float, epsilon: float, M: float) -> int:
    """n_phi = max{1, n - floor(log(epsilon / M) / log(1 - delta))}, clamped to [1, n]."""
    if not (epsilon > 0 and M > 0):
        raise InputError("epsilon and M must be positive")
    if not 0.0 < delta < 1.0:
        raise DegenerateWindowError(f"window formula undefined for mixing rate {delta}")
    ratio = math.log(epsilon / M) / math.log(1.0 - delta)
    steps = math.floor(ratio + 1e-12 * max(1.0, abs(ratio)))
    return max(1, min(n, n - steps))


def _likelihood_blocks(streams, num_states):
    def rec(prefix, k):
        if k == len(streams):
            yield prefix
            return
        if prefix.shape[0] > 1 and prefix.shape[0] * streams[k].size > _CHUNK:
            for row in prefix:
                yield from rec(row[None, :], k)
            return
        nxt = (prefix[:, None, :] * streams[k].T[None, :, :]).reshape(-1, num_states)
        yield from rec(nxt, k + 1)

    yield from rec(np.ones((1, num_states)), 0)


def worst_case_M(model: HmmModel, cap: int = DEFAULT_ASSIGNMENT_CAP) -> float:
    """Largest D[p(X_1 | y) || p(X_1)] over all joint first-step observations y."""
    if not model.streams:
        return 0.0
    count = math.prod(model.stream_sizes)
    if count > cap:
        raise StateSpaceTooLargeError(count, cap, "observation assignment count")
    prior = np.asarray(model.initial)
    worst = 0.0
    for lik in _likelihood_blocks(model.streams, model.num_states):
        joint = lik * prior
        z = joint.sum(axis=1)
        ok = z > 0
        post = joint[ok] / z[ok, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(post > 0, post * np.log(post / prior), 0.0)
        if terms.size:
            worst = max(worst, float(terms.sum(axis=1).max()))
    return worst


def backward_window_mbound(model: HmmModel, n: int, epsilon: float, M: float | None = None,
                           evidence: EvidenceSequence | None = None) -> ContractionReport:
    """Window from the divergence bound ``M`` (worst case over first-step observations by default).

    Mixing rates 0 and 1 fall back to the full window and to the single
    step n respectively. When evidence is given the achieved divergence
    against exact filtering is measured.
    """
    if not epsilon > 0:
        raise InputError("epsilon must be positive")
    delta = mixing_rate(model.transition)
    if M is None:
        M = worst_case_M(model)
    vacuous = False
    if M <= epsilon:
        n_phi = n
    elif delta == 0.0:
        n_phi, vacuous = 1, True
    elif delta == 1.0:
        n_phi = n
    else:
        n_phi = backward_window_approx(n, delta, epsilon, M)
        vacuous = n_phi == 1 and _bound(delta, n - 1, M) > epsilon
    achieved = None
    if evidence is not None:
        exact = forward_filter(model, evidence, n).posterior
        achieved = relative_entropy(exact, approximate_filter(model, evidence, n_phi, n))
    return ContractionReport(delta, n, n_phi, epsilon, "M-bound", float(M),
                             _bound(delta, n - n_phi, M), achieved, vacuous)


def window_sweep(n: int, epsilon: float, M: float, deltas=None) -> list[tuple[float, int]]:
    """(delta, n_phi) pairs for plotting the step-shaped window curve."""
    if deltas is None:
        deltas = np.round(np.arange(1, 100) / 100, 2)
    return [(float(d), backward_window_approx(n, float(d), epsilon, M)) for d in deltas]


@dataclass(frozen=True)
class WindowedSensitivity:
    """Sensitivity function computed on the window [n_phi, n].

    The accuracy guarantee covers initial and observation parameters only;
    for transition parameters ``certified`` is False and
    ``nominal_deviation`` gives the measured error at the nominal value.
    """

    sensitivity: UnivariateSensitivity
    certified: bool
    nominal_deviation: float


def windowed_sensitivity(model, target: SensitivityTarget, param: ParameterRef,
                         n_phi: int) -> WindowedSensitivity:
    s = compute_univariate(model, target, param, window_start=n_phi)
    exact = direct_value(model, target, [(param, param.nominal)])
    return WindowedSensitivity(s, param.kind != "transition", abs(s.nominal_value - exact))
