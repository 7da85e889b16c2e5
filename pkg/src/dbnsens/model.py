"""Hidden Markov models, factored DBNs, exact filtering and parameter variation.

Factored models are handled by flattening them into a single-process HMM
over the joint state space. Subprocesses evolve independently given the
previous slice; they interact only through observation streams that have
several subprocess parents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import reduce
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    CovariationError,
    ImpossibleEvidenceError,
    InputError,
    ModelValidationError,
    ParameterDomainError,
    StateSpaceTooLargeError,
)

STOCHASTIC_TOL = 1e-9
DEFAULT_STATE_CAP = 4096

PARAMETER_KINDS = ("initial", "transition", "observation")


def _frozen(a, ndim=None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise InputError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Violation:
    """One defect found by :func:`validate`."""

    matrix: str
    row: int | None
    kind: str
    magnitude: float

    def __str__(self):
        where = self.matrix if self.row is None else f"{self.matrix} row {self.row}"
        if self.kind == "row-sum":
            return f"row sum {self.magnitude:.12g} at {where}"
        if self.kind == "negative-entry":
            return f"negative entry {self.magnitude:.12g} at {where}"
        if self.kind == "entry-above-one":
            return f"entry above one {self.magnitude:.12g} at {where}"
        return f"{self.kind} ({self.magnitude:.12g}) at {where}"


@dataclass(frozen=True, eq=False)
class HmmModel:
    """Single-process HMM with one or more discrete observation streams.

    ``transition[i, j]`` is p(X_{t+1} = j | X_t = i); ``streams[k][i, v]``
    is p(Y^k_t = v | X_t = i); ``initial[i]`` is p(X_1 = i).
    """

    transition: np.ndarray
    streams: tuple[np.ndarray, ...]
    initial: np.ndarray
    state_labels: tuple[str, ...] | None = None
    stream_labels: tuple[str, ...] | None = None
    value_labels: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "transition", _frozen(self.transition, 2))
        set_(self, "streams", tuple(_frozen(o, 2) for o in self.streams))
        set_(self, "initial", _frozen(self.initial, 1))
        if self.state_labels is None:
            set_(self, "state_labels", tuple(str(i) for i in range(len(self.initial))))
        if self.stream_labels is None:
            set_(self, "stream_labels", tuple(f"y{k}" for k in range(len(self.streams))))
        if self.value_labels is None:
            set_(self, "value_labels",
                 tuple(tuple(str(v) for v in range(o.shape[1])) for o in self.streams))
        set_(self, "state_labels", tuple(self.state_labels))
        set_(self, "stream_labels", tuple(self.stream_labels))
        set_(self, "value_labels", tuple(tuple(v) for v in self.value_labels))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def stream_sizes(self) -> tuple[int, ...]:
        return tuple(o.shape[1] for o in self.streams)


@dataclass(frozen=True, eq=False)
class FactoredStream:
    parents: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        object.__setattr__(self, "matrix", _frozen(self.matrix, 2))


@dataclass(frozen=True, eq=False)
class FactoredDbn:
    """Transition-independent subprocesses coupled through shared observations.

    Observation matrix rows are indexed by parent configurations in
    lexicographic order of the parents' states (first parent most
    significant).
    """

    subprocesses: tuple[np.ndarray, ...]
    streams: tuple[FactoredStream, ...]
    initial: tuple[np.ndarray, ...]
    subprocess_labels: tuple[str, ...] | None = None
    state_labels: tuple[tuple[str, ...], ...] | None = None
    stream_labels: tuple[str, ...] | None = None
    value_labels: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "subprocesses", tuple(_frozen(a, 2) for a in self.subprocesses))
        set_(self, "initial", tuple(_frozen(g, 1) for g in self.initial))
        set_(self, "streams", tuple(
            s if isinstance(s, FactoredStream) else FactoredStream(*s) for s in self.streams))
        if self.subprocess_labels is None:
            set_(self, "subprocess_labels", tuple(f"x{s}" for s in range(len(self.subprocesses))))
        if self.state_labels is None:
            set_(self, "state_labels",
                 tuple(tuple(str(i) for i in range(len(g))) for g in self.initial))
        if self.stream_labels is None:
            set_(self, "stream_labels", tuple(f"y{k}" for k in range(len(self.streams))))
        if self.value_labels is None:
            set_(self, "value_labels", tuple(
                tuple(str(v) for v in range(s.matrix.shape[1])) for s in self.streams))

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(a.shape[0] for a in self.subprocesses)

    @property
    def num_joint_states(self) -> int:
        return math.prod(self.sizes)

    def joint_states_where(self, subprocess: int, state: int) -> tuple[int, ...]:
        """Indices of flattened joint states in which ``subprocess`` is in ``state``."""
        coords = np.unravel_index(np.arange(self.num_joint_states), self.sizes)
        return tuple(int(i) for i in np.flatnonzero(coords[subprocess] == state))


@dataclass(frozen=True)
class EvidenceSequence:
    """Per-slice observations; ``slices[t-1]`` maps stream index to value index."""

    slices: tuple[Mapping[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "slices", tuple(
            MappingProxyType({int(k): int(v) for k, v in dict(s).items()}) for s in self.slices))

    @classmethod
    def empty(cls, horizon: int) -> EvidenceSequence:
        return cls(tuple({} for _ in range(horizon)))

    @property
    def horizon(self) -> int:
        return len(self.slices)

    def has_observations(self, upto: int | None = None, start: int = 1) -> bool:
        upto = self.horizon if upto is None else min(upto, self.horizon)
        return any(len(self.slices[t - 1]) for t in range(start, upto + 1))

    def violations(self, model: HmmModel) -> list[str]:
        sizes = model.stream_sizes
        out = []
        for t, obs in enumerate(self.slices, start=1):
            for k, v in obs.items():
                if not 0 <= k < len(sizes):
                    out.append(f"stream index {k} out of range at time step {t}")
                elif not 0 <= v < sizes[k]:
                    out.append(f"value index {v} out of range for stream {k} at time step {t}")
        return out


@dataclass(frozen=True)
class ParameterRef:
    """One network parameter.

    ``row``/``column`` address the entry: for ``initial`` parameters ``row``
    is the state index and ``column`` is unused. ``stream`` is required for
    observation parameters, ``subprocess`` for transition and initial
    parameters of a :class:`FactoredDbn`.
    """

    kind: str
    row: int
    column: int | None = None
    stream: int | None = None
    subprocess: int | None = None
    nominal: float = float("nan")

    @classmethod
    def on(cls, model, kind, row, column=None, stream=None, subprocess=None) -> ParameterRef:
        ref = cls(kind, int(row), None if column is None else int(column),
                  None if stream is None else int(stream),
                  None if subprocess is None else int(subprocess))
        vector, entry = _parameter_row(model, ref)
        return replace(ref, nominal=float(vector[entry]))

    @property
    def entry(self) -> int:
        return self.row if self.kind == "initial" else self.column


def _parameter_row(model, ref: ParameterRef) -> tuple[np.ndarray, int]:
    """The probability vector holding ``ref`` and the entry index within it."""
    if ref.kind not in PARAMETER_KINDS:
        raise ParameterDomainError(f"unknown parameter kind {ref.kind!r}")
    factored = isinstance(model, FactoredDbn)
    try:
        if ref.kind == "observation":
            if ref.stream is None:
                raise ParameterDomainError("observation parameter needs a stream index")
            matrix = model.streams[ref.stream]
            matrix = matrix.matrix if factored else matrix
            vector = matrix[ref.row]
        else:
            if factored:
                if ref.subprocess is None:
                    raise ParameterDomainError(
                        f"{ref.kind} parameter of a factored model needs a subprocess index")
                source = (model.initial if ref.kind == "initial" else model.subprocesses)[ref.subprocess]
            else:
                source = model.initial if ref.kind == "initial" else model.transition
            vector = source if ref.kind == "initial" else source[ref.row]
        entry = ref.entry
        if entry is None:
            raise ParameterDomainError(f"{ref.kind} parameter needs a column index")
        if min(ref.row, entry) < 0 or entry >= len(vector):
            raise IndexError
    except IndexError:
        raise ParameterDomainError(f"parameter index out of range: {ref}") from None
    return vector, entry


def covary(row: np.ndarray, entry: int, value: float) -> np.ndarray:
    """Set ``row[entry] = value`` and rescale the other entries proportionally."""
    row = np.asarray(row, dtype=float)
    nominal = row[entry]
    if not 0.0 <= value <= 1.0:
        raise ParameterDomainError(f"parameter value {value!r} outside [0, 1]")
    if 1.0 - nominal <= 0.0:
        raise CovariationError(f"co-variation undefined: nominal entry {nominal!r} equals 1")
    out = row * ((1.0 - value) / (1.0 - nominal))
    out[entry] = value
    return out


def apply_parameter(model, ref: ParameterRef, value: float):
    """Return a copy of ``model`` with ``ref`` set to ``value`` under proportional co-variation."""
    vector, entry = _parameter_row(model, ref)
    new_row = covary(vector, entry, value)
    factored = isinstance(model, FactoredDbn)

    def patched(matrix):
        m = np.array(matrix)
        m[ref.row] = new_row
        return m

    if ref.kind == "initial":
        if factored:
            initial = list(model.initial)
            initial[ref.subprocess] = new_row
            return replace(model, initial=tuple(initial))
        return replace(model, initial=new_row)
    if ref.kind == "transition":
        if factored:
            subs = list(model.subprocesses)
            subs[ref.subprocess] = patched(subs[ref.subprocess])
            return replace(model, subprocesses=tuple(subs))
        return replace(model, transition=patched(model.transition))
    streams = list(model.streams)
    if factored:
        s = streams[ref.stream]
        streams[ref.stream] = FactoredStream(s.parents, patched(s.matrix))
    else:
        streams[ref.stream] = patched(streams[ref.stream])
    return replace(model, streams=tuple(streams))


# -- validation ---------------------------------------------------------------

def _check_stochastic(name, arr, out, expect_rows=None, min_cols=2):
    arr = np.atleast_2d(arr)
    if expect_rows is not None and arr.shape[0] != expect_rows:
        out.append(Violation(name, None, "row-count", float(arr.shape[0])))
    if arr.shape[1] < min_cols:
        out.append(Violation(name, None, "too-few-columns", float(arr.shape[1])))
    for i, row in enumerate(arr):
        r = None if arr.shape[0] == 1 and name.endswith("initial") else i
        if not np.all(np.isfinite(row)):
            out.append(Violation(name, r, "non-finite-entry", float("nan")))
            continue
        if row.min() < 0:
            out.append(Violation(name, r, "negative-entry", float(row.min())))
        if row.max() > 1:
            out.append(Violation(name, r, "entry-above-one", float(row.max())))
        s = float(row.sum())
        if abs(s - 1.0) > STOCHASTIC_TOL:
            out.append(Violation(name, r, "row-sum", s))


def validate(model) -> list[Violation]:
    """List every invariant violation of an :class:`HmmModel` or :class:`FactoredDbn`."""
    out: list[Violation] = []
    if isinstance(model, FactoredDbn):
        sizes = []
        for s, (a, g) in enumerate(zip(model.subprocesses, model.initial)):
            if a.shape[0] != a.shape[1]:
                out.append(Violation(f"subprocess[{s}].transition", None, "not-square", float(a.shape[1])))
            if a.shape[0] < 2:
                out.append(Violation(f"subprocess[{s}].transition", None, "too-few-states", float(a.shape[0])))
            _check_stochastic(f"subprocess[{s}].transition", a, out, min_cols=2)
            if len(g) != a.shape[0]:
                out.append(Violation(f"subprocess[{s}].initial", None, "length", float(len(g))))
            _check_stochastic(f"subprocess[{s}].initial", g[None, :], out, min_cols=1)
            sizes.append(a.shape[0])
        if len(model.initial) != len(model.subprocesses):
            out.append(Violation("initial", None, "count", float(len(model.initial))))
        for k, stream in enumerate(model.streams):
            name = f"observation[{k}]"
            ps = stream.parents
            if any(b <= a for a, b in zip(ps, ps[1:])):
                out.append(Violation(name, None, "parents-not-increasing", float(len(ps))))
            if any(not 0 <= p < len(sizes) for p in ps):
                out.append(Violation(name, None, "parent-out-of-range", float(max(ps, default=-1))))
                continue
            _check_stochastic(name, stream.matrix, out, expect_rows=math.prod(sizes[p] for p in ps))
        return out

    a = model.transition
    l = a.shape[0]
    if a.shape[0] != a.shape[1]:
        out.append(Violation("transition", None, "not-square", float(a.shape[1])))
    if l < 2:
        out.append(Violation("transition", None, "too-few-states", float(l)))
    _check_stochastic("transition", a, out)
    if len(model.initial) != l:
        out.append(Violation("initial", None, "length", float(len(model.initial))))
    _check_stochastic("initial", model.initial[None, :], out, min_cols=1)
    for k, o in enumerate(model.streams):
        _check_stochastic(f"observation[{k}]", o, out, expect_rows=l)
    return out


def checked(model):
    """Validate ``model`` and renormalize rows whose sums are off by less than the tolerance.

    Raises :class:`ModelValidationError` listing every violation otherwise.
    """
    violations = validate(model)
    if violations:
        raise ModelValidationError(
            "invalid model: " + "; ".join(str(v) for v in violations), violations)

    def norm(m):
        m = np.asarray(m, dtype=float)
        return m / m.sum(axis=-1, keepdims=True)

    if isinstance(model, FactoredDbn):
        return replace(
            model,
            subprocesses=tuple(norm(a) for a in model.subprocesses),
            initial=tuple(norm(g) for g in model.initial),
            streams=tuple(FactoredStream(s.parents, norm(s.matrix)) for s in model.streams),
        )
    return replace(model, transition=norm(model.transition),
                   streams=tuple(norm(o) for o in model.streams), initial=norm(model.initial))


# -- flattening -----------------------------------------------------------------

def flatten(dbn: FactoredDbn, cap: int = DEFAULT_STATE_CAP) -> HmmModel:
    """Enumerate joint subprocess states into an equivalent single-process HMM.

    Joint states are ordered lexicographically with subprocess 0 most
    significant, which is the row order of ``kron(A_0, A_1, ...)``.
    """
    sizes = dbn.sizes
    total = math.prod(sizes)
    if total > cap:
        raise StateSpaceTooLargeError(total, cap)
    transition = reduce(np.kron, dbn.subprocesses)
    initial = reduce(np.kron, dbn.initial)
    coords = np.unravel_index(np.arange(total), sizes)
    streams = []
    for stream in dbn.streams:
        if stream.parents:
            config = np.ravel_multi_index(
                tuple(coords[p] for p in stream.parents), tuple(sizes[p] for p in stream.parents))
        else:
            config = np.zeros(total, dtype=int)
        streams.append(stream.matrix[config])
    labels = tuple(
        ",".join(f"{dbn.subprocess_labels[s]}={dbn.state_labels[s][c[s]]}" for s in range(len(sizes)))
        for c in zip(*coords))
    return HmmModel(transition, tuple(streams), initial, labels,
                    dbn.stream_labels, dbn.value_labels)


def as_hmm(model, cap: int = DEFAULT_STATE_CAP) -> HmmModel:
    return flatten(model, cap) if isinstance(model, FactoredDbn) else model


# -- filtering ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FilterResult:
    posterior: np.ndarray
    log_likelihood: float
    trajectory: np.ndarray
    start: int = 1

    @property
    def likelihood(self) -> float:
        return math.exp(self.log_likelihood)

    def joint(self, states: Sequence[int]) -> float:
        """p(X_n in states, e) recovered from the normalized posterior."""
        return float(self.posterior[list(states)].sum()) * self.likelihood


def forward_filter(model: HmmModel, evidence: EvidenceSequence | None, n: int | None = None,
                   *, start: int = 1) -> FilterResult:
    """Normalized forward recursion from ``start`` through ``n``.

    The recursion is initialized at ``start`` with the initial vector, so
    ``start > 1`` gives the windowed approximation that ignores evidence
    before ``start``. The log-likelihood accumulates the per-step
    normalizers of observed slices only.
    """
    if evidence is None:
        evidence = EvidenceSequence()
    if n is None:
        n = max(evidence.horizon, start)
    if not 1 <= start <= n:
        raise InputError(f"need 1 <= start <= n, got start={start}, n={n}")
    if evidence.horizon and n > evidence.horizon:
        raise InputError(f"time step {n} beyond evidence horizon {evidence.horizon}")
    problems = evidence.violations(model)
    if problems:
        raise InputError("; ".join(problems))

    belief = np.array(model.initial, dtype=float)
    traj = np.empty((n - start + 1, model.num_states))
    loglik = 0.0
    for t in range(start, n + 1):
        if t > start:
            belief = belief @ model.transition
        obs = evidence.slices[t - 1] if t <= evidence.horizon else {}
        for k, v in obs.items():
            belief = belief * model.streams[k][:, v]
        z = belief.sum()
        if not z > 0.0:
            raise ImpossibleEvidenceError(t)
        belief = belief / z
        if obs:
            loglik += math.log(z)
        traj[t - start] = belief
    traj.setflags(write=False)
    return FilterResult(traj[-1], loglik, traj, start)
