"""JSON model/evidence files and label resolution.

Model file, single process::

    {"states": [...], "transition": [[...]], "initial": [...],
     "streams": [{"label": ..., "values": [...], "matrix": [[...]]}]}

Factored model: ``subprocesses`` replaces ``states``/``transition``/``initial``::

    {"subprocesses": [{"label": ..., "states": [...], "transition": ..., "initial": ...}],
     "streams": [{"label": ..., "values": [...], "parents": [...], "matrix": ...}]}

Observation rows of a factored stream follow the parents' state
combinations in lexicographic order. Evidence files are JSON lists with one
object per time step mapping stream label to value label; absent streams
are unobserved.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .decision import ThresholdModel
from .errors import InputError, LabelResolutionError, ModelValidationError
from .model import EvidenceSequence, FactoredDbn, FactoredStream, HmmModel, ParameterRef


def _index(labels, label, what) -> int:
    labels = list(labels)
    if label in labels:
        return labels.index(label)
    try:
        i = int(label)
    except (TypeError, ValueError):
        raise LabelResolutionError(f"unknown {what} {label!r}; known: {', '.join(labels)}") from None
    if not 0 <= i < len(labels):
        raise LabelResolutionError(f"{what} index {i} out of range")
    return i


def _matrix(obj, name):
    try:
        arr = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        raise ModelValidationError(f"model file: {name} is not a numeric matrix") from None
    return arr


def _field(d, key, where="model file"):
    try:
        return d[key]
    except (KeyError, TypeError):
        raise ModelValidationError(f"{where}: missing field {key!r}") from None


def _labels(values, count, prefix=""):
    return tuple(str(v) for v in values) if values is not None else tuple(f"{prefix}{i}" for i in range(count))


def model_from_dict(doc: dict):
    """Build an :class:`HmmModel` or :class:`FactoredDbn` from a parsed model file."""
    if not isinstance(doc, dict):
        raise ModelValidationError("model file: top level must be an object")
    streams = doc.get("streams", [])
    if "subprocesses" in doc:
        subs = doc["subprocesses"]
        sub_labels = tuple(str(_field(s, "label", "subprocess")) for s in subs)
        fstreams, value_labels = [], []
        for k, s in enumerate(streams):
            m = _matrix(_field(s, "matrix", "stream"), f"stream {k} matrix")
            parents = tuple(_index(sub_labels, p, "parent subprocess") for p in s.get("parents", []))
            fstreams.append(FactoredStream(parents, m))
            value_labels.append(_labels(s.get("values"), m.shape[1] if m.ndim == 2 else 0))
        return FactoredDbn(
            tuple(_matrix(_field(s, "transition", "subprocess"), "transition") for s in subs),
            tuple(fstreams),
            tuple(_matrix(_field(s, "initial", "subprocess"), "initial") for s in subs),
            sub_labels,
            tuple(_labels(s.get("states"), len(s["initial"])) for s in subs),
            tuple(str(_field(s, "label", "stream")) for s in streams),
            tuple(value_labels),
        )
    transition = _matrix(_field(doc, "transition"), "transition")
    initial = _matrix(_field(doc, "initial"), "initial")
    mats, value_labels = [], []
    for k, s in enumerate(streams):
        if s.get("parents"):
            raise ModelValidationError("model file: stream parents are only valid with subprocesses")
        m = _matrix(_field(s, "matrix", "stream"), f"stream {k} matrix")
        mats.append(m)
        value_labels.append(_labels(s.get("values"), m.shape[1] if m.ndim == 2 else 0))
    try:
        return HmmModel(transition, tuple(mats), initial,
                        _labels(doc.get("states"), len(initial)),
                        tuple(str(_field(s, "label", "stream")) for s in streams),
                        tuple(value_labels))
    except InputError as exc:
        raise ModelValidationError(f"model file: {exc}") from None


def _read_json(path):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelValidationError(f"{path}: invalid JSON ({exc})") from None


def load_model(path):
    return model_from_dict(_read_json(path))


def evidence_from_list(doc, model) -> EvidenceSequence:
    if not isinstance(doc, list):
        raise ModelValidationError("evidence file: top level must be a list of per-step objects")
    slices = []
    for t, step in enumerate(doc, start=1):
        if not isinstance(step, dict):
            raise ModelValidationError(f"evidence file: time step {t} is not an object")
        obs = {}
        for stream_label, value_label in step.items():
            k = _index(model.stream_labels, stream_label, "stream")
            obs[k] = _index(model.value_labels[k], value_label, f"value of stream {stream_label!r}")
        slices.append(obs)
    return EvidenceSequence(tuple(slices))


def load_evidence(path, model) -> EvidenceSequence:
    return evidence_from_list(_read_json(path), model)


def resolve_states(model, spec: str) -> tuple[int, ...]:
    """Target state indices.

    For an HMM ``spec`` is a state label (or index). For a factored model it
    is ``subprocess=state`` terms joined by commas; the result is every
    joint state satisfying all terms.
    """
    if isinstance(model, FactoredDbn):
        chosen = set(range(model.num_joint_states))
        for term in spec.split(","):
            if "=" not in term:
                raise LabelResolutionError(f"target term {term!r} must read subprocess=state")
            sub, state = (x.strip() for x in term.split("=", 1))
            s = _index(model.subprocess_labels, sub, "subprocess")
            chosen &= set(model.joint_states_where(s, _index(model.state_labels[s], state, "state")))
        return tuple(sorted(chosen))
    return (_index(model.state_labels, spec, "state"),)


def _row_labels(model, stream):
    if isinstance(model, FactoredDbn):
        parents = model.streams[stream].parents
        if not parents:
            return ("*",)
        combos = [()]
        for p in parents:
            combos = [c + (lab,) for c in combos for lab in model.state_labels[p]]
        return tuple("/".join(c) for c in combos)
    return model.state_labels


def parse_param(model, spec: str) -> ParameterRef:
    """Resolve ``kind:row:column[:stream]``.

    ``initial:<state>[:<subprocess>]``, ``transition:<from>:<to>[:<subprocess>]``
    and ``observation:<row>:<value>:<stream>``; factored observation rows
    are parent states joined with ``/``.
    """
    parts = spec.split(":")
    kind = parts[0]
    factored = isinstance(model, FactoredDbn)
    try:
        if kind == "initial":
            if factored:
                s = _index(model.subprocess_labels, parts[2], "subprocess")
                return ParameterRef.on(model, kind, _index(model.state_labels[s], parts[1], "state"),
                                       subprocess=s)
            return ParameterRef.on(model, kind, _index(model.state_labels, parts[1], "state"))
        if kind == "transition":
            if factored:
                s = _index(model.subprocess_labels, parts[3], "subprocess")
                labels = model.state_labels[s]
                return ParameterRef.on(model, kind, _index(labels, parts[1], "state"),
                                       _index(labels, parts[2], "state"), subprocess=s)
            return ParameterRef.on(model, kind, _index(model.state_labels, parts[1], "state"),
                                   _index(model.state_labels, parts[2], "state"))
        if kind == "observation":
            k = _index(model.stream_labels, parts[3], "stream")
            return ParameterRef.on(model, kind, _index(_row_labels(model, k), parts[1], "observation row"),
                                   _index(model.value_labels[k], parts[2], "value"), stream=k)
    except IndexError:
        raise LabelResolutionError(f"parameter spec {spec!r} has too few fields") from None
    raise LabelResolutionError(f"unknown parameter kind {kind!r} in {spec!r}")


def param_spec(model, ref: ParameterRef) -> dict:
    """Label-level description of ``ref`` for reports."""
    out = {"kind": ref.kind}
    if isinstance(model, FactoredDbn) and ref.kind != "observation":
        labels = model.state_labels[ref.subprocess]
        out["subprocess"] = model.subprocess_labels[ref.subprocess]
    elif ref.kind == "observation":
        labels = _row_labels(model, ref.stream)
    else:
        labels = model.state_labels
    out["row"] = labels[ref.row]
    if ref.kind == "transition":
        out["column"] = labels[ref.column]
    if ref.kind == "observation":
        out["stream"] = model.stream_labels[ref.stream]
        out["column"] = model.value_labels[ref.stream][ref.column]
    out["nominal"] = ref.nominal
    return out


def parse_thresholds(text: str) -> ThresholdModel:
    try:
        values = [float(x) for x in text.split(",")]
    except ValueError:
        raise InputError(f"thresholds must be three comma-separated numbers, got {text!r}") from None
    if len(values) != 3 or not all(math.isfinite(v) for v in values):
        raise InputError(f"thresholds must be three comma-separated numbers, got {text!r}")
    return ThresholdModel(*values)
