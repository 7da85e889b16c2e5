"""Command-line front end.

Exit codes: 0 success, 1 invalid input (model, evidence, labels, flags),
2 computation error (impossible evidence, degenerate function, failed fit),
3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import contraction, decision, sensitivity
from .errors import ComputationError, InputError, ModelValidationError
from .io import load_evidence, load_model, param_spec, parse_param, parse_thresholds, resolve_states
from .model import EvidenceSequence, as_hmm, checked, forward_filter, validate

EXIT_OK, EXIT_INPUT, EXIT_COMPUTE, EXIT_IO = 0, 1, 2, 3
CURVE_POINTS = 201
COMMANDS = ("validate", "filter", "sens", "regions", "cpt2d", "window", "report")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


@dataclass
class Output:
    doc: dict
    table: tuple[list[str], list] | None = None
    extras: dict = field(default_factory=dict)
    status: int = EXIT_OK


def num(x):
    """Round to 12 significant digits for reports; inf/nan become strings/null."""
    if isinstance(x, decision.Decision):
        return x.label
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(f"{x:.12g}")


def clean(obj):
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [clean(v) for v in obj]
    if obj is None or isinstance(obj, str):
        return obj
    return num(obj)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else v for v in clean(list(row))])
    return buf.getvalue()


# -- shared loading ---------------------------------------------------------------

def _context(args, need_state=False):
    model = checked(load_model(args.model))
    evidence = load_evidence(args.evidence, model) if args.evidence else None
    horizon = evidence.horizon if evidence is not None else 0
    n = args.time if args.time is not None else max(horizon, 1)
    if n < 1:
        raise InputError("--time must be >= 1")
    if evidence is None:
        evidence = EvidenceSequence.empty(n)
    states = None
    if need_state:
        if not args.state:
            raise InputError("--state is required for this command")
        states = resolve_states(model, args.state)
    return model, evidence, n, states


def _thresholds(args):
    if not args.thresholds:
        raise InputError("--thresholds p-,p*,p+ is required for this command")
    return parse_thresholds(args.thresholds)


def _param(args, model, which="param"):
    spec = getattr(args, which)
    if not spec:
        raise InputError(f"--{which} is required for this command")
    return parse_param(model, spec)


def _sens_doc(model, s: sensitivity.UnivariateSensitivity) -> dict:
    return {
        "param": param_spec(model, s.param),
        "time": s.target.time,
        "window_start": s.window_start,
        "degree_bounds": {"numerator": s.degree_bounds[0], "denominator": s.degree_bounds[1]},
        "numerator": s.function.numerator.coefficients,
        "denominator": s.function.denominator.coefficients,
        "fit_residual": s.fit_residual,
        "valid_interval": s.valid_interval,
        "nominal_probability": s.nominal_value,
    }


def _regions_doc(r: decision.DecisionRegions) -> dict:
    return {
        "boundaries": r.boundaries,
        "crossings": r.crossings,
        "derivative_signs": r.derivative_signs,
        "intervals": [{"lower": lo, "upper": hi, "decision": lab} for lo, hi, lab in r.intervals()],
        "nominal": r.nominal,
        "nominal_decision": r.nominal_decision,
        "nominal_interval": r.nominal_interval,
        "margin": r.margin,
    }


def _report_doc(r: contraction.ContractionReport) -> dict:
    return {
        "mode": r.mode, "delta": r.delta, "n": r.n, "n_phi": r.n_phi,
        "window_length": r.window_length, "epsilon": r.epsilon, "M": r.M,
        "bound": r.bound, "achieved": r.achieved, "vacuous": r.vacuous,
    }


# -- commands ---------------------------------------------------------------------

def cmd_validate(args) -> Output:
    model = load_model(args.model)
    violations = validate(model)
    doc = {"valid": not violations, "violations": [str(v) for v in violations]}
    rows = [(v.matrix, v.row, v.kind, v.magnitude) for v in violations]
    return Output(doc, (["matrix", "row", "kind", "magnitude"], rows),
                  status=EXIT_INPUT if violations else EXIT_OK)


def cmd_filter(args) -> Output:
    model, evidence, n, states = _context(args)
    hmm = as_hmm(model)
    res = forward_filter(hmm, evidence, n)
    labels = list(hmm.state_labels)
    doc = {
        "time": n,
        "log_likelihood": res.log_likelihood,
        "posterior": dict(zip(labels, res.posterior)),
        "trajectory": [{"time": t, "posterior": list(p)} for t, p in enumerate(res.trajectory, 1)],
    }
    if args.state:
        states = resolve_states(model, args.state)
        doc["target"] = args.state
        doc["probability"] = float(res.posterior[list(states)].sum())
    rows = [(t, *p) for t, p in enumerate(res.trajectory, 1)]
    return Output(doc, (["time", *labels], rows))


def _univariate(args):
    model, evidence, n, states = _context(args, need_state=True)
    target = sensitivity.SensitivityTarget(states, n, evidence)
    s = sensitivity.compute_univariate(model, target, _param(args, model))
    return model, evidence, n, target, s


def _curve_rows(s):
    grid = np.linspace(0.0, 1.0, CURVE_POINTS)
    return ["theta", "probability"], list(zip(grid, s(grid)))


def cmd_sens(args) -> Output:
    model, _, _, _, s = _univariate(args)
    doc = {"target": args.state, **_sens_doc(model, s)}
    curve = _curve_rows(s)
    return Output(doc, curve, {"curve": curve})


def cmd_regions(args) -> Output:
    t = _thresholds(args)
    model, _, _, _, s = _univariate(args)
    r = decision.single_param_regions(s, t)
    doc = {"target": args.state, "thresholds": [t.p_minus, t.p_star, t.p_plus],
           "sensitivity": _sens_doc(model, s), "regions": _regions_doc(r)}
    rows = [(lo, hi, lab) for lo, hi, lab in r.intervals()]
    return Output(doc, (["lower", "upper", "decision"], rows), {"curve": _curve_rows(s)})


def cmd_cpt2d(args) -> Output:
    t = _thresholds(args)
    model, evidence, n, states = _context(args, need_state=True)
    target = sensitivity.SensitivityTarget(states, n, evidence)
    refs = (_param(args, model), _param(args, model, "param2"))
    f = sensitivity.compute_bivariate(model, target, refs)
    samples = args.samples
    lm, lp = decision.boundary_curves(f, t, samples)
    nominal = f.nominal
    p0 = f(*nominal)
    doc = {
        "target": args.state, "time": n,
        "thresholds": [t.p_minus, t.p_star, t.p_plus],
        "params": [param_spec(model, r) for r in refs],
        "nominal": nominal, "nominal_probability": p0,
        "nominal_decision": decision.classify_2d(f, t, nominal),
        "fit_residual": f.fit_residual,
        "cross_term_magnitude": f.cross_term_magnitude,
        "numerator": f.numerator, "denominator": f.denominator,
        "samples": samples,
        "curves": {c.threshold_label: {"threshold": c.threshold, "branches": len(c.branches),
                                       "points": int(len(c.points))} for c in (lm, lp)},
    }

    def curve_rows(c):
        return [(b, se, sp) for b, br in enumerate(c.branches) for se, sp in br]

    header = ["branch", "theta_se", "theta_sp"]
    grid = decision.classification_grid(f, t, samples)
    extras = {
        "lminus": (header, curve_rows(lm)),
        "lplus": (header, curve_rows(lp)),
        "grid": (["theta_se", "theta_sp", "probability", "decision"], grid),
    }
    both = [(c.threshold_label, *row) for c in (lm, lp) for row in curve_rows(c)]
    return Output(doc, (["curve", *header], both), extras)


def _window_reports(model, evidence, n, epsilon):
    hmm = as_hmm(model)
    exact = contraction.backward_window_exact(hmm, evidence, n, epsilon)
    bounded = contraction.backward_window_mbound(hmm, n, epsilon, evidence=evidence)
    return hmm, exact, bounded


def cmd_window(args) -> Output:
    model, evidence, n, _ = _context(args)
    hmm, exact, bounded = _window_reports(model, evidence, n, args.epsilon)
    doc = {"time": n, "exact": _report_doc(exact), "m_bound": _report_doc(bounded)}
    extras = {}
    table = None
    if args.sweep:
        M = bounded.M if bounded.M and bounded.M > 0 else 1.0
        sweep = (["delta", "n_phi"], contraction.window_sweep(n, args.epsilon, M))
        extras["sweep"] = sweep
        table = sweep
    if table is None:
        table = (["mode", "delta", "n_phi", "epsilon", "M", "bound", "achieved", "vacuous"],
                 [(r.mode, r.delta, r.n_phi, r.epsilon, r.M, r.bound, r.achieved, r.vacuous)
                  for r in (exact, bounded)])
    return Output(doc, table, extras)


def cmd_report(args) -> Output:
    t = _thresholds(args)
    model, evidence, n, target, s = _univariate(args)
    hmm = as_hmm(model)
    res = forward_filter(hmm, evidence, n)
    r = decision.single_param_regions(s, t)
    _, exact, bounded = _window_reports(model, evidence, n, args.epsilon)
    windowed = contraction.windowed_sensitivity(model, target, s.param, exact.n_phi)
    doc = {
        "target": args.state,
        "thresholds": [t.p_minus, t.p_star, t.p_plus],
        "filter": {"time": n, "log_likelihood": res.log_likelihood,
                   "probability": float(res.posterior[list(target.states)].sum()),
                   "posterior": dict(zip(hmm.state_labels, res.posterior))},
        "sensitivity": _sens_doc(model, s),
        "regions": _regions_doc(r),
        "window": {"exact": _report_doc(exact), "m_bound": _report_doc(bounded)},
        "windowed_sensitivity": {
            **_sens_doc(model, windowed.sensitivity),
            "certified": windowed.certified,
            "nominal_deviation": windowed.nominal_deviation,
        },
    }
    rows = [(lo, hi, lab) for lo, hi, lab in r.intervals()]
    return Output(doc, (["lower", "upper", "decision"], rows), {"curve": _curve_rows(s)})


HANDLERS = {
    "validate": cmd_validate, "filter": cmd_filter, "sens": cmd_sens, "regions": cmd_regions,
    "cpt2d": cmd_cpt2d, "window": cmd_window, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dbnsens", description=(
        "Sensitivity of filtered probabilities in dynamic networks, decision regions "
        "under a threshold model, and contraction-based analysis windows."))
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--model", required=True, help="model JSON file")
    parser.add_argument("--evidence", help="evidence JSON file (list of per-step objects)")
    parser.add_argument("--time", type=int, help="time step n (default: evidence horizon)")
    parser.add_argument("--state", help="target state label, or subprocess=state[,...] for factored models")
    parser.add_argument("--param", help="kind:row:column[:stream], e.g. observation:yes:pos:xray")
    parser.add_argument("--param2", help="second parameter for cpt2d (another row of the same table)")
    parser.add_argument("--thresholds", help="p-,p*,p+ e.g. 0.12,0.2,0.64")
    parser.add_argument("--epsilon", type=float, default=0.01, help="window accuracy in nats")
    parser.add_argument("--samples", type=int, default=51, help="grid resolution for cpt2d")
    parser.add_argument("--sweep", action="store_true", help="window: add a (delta, n_phi) sweep")
    parser.add_argument("--out", help="output file; companion CSVs are written next to it")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    return parser


def _write(out: Output, args):
    if args.format == "json":
        text = json.dumps(clean(out.doc), indent=2) + "\n"
    else:
        text = _csv_text(*out.table) if out.table else ""
    if not args.out:
        sys.stdout.write(text)
        return
    path = Path(args.out)
    path.write_text(text)
    if args.format == "json":
        for name, (header, rows) in out.extras.items():
            path.with_name(f"{path.stem}.{name}.csv").write_text(_csv_text(header, rows))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(format="warning [%(module)s]: %(message)s", level=logging.WARNING)
    try:
        out = HANDLERS[args.command](args)
        _write(out, args)
        return out.status
    except ModelValidationError as exc:
        print(f"error [{exc.module}]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InputError as exc:
        print(f"error [{exc.module}]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ComputationError as exc:
        print(f"error [{exc.module}]: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
