"""End-to-end drivers behind the command line."""
from __future__ import annotations

import time
import traceback

import numpy as np

from .canonization import CanonizationError, canonize_general
from .expr import ExpressionError, Namespace, parse_expr
from .lie import VectorField
from .model import SystemModel
from .modelfile import _split_top
from .observability import (NonConvergence, SingularMu, _run, finish, omega_general, omega_single,
                            orc, orc_report, separation_check)
from .registry import get as get_example
from .report import ReportDocument
from .span import DegeneratePoints, GuardVanishes, SamplePlan, symmetry_residuals

# failures of the method itself (exit 2) as opposed to bugs (exit 1)
METHOD_FAILURES = (GuardVanishes, CanonizationError, SingularMu, NonConvergence,
                   DegeneratePoints, ExpressionError)


def _module_of(exc):
    mod = type(exc).__module__.rsplit(".", 1)[-1]
    return {"expr": "expr_core", "lie": "lie_calculus", "span": "span_engine",
            "observability": "observability", "canonization": "canonization"}.get(mod, "cli_io")


def _error(exc, internal=False):
    err = {"module": _module_of(exc), "type": type(exc).__name__, "message": str(exc)}
    if internal:
        err["traceback"] = traceback.format_exc(limit=6)
    return err


def analyze(model: SystemModel, plan: SamplePlan = SamplePlan(), max_steps=None, depth_cap=None,
            max_aug=None, hold_extra_outputs=False):
    """(analysed model, AnalysisReport, CanonizationResult or None)."""
    if model.m_w == 0:
        return model, orc(model, plan), None
    if model.m_w == 1 and not model.has_drift:
        return model, omega_single(model, plan, depth_cap=depth_cap, max_steps=max_steps), None
    canon = canonize_general(model, plan, max_aug=max_aug, depth_cap=depth_cap)
    out = canon.model_out
    if out.m_w == 0:
        started = time.perf_counter()
        report = _run(out, plan, lambda s: orc_report(out, s, max_steps=max_steps or out.n + 2))
        report.special_case = False
        report = finish(report, out, started)
    else:
        report = omega_general(out, canon.h_sel, plan, max_steps=max_steps,
                               h_labels=canon.h_labels, hold_extra_outputs=hold_extra_outputs)
        # augmented forms start from h_sel alone; the original outputs must still be in Omega*
        missing = [(k, h) for k, h in model.outputs
                   if h not in canon.h_sel and not report.omega.contains(h)]
        if missing:
            out = out.with_outputs(tuple(out.outputs) + tuple(missing))
            report = omega_general(out, canon.h_sel, plan, max_steps=max_steps,
                                   h_labels=canon.h_labels, hold_extra_outputs=hold_extra_outputs)
            report.extra["outputs_restored"] = [k for k, _ in missing]
    report.spurious = list(canon.spurious)
    return out, report, canon


def run_analyze(model: SystemModel, plan: SamplePlan = SamplePlan(), max_steps=None,
                depth_cap=None, max_aug=None, hold_extra_outputs=False) -> ReportDocument:
    doc = ReportDocument(model.digest(), plan)
    t0 = time.perf_counter()
    try:
        analysed, report, canon = analyze(model, plan, max_steps, depth_cap, max_aug,
                                          hold_extra_outputs)
        doc.analysis, doc.canonization = report, canon
        doc.exit_code = 0 if report.converged else 2
    except METHOD_FAILURES as exc:
        doc.error, doc.exit_code = _error(exc), 2
    except Exception as exc:  # noqa: BLE001 - reported, not swallowed
        doc.error, doc.exit_code = _error(exc, internal=True), 1
    doc.timings["total"] = time.perf_counter() - t0
    return doc


def oracle_check(model: SystemModel, k: int, m: int, plan: SamplePlan = SamplePlan(),
                 analysed=None):
    """Separation check on the analysed (canonic) form of the model."""
    if m > k:
        raise ValueError("m must not exceed k")
    if analysed is None:
        analysed = analyze(model, plan)
    out, report, _ = analysed
    if out.m_w == 0:
        raise ValueError("the oracle needs at least one unknown input after canonization")
    base = report.snapshots[0]
    res = separation_check(out, report, k, m, base, plan)
    res["verdict"] = "equal" if res["equal"] else ("included" if res["included"] else "not included")
    return res


def run_oracle(model: SystemModel, k: int, m: int, plan: SamplePlan = SamplePlan()) -> ReportDocument:
    doc = ReportDocument(model.digest(), plan)
    t0 = time.perf_counter()
    if m > k:
        doc.error = {"module": "cli_io", "type": "ValueError", "message": "m must not exceed k"}
        doc.exit_code = 2
        return doc
    try:
        analysed = analyze(model, plan)
        doc.analysis, doc.canonization = analysed[1], analysed[2]
        doc.oracle = oracle_check(model, k, m, plan, analysed)
    except METHOD_FAILURES + (ValueError,) as exc:
        doc.error, doc.exit_code = _error(exc), 2
    except Exception as exc:  # noqa: BLE001
        doc.error, doc.exit_code = _error(exc, internal=True), 1
    doc.timings["total"] = time.perf_counter() - t0
    return doc


def run_canonize(model: SystemModel, plan: SamplePlan = SamplePlan()) -> ReportDocument:
    doc = ReportDocument(model.digest(), plan)
    t0 = time.perf_counter()
    try:
        doc.canonization = canonize_general(model, plan)
    except METHOD_FAILURES as exc:
        doc.error, doc.exit_code = _error(exc), 2
    except Exception as exc:  # noqa: BLE001
        doc.error, doc.exit_code = _error(exc, internal=True), 1
    doc.timings["total"] = time.perf_counter() - t0
    return doc


def parse_field(text, model: SystemModel) -> VectorField:
    ns = Namespace(model.state, model.params)
    comps = [parse_expr(p, ns) for p, _ in _split_top(text)]
    if len(comps) != model.n:
        raise ValueError(f"vector has {len(comps)} components, state has {model.n}")
    return VectorField(tuple(comps), model.state)


def check_expectations(expect: dict, report, canon, analysed: SystemModel):
    """One {check, expected, observed, passed} entry per registered expectation."""
    out = []

    def record(check, expected, observed):
        out.append({"check": check, "expected": expected, "observed": observed,
                    "passed": expected == observed})

    for key, val in expect.items():
        if key == "rank":
            record("rank of the observable codistribution", val, report.rank)
        elif key == "ranks":
            record("ranks per step", val, report.ranks[:len(val)])
        elif key == "rank_at":
            for m, r in val.items():
                record(f"rank at step {m}", r, report.rank_at(m))
        elif key in ("m_star", "m_prime", "special_case"):
            record(key, val, getattr(report, key))
        elif key == "fully_observable":
            record("fully observable", val, report.fully_observable)
        elif key == "unobservable":
            record("unobservable components include", val,
                   [s for s in val if not report.verdicts.get(s, False)])
        elif key == "observable":
            record("observable components", val,
                   [s for s, ok in report.verdicts.items() if ok])
        elif key == "symmetries":
            ok = bool(report.symmetry_verified) and all(c["verified"] for c in report.symmetry_verified)
            record("listed symmetries verify", val, ok)
        elif key == "augmentations":
            record("state augmentations", val, len(canon.augmentations) if canon else 0)
        elif key == "t_nonzero":
            record("nonvanishing T components", val, report.tensors.get("t_nonzero"))
        elif key == "t_zero_slab":
            record("T slab with lower index 0 vanishes", val,
                   report.tensors.get("t_zero_slab_vanishes"))
        elif key == "canonic_symmetry":
            res = symmetry_residuals(report.omega, parse_field(val, analysed))
            record(f"symmetry [{val}] on the canonic state verifies", True,
                   bool(np.all(res < report.omega.samples.plan.member_tol)))
    return out


def run_example(name: str, plan: SamplePlan = SamplePlan()) -> ReportDocument:
    ex = get_example(name)
    model = ex.model()
    doc = ReportDocument(model.digest(), plan)
    t0 = time.perf_counter()
    try:
        analysed, report, canon = analyze(model, plan, **ex.options)
        doc.analysis, doc.canonization = report, canon
        doc.assertions = check_expectations(ex.expect, report, canon, analysed)
        doc.exit_code = 0 if all(a["passed"] for a in doc.assertions) else 2
    except METHOD_FAILURES as exc:
        doc.error, doc.exit_code = _error(exc), 2
    except Exception as exc:  # noqa: BLE001
        doc.error, doc.exit_code = _error(exc, internal=True), 1
    doc.timings["total"] = time.perf_counter() - t0
    return doc
