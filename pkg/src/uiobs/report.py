"""JSON report documents."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import __version__
from .observability import AnalysisReport
from .span import SamplePlan


def analysis_payload(report: AnalysisReport) -> dict:
    if report is None:
        return {}
    return {
        "algorithm": report.algorithm,
        "state": list(report.state),
        "h_sel": list(report.h_sel),
        "steps": [{"m": s.m, "rank": s.rank, "new_generators": list(s.new_generators)}
                  for s in report.steps],
        "special_case": bool(report.special_case),
        "m_prime": report.m_prime,
        "m_star": report.m_star,
        "converged": bool(report.converged),
        "rank": report.rank,
        "verdicts": {k: bool(v) for k, v in report.verdicts.items()},
        "unobs_dim": report.unobs_dim,
        "symmetry": {"numeric": [[round(x, 12) for x in v] for v in report.symmetry_numeric],
                     "verified": report.symmetry_verified},
        "spurious": list(report.spurious),
        "certification": report.certification,
        "tensors": {k: v for k, v in report.tensors.items()},
        "notes": list(report.notes),
    }


def canonization_payload(canon) -> dict:
    if canon is None:
        return {"augmentations": [], "coordinate_changes": [], "spurious": []}
    return {
        "augmentations": canon.augmentations,
        "coordinate_changes": canon.coordinate_changes,
        "spurious": list(canon.spurious),
        "d_trace": list(canon.d_trace),
        "log": list(canon.transform_log),
        "canonic_state": list(canon.model_out.state),
        "h_sel": list(canon.h_labels),
    }


@dataclass
class ReportDocument:
    model_digest: str
    plan: SamplePlan
    analysis: AnalysisReport = None
    canonization: object = None
    oracle: dict = None
    assertions: list = None
    error: dict = None
    exit_code: int = 0
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = {"tool": "uiobs", "version": __version__, "model_digest": self.model_digest,
               "plan": self.plan.as_dict()}
        a = analysis_payload(self.analysis)
        for key in ("steps", "special_case", "m_prime", "m_star", "converged", "verdicts",
                    "unobs_dim", "symmetry"):
            doc[key] = a.get(key)
        doc["analysis"] = {k: v for k, v in a.items() if k not in doc}
        doc["canonization"] = canonization_payload(self.canonization)
        doc["oracle"] = self.oracle
        if self.assertions is not None:
            doc["assertions"] = self.assertions
        if self.error is not None:
            doc["error"] = self.error
        doc["exit_code"] = self.exit_code
        doc["timings"] = {k: round(v, 6) for k, v in self.timings.items()}
        return doc

    def to_json(self, timings=True) -> str:
        d = self.to_dict()
        if not timings:
            d.pop("timings")
        return json.dumps(d, indent=2, sort_keys=True, default=_default)


def _default(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    if hasattr(o, "item"):
        return o.item()
    return str(o)
