"""Command line: analyze, oracle, canonize, example."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import registry
from .analysis import run_analyze, run_canonize, run_example, run_oracle
from .modelfile import ModelSyntaxError, parse_model
from .model import ModelError
from .span import SamplePlan


def _plan(args):
    return SamplePlan(seed=args.seed, point_count=args.samples, rank_tol=args.rank_tol,
                      member_tol=args.member_tol)


def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=5, help="sample points per rank decision")
    p.add_argument("--rank-tol", type=float, default=1e-8)
    p.add_argument("--member-tol", type=float, default=1e-6)
    p.add_argument("--json", metavar="OUT", help="write the report here instead of stdout")
    p.add_argument("--no-timings", action="store_true", help="omit wall-clock timings")


def build_parser():
    ap = argparse.ArgumentParser(prog="uiobs",
                                 description="Observability analysis with unknown inputs.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("analyze", help="analyse a model file")
    p.add_argument("file")
    _common(p)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--depth-cap", type=int)
    p.add_argument("--hold-extra-outputs", action="store_true",
                   help="do not differentiate outputs left out of the selection")
    p = sub.add_parser("oracle", help="extended-state separation check")
    p.add_argument("file")
    p.add_argument("-k", type=int, required=True)
    p.add_argument("-m", type=int, required=True)
    _common(p)
    p = sub.add_parser("canonize", help="bring a model to canonic form")
    p.add_argument("file")
    _common(p)
    p = sub.add_parser("example", help="run a built-in example and check its expected results")
    p.add_argument("name", nargs="?")
    p.add_argument("--list", action="store_true")
    _common(p)
    return ap


def _emit(doc, args):
    text = doc.to_json(timings=not args.no_timings)
    if args.json:
        Path(args.json).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    if doc.assertions:
        for a in doc.assertions:
            mark = "PASS" if a["passed"] else "FAIL"
            print(f"{mark} {a['check']}: expected {a['expected']}, got {a['observed']}",
                  file=sys.stderr)
    if doc.error:
        print(f"error [{doc.error['module']}] {doc.error['type']}: {doc.error['message']}",
              file=sys.stderr)
    return doc.exit_code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        plan = _plan(args)
    except ValueError as exc:
        print(f"error [cli_io]: {exc}", file=sys.stderr)
        return 2
    if args.command == "example":
        if args.list or not args.name:
            for name in registry.names():
                print(f"{name:24s} {registry.EXAMPLES[name].description}")
            return 0
        try:
            doc = run_example(args.name, plan)
        except KeyError as exc:
            print(f"error [cli_io]: {exc.args[0]}", file=sys.stderr)
            return 2
        return _emit(doc, args)
    try:
        model = parse_model(args.file)
    except (ModelSyntaxError, ModelError) as exc:
        print(f"error [cli_io] {args.file}: {exc}", file=sys.stderr)
        return 2
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error [cli_io]: cannot read {args.file}: {exc}", file=sys.stderr)
        return 2
    if args.command == "analyze":
        doc = run_analyze(model, plan, max_steps=args.max_steps, depth_cap=args.depth_cap,
                          hold_extra_outputs=args.hold_extra_outputs)
    elif args.command == "oracle":
        doc = run_oracle(model, args.k, args.m, plan)
    else:
        doc = run_canonize(model, plan)
    return _emit(doc, args)


if __name__ == "__main__":
    sys.exit(main())
