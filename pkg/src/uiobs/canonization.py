"""Bringing a system to canonic form with respect to its unknown inputs.

A system is canonic when m_w functions of the output space have Lie
derivatives along G whose differentials with respect to the unknown inputs
are independent.  When that fails, the unknown inputs are recombined so the
dependence sits in the first d of them, those d are appended to the state,
and their time derivatives become the new unknown inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expr import ZERO, Expr, add, as_expr, mul, neg, to_str, var
from .lie import VectorField, combine_fields, lie_scalar
from .model import SystemModel
from .observability import (AnalysisReport, _fresh_name, _run, extended_codistribution,
                            omega_general_report, orc_report, symbolic_inverse)
from .span import Codistribution, SamplePlan, SampleSet


class CanonizationError(RuntimeError):
    """Canonization did not terminate within the augmentation budget."""


@dataclass(frozen=True)
class Member:
    expr: Expr
    label: str
    depth: int
    origin: int = 0   # index of the seed this member descends from


@dataclass
class FunctionSpace:
    members: list
    dF: Codistribution
    depth_cap: int
    saturated: bool = True
    warnings: list = field(default_factory=list)

    @property
    def rank(self):
        return self.dF.rank

    def exprs(self):
        return [m.expr for m in self.members]


def build_function_space(model: SystemModel, depth_cap: int, samples: SampleSet,
                         seeds=None) -> FunctionSpace:
    """Breadth-first closure of the seeds under L_{f^i}, keeping rank raisers.

    seeds defaults to the outputs.  Members are ordered by depth, then by
    known-input index.
    """
    if depth_cap < 1:
        raise ValueError("depth_cap must be at least 1")
    if seeds is None:
        seeds = [Member(h, name, 0) for name, h in model.outputs]
    dF = Codistribution(samples)
    members, level = [], []
    for i, s in enumerate(seeds):
        if s.expr is not ZERO and not s.expr.is_const and dF.add(s.expr, s.label):
            s = Member(s.expr, s.label, s.depth, i)
            members.append(s)
            level.append(s)
    depth = 0
    saturated = True
    while level:
        if depth >= depth_cap:
            saturated = False
            break
        depth += 1
        nxt = []
        for s in level:
            for name, fld in zip(model.known_inputs, model.f):
                cand = lie_scalar(s.expr, fld)
                if cand is ZERO or cand.is_const:
                    continue
                if dF.add(cand, f"L_{name}({s.label})"):
                    m = Member(cand, f"L_{name}({s.label})", s.depth + 1, s.origin)
                    members.append(m)
                    nxt.append(m)
        level = nxt
    fs = FunctionSpace(members, dF, depth_cap, saturated)
    if not saturated:
        fs.warnings.append(f"function space still growing at depth cap {depth_cap}")
    return fs


def input_rows(model: SystemModel, s: Expr, samples: SampleSet):
    """Numeric rows [L_{g^j} s]_j, the w-differential of L_G s."""
    cols = []
    for g in model.g:
        d = lie_scalar(s, g)
        cols.append(np.zeros(samples.P) if d is ZERO else samples.value(d))
    return np.stack(cols, axis=1) if cols else np.zeros((samples.P, 0))


def input_rank(model: SystemModel, fs: FunctionSpace, samples: SampleSet):
    """Dimension of D_w L_G F and a greedy selection realising it."""
    if model.m_w == 0:
        return 0, []
    span = Codistribution(samples, dim=model.m_w)
    chosen = []
    # seed by seed, each seed followed by its L_f descendants
    for mem in sorted(fs.members, key=lambda m: m.origin):
        if span.add_rows(input_rows(model, mem.expr, samples), mem, mem.label):
            chosen.append(mem)
            if span.rank == model.m_w:
                break
    return span.rank, chosen


def is_canonic(model: SystemModel, fs: FunctionSpace, samples: SampleSet):
    """(canonic, selection): selection has m_w members when canonic."""
    d, chosen = input_rank(model, fs, samples)
    return d == model.m_w, chosen


@dataclass
class CanonizationResult:
    model_out: SystemModel
    h_sel: list
    h_labels: list
    transform_log: list = field(default_factory=list)
    spurious: list = field(default_factory=list)
    canonic: bool = True
    d_trace: list = field(default_factory=list)
    omega_star: AnalysisReport = None

    @property
    def augmentations(self):
        return [t for t in self.transform_log if t["kind"] == "augmentation"]

    @property
    def coordinate_changes(self):
        return [t for t in self.transform_log if t["kind"] == "coordinate_change"]


# ----------------------------------------------------------------------------
# m_w = 1

def canonize_single(model: SystemModel, plan: SamplePlan = SamplePlan(),
                    depth_cap=None) -> CanonizationResult:
    if model.m_w != 1:
        raise ValueError("canonize_single requires m_w = 1")
    cap = depth_cap or model.n + 2
    g = model.g[0]

    def build(samples):
        fs = build_function_space(model, cap, samples)
        log = []
        for rounds in range(model.n + 1):
            for mem in fs.members:
                lg = lie_scalar(mem.expr, g)
                if lg is not ZERO and not samples.is_zero(lg, f"L_g of {mem.label}"):
                    return CanonizationResult(model, [mem.expr], [mem.label], log)
            if not model.has_drift:
                break
            seeds = list(fs.members) + [Member(lie_scalar(m.expr, model.g0),
                                               f"L_g0({m.label})", m.depth + 1)
                                        for m in fs.members]
            before = fs.rank
            fs = build_function_space(model, cap, samples, seeds)
            log.append({"kind": "closure", "rank": fs.rank})
            if fs.rank == before:
                break
        out = model.without_unknown_inputs()
        return CanonizationResult(out, [], [], log, spurious=[model.unknown_inputs[0]])

    return _run(model, plan, build)


# ----------------------------------------------------------------------------
# general case

def _pivot_columns(A_num, d, tol=1e-8):
    """First d columns, in input order, that are linearly independent."""
    if d == 0:
        return []
    A = np.array(A_num, dtype=float)
    scale = max(np.abs(A).max(), 1.0)
    chosen = []
    for c in range(A.shape[1]):
        trial = A[:, chosen + [c]]
        if np.linalg.matrix_rank(trial, tol=tol * scale) == len(chosen) + 1:
            chosen.append(c)
            if len(chosen) == d:
                break
    return chosen


def _augment(model: SystemModel, sel, samples: SampleSet, step: int):
    """One round of operations 1-3; returns (new model, log entries)."""
    d = len(sel)
    if d == 0:
        return model, [{"kind": "closure", "step": step}]
    mw = model.m_w
    log = []
    gamma = [[lie_scalar(m.expr, g) for g in model.g] for m in sel]
    A_num = np.array([[0.0 if e is ZERO else samples.value(e)[0] for e in row] for row in gamma])
    cols = _pivot_columns(A_num, d)
    order = cols + [j for j in range(mw) if j not in cols]
    names = [model.unknown_inputs[j] for j in order]
    g = [model.g[j] for j in order]
    if order != list(range(mw)):
        log.append({"kind": "reorder", "step": step, "order": names})
    A = [[gamma[i][j] for j in cols] for i in range(d)]
    rest = [j for j in range(mw) if j not in cols]
    if rest and d:
        _, Ainv = symbolic_inverse(A)
        new_g = list(g)
        for pos, k in enumerate(rest, start=d):
            Gk = [gamma[i][k] for i in range(d)]
            c = []
            for j in range(d):
                terms = [mul(Ainv[j][i], Gk[i]) for i in range(d)
                         if Ainv[j][i] is not ZERO and Gk[i] is not ZERO]
                c.append(add(*terms) if terms else ZERO)
            if all(x is ZERO for x in c) or all(samples.is_zero(x, "coordinate change") for x in c):
                continue
            new_g[pos] = combine_fields([as_expr(1)] + [neg(x) for x in c],
                                        [g[pos]] + g[:d], model.state)
            log.append({"kind": "coordinate_change", "step": step,
                        "changed_field": names[pos],
                        "w_tilde": {names[j]: f"{names[j]} + ({to_str(c[j], 300)})*{names[pos]}"
                                    for j in range(d) if c[j] is not ZERO}})
        g = new_g
    taken = set(model.state) | set(model.params) | set(model.known_inputs) | set(names[d:])
    new_states = [_fresh_name(names[j], taken) for j in range(d)]
    new_inputs = [_fresh_name(names[j] + "_dot", taken) for j in range(d)]
    state = model.state + tuple(new_states)
    top = list(model.g0.components)
    for j in range(d):
        wj = var(new_states[j])
        for i in range(model.n):
            if g[j][i] is not ZERO:
                top[i] = add(top[i], mul(g[j][i], wj))
    drift = VectorField(tuple(top) + (ZERO,) * d, state)
    unknown_fields = [VectorField.unit(state, s) for s in new_states] + \
        [g[k].padded(state) for k in range(d, mw)]
    out = SystemModel(state=state, params=model.params, known_inputs=model.known_inputs,
                      unknown_inputs=tuple(new_inputs) + tuple(names[d:]), g0=drift,
                      f=tuple(f.padded(state) for f in model.f), g=tuple(unknown_fields),
                      outputs=model.outputs, ranges=dict(model.ranges),
                      name=model.name)
    log.append({"kind": "augmentation", "step": step, "new_states": new_states,
                "new_inputs": new_inputs})
    return out, log


def _next_seeds(model: SystemModel, members):
    seeds = list(members)
    for m in members:
        lg = lie_scalar(m.expr, model.g0)
        if lg is not ZERO:
            seeds.append(Member(lg, f"L_G({m.label})", m.depth + 1))
    return seeds


def canonize_general(model: SystemModel, plan: SamplePlan = SamplePlan(), max_aug=None,
                     depth_cap=None) -> CanonizationResult:
    """Coordinate changes and augmentations until canonic or spurious."""
    if model.m_w < 1:
        return CanonizationResult(model, [], [], [])
    max_aug = 2 * model.n if max_aug is None else max_aug
    cap = depth_cap or model.n + 2

    def measure(cur, seeds):
        def build(samples):
            fs = build_function_space(cur, cap, samples, seeds)
            d, chosen = input_rank(cur, fs, samples)
            return fs.members, d, chosen
        return _run(cur, plan, build)

    def step(cur, members, chosen, k):
        def build(samples):
            return _augment(cur, chosen, samples, k)
        new, log = _run(cur, plan, build)
        return new, log, _next_seeds(new, members)

    def done(cur, chosen, log, trace, augmented):
        out = cur.with_outputs([(m.label, m.expr) for m in chosen]) if augmented else cur
        return CanonizationResult(out, [m.expr for m in chosen], [m.label for m in chosen],
                                  log, [], True, trace)

    cur = model
    members, d, chosen = measure(cur, None)
    trace = [d]
    log = []
    if d == model.m_w:
        return done(cur, chosen, log, trace, False)
    augs = 0

    def advance():
        nonlocal cur, members, d, chosen, augs
        if augs >= max_aug:
            raise CanonizationError(f"augmentation budget {max_aug} exhausted; d trace {trace}")
        augs += 1
        cur, entries, seeds = step(cur, members, chosen, augs)
        log.extend(entries)
        members, d, chosen = measure(cur, seeds)
        trace.append(d)

    advance()
    d_old = trace[-2]
    if d == model.m_w:
        return done(cur, chosen, log, trace, True)
    while True:
        omega_star = None
        if d == d_old:
            omega_star = _reduced_omega(cur, chosen, plan)
        while d == d_old:
            if _contained(cur, omega_star, members, plan):
                kept = cur.keep_unknown_inputs(range(d))
                out = kept.with_outputs([(m.label, m.expr) for m in chosen]) if chosen else kept
                res = CanonizationResult(out, [m.expr for m in chosen], [m.label for m in chosen],
                                         log, list(cur.unknown_inputs[d:]), True, trace)
                res.omega_star = omega_star
                return res
            advance()
            if d == model.m_w:
                return done(cur, chosen, log, trace, True)
        advance()
        d_old = trace[-2]
        if d == model.m_w:
            return done(cur, chosen, log, trace, True)


def _reduced_omega(cur: SystemModel, chosen, plan):
    """Omega* of the system restricted to its first d unknown inputs."""
    d = len(chosen)
    reduced = cur.keep_unknown_inputs(range(d))
    if d == 0:
        return _run(reduced, plan, lambda s: orc_report(reduced.without_unknown_inputs(), s,
                                                        max_steps=reduced.n + 2))
    return _run(reduced, plan, lambda s: omega_general_report(
        reduced, [m.expr for m in chosen], s, h_labels=[m.label for m in chosen],
        count_t=False))


def _contained(cur: SystemModel, omega_star: AnalysisReport, members, plan):
    gens = omega_star.omega.generators

    def build(samples):
        dF = Codistribution(samples)
        for m in members:
            dF.add(m.expr, m.label)
        return all(dF.contains(e) for e in gens)

    return _run(cur, plan, build)


# ----------------------------------------------------------------------------
# shortcut outputs

def shortcut_outputs(model: SystemModel, candidates, k: int, plan: SamplePlan = SamplePlan(),
                     depth=None):
    """Candidates whose differentials lie in the extended-state codistribution.

    The extension order is k and the recursion depth defaults to k.
    Original outputs are accepted trivially.
    """
    m = k if depth is None else depth
    order = max(k, m)
    candidates = [as_expr(c) for c in candidates]
    if order == 0:
        def build0(samples):
            om = Codistribution(samples)
            for _, h in model.outputs:
                om.add(h)
            return [c for c in candidates if om.contains(c)]
        return _run(model, plan, build0)
    ext = extended_codistribution(model, order, m, plan)
    om = ext.omega
    return [c for c in candidates if om.contains(c)]
