"""Observable codistributions for systems with known and unknown inputs.

All generators handled here are exact differentials, so a codistribution is
carried as a list of scalar functions whose differentials span it.  Each
recursion step only differentiates the generators added by the previous
step: Lie derivatives of older generators were already added earlier, and
L_v(a Ds) = a D(L_v s) + (L_v a) Ds keeps the span unchanged.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .expr import ONE, ZERO, Expr, add, as_expr, check_cap, div, mul, neg, power, to_str, var, \
    DEFAULT_NODE_CAP
from .lie import Covector, VectorField, combine_fields, lie_bracket, lie_scalar
from .model import SystemModel
from .span import (Codistribution, GuardVanishes, SamplePlan, SampleSet, orthogonal_distribution,
                   require_nonzero, sample_points, symmetry_residuals, with_resampling)


class NonConvergence(RuntimeError):
    """The filtration did not stabilize within the theoretical step bound."""


class SingularMu(ValueError):
    """The selected functions do not make mu invertible."""


# ----------------------------------------------------------------------------
# reports

@dataclass
class StepRecord:
    m: int
    rank: int
    new_generators: list
    seconds: float = 0.0


@dataclass
class AnalysisReport:
    algorithm: str
    state: tuple
    steps: list = field(default_factory=list)
    special_case: bool = False
    m_prime: int = None
    m_star: int = None
    converged: bool = False
    verdicts: dict = field(default_factory=dict)
    unobs_dim: int = None
    symmetry_numeric: list = field(default_factory=list)
    symmetry_verified: list = field(default_factory=list)
    h_sel: list = field(default_factory=list)
    spurious: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    tensors: dict = field(default_factory=dict)
    certification: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    omega: Codistribution = None
    snapshots: list = field(default_factory=list)   # cumulative generator exprs per step
    samples: SampleSet = None
    extra: dict = field(default_factory=dict)

    @property
    def ranks(self):
        return [s.rank for s in self.steps]

    @property
    def rank(self):
        return self.omega.rank if self.omega is not None else None

    def rank_at(self, m):
        return self.steps[min(m, len(self.steps) - 1)].rank

    @property
    def fully_observable(self):
        return self.unobs_dim == 0


def new_rng(plan: SamplePlan):
    return np.random.default_rng(plan.seed)


def model_samples(model: SystemModel, plan: SamplePlan, rng, state=None, extra=(), nonzero=()):
    plan = plan.with_ranges(model.ranges)
    state = tuple(state or model.state)
    symbols = list(state) + list(model.params) + list(extra)
    return sample_points(symbols, state, plan, rng=rng, nonzero=nonzero)


def _run(model, plan, build, state=None, nonzero=()):
    rng = new_rng(plan)
    samples = model_samples(model, plan, rng, state=state, nonzero=nonzero)
    result, _ = with_resampling(build, samples, rng, nonzero=nonzero)
    return result


# ----------------------------------------------------------------------------
# the shared filtration engine

def _label(op, inner):
    return f"{op}({inner})"


def filtrate(samples, base, ops, phi_scalars=None, keys=(), special=False, floor=2,
             max_steps=None, algorithm="orc", expr_cap=DEFAULT_NODE_CAP, inert=()):
    """Run Omega_m = Omega_{m-1} + sum_op op(Omega_{m-1}) + phi terms.

    base: (expr, label) pairs spanning Omega_0.
    ops: (name, fn) pairs, fn maps a scalar to a scalar.
    phi_scalars(m): (expr, label) pairs for the bracket term at step m.
    keys: (expr, label) pairs whose differentials gate m'.
    inert: (expr, label) pairs added to Omega_0 but never differentiated.
    Stops at the first m* >= floor (>= max(m', floor) unless special) with
    rank(Omega_{m*+1}) == rank(Omega_{m*}).
    """
    n = samples.n
    max_steps = n + 2 if max_steps is None else max_steps
    omega = Codistribution(samples)
    report = AnalysisReport(algorithm=algorithm, state=samples.state, special_case=special,
                            samples=samples)
    t0 = time.perf_counter()
    frontier = []
    for e, lab in base:
        if omega.add(e, lab):
            frontier.append((e, lab))
    fixed = [lab for e, lab in inert if omega.add(e, lab)]
    report.steps.append(StepRecord(0, omega.rank, [lab for _, lab in frontier] + fixed,
                                   time.perf_counter() - t0))
    report.snapshots.append(list(omega.generators))
    pending_keys = [k for k in keys]
    m_prime = None

    def keys_in(om):
        nonlocal pending_keys
        pending_keys = [(k, lab) for k, lab in pending_keys if not om.contains(k)]
        return not pending_keys

    if special or keys_in(omega):
        m_prime = 0
    floor_eff = 0 if special else floor
    for m in range(1, max_steps + 2):
        t0 = time.perf_counter()
        added = []
        if omega.rank < n:
            for e, lab in frontier:
                for name, fn in ops:
                    cand = fn(e)
                    if cand is ZERO or cand.is_const:
                        continue
                    check_cap(cand, expr_cap)
                    clab = _label(name, lab)
                    if omega.add(cand, clab):
                        added.append((cand, clab))
                    if omega.rank >= n:
                        break
                if omega.rank >= n:
                    break
            if phi_scalars is not None and omega.rank < n:
                for cand, clab in phi_scalars(m):
                    if cand is ZERO or cand.is_const:
                        continue
                    if omega.add(cand, clab):
                        added.append((cand, clab))
                    if omega.rank >= n:
                        break
        frontier = added
        report.steps.append(StepRecord(m, omega.rank, [lab for _, lab in added],
                                       time.perf_counter() - t0))
        report.snapshots.append(list(omega.generators))
        if m_prime is None and keys_in(omega):
            m_prime = m
        prev = m - 1
        if (m_prime is not None and prev >= max(m_prime, floor_eff)
                and report.steps[m].rank == report.steps[prev].rank):
            report.m_star = prev
            report.converged = True
            break
    report.m_prime = m_prime
    report.omega = omega
    if not report.converged:
        raise NonConvergence(
            f"no convergence within {max_steps} steps; ranks {report.ranks}, m'={m_prime}")
    return report


def finish(report: AnalysisReport, model: SystemModel, started=None):
    """Attach per-component verdicts and symmetry information."""
    omega = report.omega
    samples = omega.samples
    n = samples.n
    verdicts = {}
    for j, name in enumerate(samples.state):
        e = np.zeros((samples.P, n))
        e[:, j] = 1.0
        verdicts[name] = omega.contains_rows(e)
    report.verdicts = verdicts
    report.unobs_dim = n - omega.rank
    report.symmetry_numeric = [v.tolist() for v in orthogonal_distribution(omega, 0)]
    checked = []
    for cand in model.symmetries:
        if tuple(cand.state) != tuple(samples.state):
            continue
        res = symmetry_residuals(omega, cand)
        checked.append({"candidate": [to_str(c) for c in cand],
                        "verified": bool(np.all(res < samples.plan.member_tol)),
                        "max_residual": float(res.max())})
    report.symmetry_verified = checked
    if started is not None:
        report.timings["total"] = time.perf_counter() - started
    return report


def classify_state(model: SystemModel, omega_star: Codistribution):
    """Observable components: e_j in Omega*."""
    samples = omega_star.samples
    out = {}
    for j, name in enumerate(samples.state):
        e = np.zeros((samples.P, samples.n))
        e[:, j] = 1.0
        out[name] = omega_star.contains_rows(e)
    return {"components": out, "fully_observable": omega_star.rank == samples.n,
            "unobs_dim": samples.n - omega_star.rank}


# ----------------------------------------------------------------------------
# m_w = 0

def orc_report(model: SystemModel, samples: SampleSet, max_steps=None):
    ops = [(f"L_{name}", (lambda fld: lambda s: lie_scalar(s, fld))(fld))
           for name, fld in zip(model.known_inputs, model.f)]
    if model.has_drift:
        ops.append(("L_g0", lambda s: lie_scalar(s, model.g0)))
    base = [(h, name) for name, h in model.outputs]
    return filtrate(samples, base, ops, special=True, algorithm="orc",
                    max_steps=max_steps if max_steps is not None else max(model.n - 1, 1))


def orc(model: SystemModel, plan: SamplePlan = SamplePlan(), ignore_unknown=False) -> AnalysisReport:
    """Observability rank condition; unknown inputs must be absent or ignored."""
    if model.m_w and not ignore_unknown:
        raise ValueError("orc requires m_w = 0 (or ignore_unknown=True)")
    started = time.perf_counter()
    m = model.without_unknown_inputs()
    report = _run(m, plan, lambda s: orc_report(m, s))
    report.special_case = False
    return finish(report, model, started)


# ----------------------------------------------------------------------------
# phi families

@dataclass
class PhiFamily:
    """Entries keyed by (known-input index, multi-index of Greek labels)."""

    levels: list = field(default_factory=list)   # list of dict key -> VectorField
    pruned: set = field(default_factory=set)

    def level(self, m):
        return self.levels[m]

    def __getitem__(self, key):
        i, alphas = key
        return self.levels[len(alphas)][key]

    @property
    def depth(self):
        return len(self.levels) - 1

    def entries(self):
        for lvl in self.levels:
            yield from lvl.items()


def _bracket_children(phi, nu, g_set, samples, cap):
    brackets = [None if g.is_zero else lie_bracket(phi, g) for g in g_set]
    out = []
    for alpha, row in enumerate(nu):
        terms = [(c, b) for c, b in zip(row, brackets) if c is not ZERO and b is not None]
        if not terms:
            out.append(None)
            continue
        child = combine_fields([c for c, _ in terms], [b for _, b in terms], phi.state)
        for comp in child:
            check_cap(comp, cap)
        out.append(child)
    return out


class _PhiBuilder:
    """Lazily grows a phi family level by level with numeric zero pruning."""

    def __init__(self, f_fields, nu, g_set, samples, cap=DEFAULT_NODE_CAP, prune=True):
        self.nu = nu
        self.g_set = g_set
        self.samples = samples
        self.cap = cap
        self.prune = prune
        self.family = PhiFamily()
        lvl0 = {}
        for i, fld in enumerate(f_fields):
            lvl0[(i, ())] = fld
        self.family.levels.append(lvl0)

    def fields(self, m):
        fam = self.family
        while fam.depth < m:
            nxt = {}
            for (i, alphas), phi in fam.levels[-1].items():
                for alpha, child in enumerate(_bracket_children(phi, self.nu, self.g_set,
                                                                self.samples, self.cap)):
                    key = (i, alphas + (alpha,))
                    if child is None or child.is_zero or (
                            self.prune and self.samples.field_is_zero(child, f"phi{key}")):
                        fam.pruned.add(key)
                        continue
                    nxt[key] = child
            fam.levels.append(nxt)
        return fam.levels[m]


def _phi_label(key, known):
    i, alphas = key
    return f"phi[{known[i]};{''.join(str(a) for a in alphas) or '-'}]"


def phi_family_single(model: SystemModel, depth: int, L1: Expr, samples: SampleSet = None,
                      prune=True) -> PhiFamily:
    """phi_0 = f^i, phi_m = [phi_{m-1}, g] / L1."""
    nu = [[ZERO, ZERO], [ZERO, div(ONE, L1)]]
    g_set = [VectorField.zero(model.state), model.g[0]]
    builder = _PhiBuilder(model.f, nu, g_set, samples, prune=prune and samples is not None)
    builder.fields(depth)
    fam = builder.family
    # only the alpha = 1 branch survives when g0 = 0
    for lvl in fam.levels:
        for key in [k for k in lvl if any(a == 0 for a in k[1])]:
            del lvl[key]
    return fam


def phi_family_general(model: SystemModel, nu, depth: int, samples: SampleSet = None,
                       prune=True, cap=DEFAULT_NODE_CAP) -> PhiFamily:
    g_set = [model.g0] + list(model.g)
    builder = _PhiBuilder(model.f, nu, g_set, samples, cap=cap,
                          prune=prune and samples is not None)
    builder.fields(depth)
    return builder.family


# ----------------------------------------------------------------------------
# tensors

def symbolic_det_and_adjugate(M):
    """Determinant and adjugate of a small symbolic matrix via memoized minors."""
    k = len(M)
    memo = {}

    def det(rows, cols):
        key = (rows, cols)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if not rows:
            return ONE
        r0, rest = rows[0], rows[1:]
        terms = []
        for idx, c in enumerate(cols):
            a = M[r0][c]
            if a is ZERO:
                continue
            sub = det(rest, cols[:idx] + cols[idx + 1:])
            if sub is ZERO:
                continue
            t = mul(a, sub)
            terms.append(neg(t) if idx % 2 else t)
        out = add(*terms) if terms else ZERO
        memo[key] = out
        return out

    full = tuple(range(k))
    D = det(full, full)
    adj = [[ZERO] * k for _ in range(k)]
    for i in range(k):
        for j in range(k):
            minor = det(full[:i] + full[i + 1:], full[:j] + full[j + 1:])
            c = neg(minor) if (i + j) % 2 else minor
            adj[j][i] = c
    return D, adj


def symbolic_inverse(M):
    D, adj = symbolic_det_and_adjugate(M)
    if D is ZERO:
        raise SingularMu("matrix is structurally singular")
    inv = [[div(a, D) if a is not ZERO else ZERO for a in row] for row in adj]
    return D, inv


@dataclass
class MuNu:
    mu: list            # mu[a][b] = L_{g^a} h_b, Greek indices, 0 = drift slot
    nu: list            # inverse of mu
    g_hat: list         # g_hat^alpha = nu^alpha_beta g^beta
    det: Expr           # determinant of the Latin block
    h_sel: list

    @property
    def m_w(self):
        return len(self.mu) - 1


def build_mu_nu(model: SystemModel, h_sel, samples: SampleSet = None) -> MuNu:
    """Tensors mu, nu and the fields g_hat for the selected functions."""
    h_sel = [as_expr(h) for h in h_sel]
    mw = model.m_w
    if len(h_sel) != mw:
        raise ValueError(f"need {mw} selected functions, got {len(h_sel)}")
    g_set = [model.g0] + list(model.g)
    mu = [[ZERO] * (mw + 1) for _ in range(mw + 1)]
    mu[0][0] = ONE
    for j, h in enumerate(h_sel, start=1):
        mu[0][j] = lie_scalar(h, model.g0) if model.has_drift else ZERO
        for i in range(1, mw + 1):
            mu[i][j] = lie_scalar(h, g_set[i])
    latin = [row[1:] for row in mu[1:]]
    D, inv = symbolic_inverse(latin)
    if samples is not None:
        require_nonzero(samples, D, "det(mu)")
    nu = [[ZERO] * (mw + 1) for _ in range(mw + 1)]
    nu[0][0] = ONE
    for a in range(mw):
        for b in range(mw):
            nu[a + 1][b + 1] = inv[a][b]
    for j in range(1, mw + 1):
        terms = [mul(mu[0][k], nu[k][j]) for k in range(1, mw + 1)
                 if mu[0][k] is not ZERO and nu[k][j] is not ZERO]
        nu[0][j] = neg(add(*terms)) if terms else ZERO
    g_hat = []
    for alpha in range(mw + 1):
        coeffs = [nu[alpha][b] for b in range(mw + 1)]
        g_hat.append(combine_fields(coeffs, g_set, model.state))
    return MuNu(mu, nu, g_hat, D, h_sel)


def lie_hat(s: Expr, alpha: int, mn: MuNu, model: SystemModel) -> Expr:
    """L_{g_hat^alpha} s computed as nu^alpha_beta L_{g^beta} s."""
    g_set = [model.g0] + list(model.g)
    terms = []
    for beta, c in enumerate(mn.nu[alpha]):
        if c is ZERO or g_set[beta].is_zero:
            continue
        d = lie_scalar(s, g_set[beta])
        if d is not ZERO:
            terms.append(mul(c, d))
    return add(*terms) if terms else ZERO


def t_tensor(model: SystemModel, mn: MuNu):
    """T[alpha][beta][gamma] = nu^beta_eta L_{g_hat^alpha} mu^eta_gamma."""
    mw = mn.m_w
    T = [[[ZERO] * (mw + 1) for _ in range(mw + 1)] for _ in range(mw + 1)]
    dmu = {}
    for alpha in range(mw + 1):
        for eta in range(mw + 1):
            for gamma in range(mw + 1):
                dmu[alpha, eta, gamma] = lie_hat(mn.mu[eta][gamma], alpha, mn, model)
    for alpha in range(mw + 1):
        for beta in range(mw + 1):
            for gamma in range(mw + 1):
                terms = [mul(mn.nu[beta][eta], dmu[alpha, eta, gamma]) for eta in range(mw + 1)
                         if mn.nu[beta][eta] is not ZERO and dmu[alpha, eta, gamma] is not ZERO]
                T[alpha][beta][gamma] = add(*terms) if terms else ZERO
    return T


def t_components(T, samples: SampleSet = None, latin_only=True):
    """Nonvanishing components as ((alpha, beta, gamma), expr)."""
    out = []
    mw = len(T) - 1
    for a, b, c in itertools.product(range(mw + 1), range(mw + 1), range(mw + 1)):
        if latin_only and c == 0:
            continue
        e = T[a][b][c]
        if e is ZERO:
            continue
        if samples is not None and samples.is_zero(e, f"T^{a}{b}_{c}"):
            continue
        out.append(((a, b, c), e))
    return out


def zero_slab_vanishes(T, samples: SampleSet):
    mw = len(T) - 1
    for a in range(mw + 1):
        for b in range(mw + 1):
            e = T[a][b][0]
            if e is not ZERO and not np.all(samples.ev.is_zero(e)):
                return False
    return True


# ----------------------------------------------------------------------------
# special-case certification

def _certify_special(phis: _PhiBuilder, targets, samples: SampleSet, max_depth):
    """True when L_phi t vanishes for every target t and every phi up to the
    depth at which the span of the phi family stops growing.

    Also true when the whole first level of the family is null: the bracket
    term then reduces to L_{f^i} h, already produced by the L_f operators.
    """
    lam = Codistribution(samples)
    info = {"levels_checked": 0, "lambda_ranks": [], "points": samples.P}
    if not phis.fields(1):
        info["reason"] = "first-level phi family is null"
        return True, info
    for m in range(max_depth + 1):
        level = phis.fields(m)
        for key, phi in level.items():
            for t in targets:
                if t is ZERO:
                    continue
                if not samples.is_zero(lie_scalar(t, phi), f"special-case test {key}"):
                    info["levels_checked"] = m
                    info["reason"] = f"L_phi mu nonzero at {key}"
                    return False, info
        before = lam.rank
        for key, phi in level.items():
            lam.add_rows(samples.field_rows(phi), key, str(key))
        info["lambda_ranks"].append(lam.rank)
        info["levels_checked"] = m
        if m > 0 and lam.rank == before:
            info["reason"] = f"all tests vanish up to depth {m}"
            return True, info
        if not level:
            info["reason"] = "phi family extinct"
            return True, info
    info["reason"] = "depth cap reached with all tests vanishing"
    return True, info


# ----------------------------------------------------------------------------
# m_w = 1, g0 = 0

def select_single_output(model: SystemModel, samples: SampleSet, depth_cap=None):
    """First member of F (breadth-first) whose derivative along g is nonzero."""
    from .canonization import build_function_space
    fs = build_function_space(model, depth_cap or model.n + 2, samples)
    g = model.g[0]
    for member in fs.members:
        lg = lie_scalar(member.expr, g)
        if lg is ZERO:
            continue
        if not samples.is_zero(lg, f"L_g of {member.label}"):
            return member, fs
    return None, fs


def omega_single_report(model: SystemModel, samples: SampleSet, depth_cap=None,
                        max_steps=None, prune=True):
    if model.m_w != 1 or model.has_drift:
        raise ValueError("omega_single requires m_w = 1 and g0 = 0")
    t_start = time.perf_counter()
    member, fs = select_single_output(model, samples, depth_cap)
    if member is None:
        report = orc_report(model.without_unknown_inputs(), samples)
        report.algorithm = "single"
        report.spurious = [model.unknown_inputs[0]]
        report.notes.append("L_g vanishes on the whole function space: unknown input is spurious")
        report.snapshots = report.snapshots
        return report
    h = member.expr
    g = model.g[0]
    L1 = lie_scalar(h, g)
    require_nonzero(samples, L1, "L_g h")
    g_hat = g.scaled(div(ONE, L1))
    nu = [[ZERO, ZERO], [ZERO, div(ONE, L1)]]
    g_set = [VectorField.zero(model.state), g]
    phis = _PhiBuilder(model.f, nu, g_set, samples, prune=prune)
    special, cert = _certify_special(phis, [L1], samples, model.n + 2)
    tau = div(lie_scalar(L1, g), power(L1, 2))
    ops = [(f"L_{name}", (lambda fld: lambda s: lie_scalar(s, fld))(fld))
           for name, fld in zip(model.known_inputs, model.f)]
    ops.append(("L_ghat", lambda s: div(lie_scalar(s, g), L1)))
    known = model.known_inputs

    def phi_scalars(m):
        lvl = m - 1
        out = []
        if lvl == 0:
            for (i, _), phi in phis.fields(0).items():
                out.append((lie_scalar(h, phi), f"L_{_phi_label((i, ()), known)}(h)"))
            return out
        # level lvl entries come from brackets of level lvl-1 fields; only alpha = 1
        for (i, alphas), phi in phis.fields(lvl - 1).items():
            if any(a == 0 for a in alphas):
                continue
            # L_{[phi,g]/L1} h = (L_phi L_g h - L_g L_phi h) / L1
            val = div(add(lie_scalar(L1, phi), neg(lie_scalar(lie_scalar(h, phi), g))), L1)
            out.append((val, f"L_{_phi_label((i, alphas + (1,)), known)}(h)"))
        return out

    base = [(member.expr, member.label)] + [(hh, name) for name, hh in model.outputs]
    keys = [] if special else [(tau, "tau")]
    report = filtrate(samples, base, ops, phi_scalars, keys, special=special,
                      max_steps=max_steps, algorithm="single")
    report.h_sel = [member.label]
    report.certification = cert
    report.tensors["tau"] = to_str(tau, limit=400)
    report.tensors["L1"] = to_str(L1, limit=400)
    report.timings["analysis"] = time.perf_counter() - t_start
    report.extra = {"h": h, "L1": L1, "tau": tau, "g_hat": g_hat, "phis": phis}
    return report


def omega_single(model: SystemModel, plan: SamplePlan = SamplePlan(), depth_cap=None,
                 max_steps=None) -> AnalysisReport:
    started = time.perf_counter()
    report = _run(model, plan, lambda s: omega_single_report(model, s, depth_cap, max_steps))
    return finish(report, model, started)


# ----------------------------------------------------------------------------
# general case

def omega_general_report(model: SystemModel, h_sel, samples: SampleSet, max_steps=None,
                         prune=True, cap=DEFAULT_NODE_CAP, h_labels=None, count_t=True,
                         hold_extra_outputs=False):
    """hold_extra_outputs: outputs outside h_sel enter Omega_0 but are not
    differentiated.  Omega* is unchanged; intermediate ranks can be lower.
    """
    t_start = time.perf_counter()
    mw = model.m_w
    h_sel = [as_expr(h) for h in h_sel]
    h_labels = h_labels or [f"hsel{i + 1}" for i in range(mw)]
    mn = build_mu_nu(model, h_sel, samples)
    g_set = [model.g0] + list(model.g)
    phis = _PhiBuilder(model.f, mn.nu, g_set, samples, cap=cap, prune=prune)
    targets = [mn.mu[a][k] for a in range(mw + 1) for k in range(1, mw + 1)]
    special, cert = _certify_special(phis, targets, samples, model.n + 2)
    known = model.known_inputs

    ops = [(f"L_{name}", (lambda fld: lambda s: lie_scalar(s, fld))(fld))
           for name, fld in zip(model.known_inputs, model.f)]
    for alpha in range(mw + 1):
        if all(c is ZERO for c in mn.nu[alpha]) or (alpha == 0 and not model.has_drift):
            continue
        ops.append((f"L_ghat{alpha}", (lambda a: lambda s: lie_hat(s, a, mn, model))(alpha)))

    def phi_scalars(m):
        lvl = m - 1
        out = []
        if lvl == 0:
            for key, phi in phis.fields(0).items():
                for hl, lab in zip(h_sel, h_labels):
                    out.append((lie_scalar(hl, phi), f"L_{_phi_label(key, known)}({lab})"))
            return out
        for key, phi in phis.fields(lvl - 1).items():
            # L_{[phi]^alpha} h = nu^alpha_beta (L_phi L_{g^beta} h - L_{g^beta} L_phi h)
            for l, (hl, lab) in enumerate(zip(h_sel, h_labels), start=1):
                lphi_h = lie_scalar(hl, phi)
                br = [ZERO if gb.is_zero else
                      add(lie_scalar(mn.mu[beta][l], phi), neg(lie_scalar(lphi_h, gb)))
                      for beta, gb in enumerate(g_set)]
                for alpha in range(mw + 1):
                    terms = [mul(c, b) for c, b in zip(mn.nu[alpha], br)
                             if c is not ZERO and b is not ZERO]
                    if not terms:
                        continue
                    child = (key[0], key[1] + (alpha,))
                    if child in phis.family.pruned:
                        continue
                    out.append((add(*terms), f"L_{_phi_label(child, known)}({lab})"))
        return out

    keys = []
    T = None
    if not special or count_t:
        T = t_tensor(model, mn)
    if not special:
        keys = [(e, f"T^{a}{b}_{c}") for (a, b, c), e in t_components(T)]
    outputs_extra = [(hh, name) for name, hh in model.outputs]
    base = list(zip(h_sel, h_labels))
    if hold_extra_outputs:
        inert = outputs_extra
    else:
        base, inert = base + outputs_extra, ()
    report = filtrate(samples, base, ops, phi_scalars, keys, special=special,
                      max_steps=max_steps, algorithm="general", inert=inert)
    report.h_sel = list(h_labels)
    report.certification = cert
    if T is not None and count_t:
        comps = t_components(T, samples)
        report.tensors["t_nonzero"] = len(comps)
        report.tensors["t_nonzero_labels"] = [f"T^{a}{b}_{c}" for (a, b, c), _ in comps]
        report.tensors["t_zero_slab_vanishes"] = zero_slab_vanishes(T, samples)
    report.timings["analysis"] = time.perf_counter() - t_start
    report.extra = {"munu": mn, "T": T, "phis": phis}
    return report


def omega_general(model: SystemModel, h_sel, plan: SamplePlan = SamplePlan(), max_steps=None,
                  h_labels=None, cap=DEFAULT_NODE_CAP, hold_extra_outputs=False) -> AnalysisReport:
    started = time.perf_counter()
    report = _run(model, plan, lambda s: omega_general_report(
        model, h_sel, s, max_steps=max_steps, h_labels=h_labels, cap=cap,
        hold_extra_outputs=hold_extra_outputs))
    return finish(report, model, started)


# ----------------------------------------------------------------------------
# extended state

def _fresh_name(base, taken):
    name = base
    while name in taken:
        name += "_"
    taken.add(name)
    return name


def extend_model(model: SystemModel, k: int) -> SystemModel:
    """Append the unknown inputs and their first k-1 derivatives to the state."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if model.m_w < 1:
        raise ValueError("extend_model needs at least one unknown input")
    taken = set(model.state) | set(model.params) | set(model.known_inputs)
    blocks = []
    for order in range(k):
        blocks.append([_fresh_name(f"{w}_{order}", taken) for w in model.unknown_inputs])
    new_inputs = [_fresh_name(f"{w}_{k}", taken) for w in model.unknown_inputs]
    state = model.state + tuple(itertools.chain.from_iterable(blocks))
    top = list(model.g0.components)
    for j, gj in enumerate(model.g):
        wj = var(blocks[0][j])
        for i in range(model.n):
            if gj[i] is not ZERO:
                top[i] = add(top[i], mul(gj[i], wj))
    tail = []
    for order in range(k):
        for j in range(model.m_w):
            tail.append(var(blocks[order + 1][j]) if order + 1 < k else ZERO)
    G = VectorField(tuple(top) + tuple(tail), state)
    F = tuple(fld.padded(state) for fld in model.f)
    W = tuple(VectorField.unit(state, blocks[-1][j]) for j in range(model.m_w))
    return SystemModel(state=state, params=model.params, known_inputs=model.known_inputs,
                       unknown_inputs=tuple(new_inputs), g0=G, f=F, g=W,
                       outputs=model.outputs, ranges=dict(model.ranges),
                       name=f"{model.name}-ext{k}")


@dataclass
class ExtendedResult:
    model: SystemModel
    omega: Codistribution
    ranks: list
    samples: SampleSet


def extended_codistribution_on(ext: SystemModel, samples: SampleSet, m: int, base=None):
    """Omega-bar_m for an already extended model on given samples."""
    ops = [(f"L_{name}", (lambda fld: lambda s: lie_scalar(s, fld))(fld))
           for name, fld in zip(ext.known_inputs, ext.f)]
    ops.append(("L_G", lambda s: lie_scalar(s, ext.g0)))
    omega = Codistribution(samples)
    frontier = []
    for e, lab in (base if base is not None else [(h, nm) for nm, h in ext.outputs]):
        if omega.add(e, lab):
            frontier.append((e, lab))
    ranks = [omega.rank]
    for _ in range(m):
        added = []
        for e, lab in frontier:
            for name, fn in ops:
                cand = fn(e)
                if cand is ZERO or cand.is_const:
                    continue
                if omega.add(cand, _label(name, lab)):
                    added.append((cand, _label(name, lab)))
        frontier = added
        ranks.append(omega.rank)
    return omega, ranks


def extended_codistribution(model: SystemModel, k: int, m: int,
                            plan: SamplePlan = SamplePlan()) -> ExtendedResult:
    if m > k:
        raise ValueError("m must not exceed k")
    ext = extend_model(model, k)
    new_syms = ext.state[model.n:]

    def build(samples):
        omega, ranks = extended_codistribution_on(ext, samples, m)
        return ExtendedResult(ext, omega, ranks, samples)

    return _run(ext, plan, build, nonzero=new_syms)


def separation_check(model: SystemModel, report: AnalysisReport, k: int, m: int,
                     base, plan: SamplePlan = SamplePlan()):
    """Compare Omega-bar_m with [Omega_m, 0] + span{D L_G^j b : b in base, j <= m}.

    base lists the scalar functions spanning Omega_0 (outputs plus any
    re-selected functions).  Returns ranks and the inclusion/equality verdicts.
    """
    if m > k:
        raise ValueError("m must not exceed k")
    ext = extend_model(model, k)
    new_syms = ext.state[model.n:]
    snap = report.snapshots[min(m, len(report.snapshots) - 1)]

    def build(samples):
        bar, _ = extended_codistribution_on(ext, samples, m, [(b, f"b{i}") for i, b in enumerate(base)])
        tilde = Codistribution(samples)
        for i, e in enumerate(snap):
            tilde.add(e, f"omega{i}")
        for i, b in enumerate(base):
            cur = b
            for j in range(1, m + 1):
                cur = lie_scalar(cur, ext.g0)
                if cur is ZERO:
                    break
                tilde.add(cur, f"L_G^{j}(b{i})")
        included = tilde.contains_all(bar)
        return {"k": k, "m": m, "rank_extended": bar.rank, "rank_embedded": tilde.rank,
                "included": bool(included), "equal": bool(included and bar.rank == tilde.rank)}

    return _run(ext, plan, build, nonzero=new_syms)
