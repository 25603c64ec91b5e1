"""Generic-rank arithmetic for codistributions at random sample points.

Every quantity is decided at a small batch of random points.  A decision
that is not unanimous across the batch means some point sits on a
measure-zero exceptional set; those points are reported through
DegeneratePoints so the driver can redraw them and start over.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .evaluation import Evaluator, SingularEvaluation
from .expr import Expr, as_expr
from .lie import Covector, VectorField

GUARD_FLOOR = 1e-6


class DegeneratePoints(Exception):
    """Some sample points disagree with the majority on a generic decision."""

    def __init__(self, points, what="rank decision"):
        self.points = sorted(set(int(p) for p in points))
        super().__init__(f"degenerate sample point(s) {self.points} in {what}")


class GuardVanishes(Exception):
    """A guard expression could not be made nonzero: it vanishes in general."""

    def __init__(self, guard, message=None):
        self.guard = guard
        super().__init__(message or "guard vanishes at every attempted sample point")


@dataclass(frozen=True)
class SamplePlan:
    seed: int = 0
    point_count: int = 5
    ranges: dict = field(default_factory=dict)
    rank_tol: float = 1e-8
    member_tol: float = 1e-6
    max_resamples: int = 50
    default_range: tuple = (-2.0, 2.0)

    def __post_init__(self):
        if self.point_count < 3:
            raise ValueError("point_count must be at least 3")
        if self.rank_tol <= 0 or self.member_tol <= 0:
            raise ValueError("tolerances must be positive")
        for name, (lo, hi) in self.ranges.items():
            if not hi > lo:
                raise ValueError(f"empty sampling range for '{name}'")

    def range_of(self, name):
        return tuple(self.ranges.get(name, self.default_range))

    def with_ranges(self, extra):
        merged = dict(extra)
        merged.update(self.ranges)
        return replace(self, ranges=merged)

    def as_dict(self):
        return {
            "seed": self.seed,
            "point_count": self.point_count,
            "ranges": {k: list(v) for k, v in sorted(self.ranges.items())},
            "rank_tol": self.rank_tol,
            "member_tol": self.member_tol,
            "max_resamples": self.max_resamples,
        }


class SampleSet:
    """A batch of points plus a shared evaluator over a fixed state."""

    def __init__(self, values, state, plan: SamplePlan):
        self.values = {k: np.array(v, dtype=float) for k, v in values.items()}
        self.state = tuple(state)
        self.plan = plan
        self.P = len(next(iter(self.values.values())))
        self.ev = Evaluator(self.values, self.state)

    @property
    def n(self):
        return len(self.state)

    def point(self, i):
        return {k: float(v[i]) for k, v in self.values.items()}

    def gradient(self, e: Expr):
        return self.ev.gradient(as_expr(e))

    def value(self, e: Expr):
        return self.ev(as_expr(e))

    def rows_of(self, w):
        """Numeric (P, n) rows for a scalar (its differential) or a Covector."""
        if isinstance(w, Covector):
            if tuple(w.state) != self.state:
                raise ValueError("covector lives on a different state")
            return np.stack([self.value(c) for c in w], axis=1)
        return self.gradient(w)

    def field_rows(self, f: VectorField):
        return np.stack([self.value(c) for c in f], axis=1)

    def vote(self, flags, what):
        """Collapse per-point booleans to one verdict, flagging any dissent."""
        flags = np.asarray(flags, dtype=bool)
        k = int(flags.sum())
        if k == 0 or k == self.P:
            return bool(k)
        verdict = k * 2 > self.P
        raise DegeneratePoints(np.nonzero(flags != verdict)[0], what)

    def is_zero(self, e: Expr, what="zero test"):
        return self.vote(self.ev.is_zero(as_expr(e)), what)

    def field_is_zero(self, f: VectorField, what="zero field test"):
        flags = np.ones(self.P, dtype=bool)
        for c in f:
            flags &= self.ev.is_zero(c)
        return self.vote(flags, what)


def _draw(rng, plan, names, P, nonzero):
    out = {}
    for name in names:
        lo, hi = plan.range_of(name)
        v = rng.uniform(lo, hi, size=P)
        if name in nonzero:
            # keep unknown-input samples away from zero
            v = np.where(np.abs(v) < 0.05, v + np.sign(v + 1e-300) * 0.25, v)
        out[name] = v
    return out


def sample_points(symbols, state, plan: SamplePlan, guards=(), nonzero=(), rng=None):
    """Draw plan.point_count points where every guard exceeds the floor.

    symbols lists every name that needs a value (state first, then params).
    Returns a SampleSet.  Raises GuardVanishes when the budget runs out.
    """
    rng = rng if rng is not None else np.random.default_rng(plan.seed)
    symbols = list(dict.fromkeys(symbols))
    P = plan.point_count
    values = _draw(rng, plan, symbols, P, set(nonzero))
    guards = [as_expr(g) for g in guards]
    for _ in range(plan.max_resamples + 1):
        bad = np.zeros(P, dtype=bool)
        ev = Evaluator(values, state)
        for g in guards:
            try:
                v = ev(g)
            except SingularEvaluation as exc:
                bad[exc.points] = True
                continue
            bad |= np.abs(v) <= GUARD_FLOOR
        if not bad.any():
            return SampleSet(values, state, plan)
        idx = np.nonzero(bad)[0]
        fresh = _draw(rng, plan, symbols, len(idx), set(nonzero))
        for name in symbols:
            values[name][idx] = fresh[name]
    raise GuardVanishes(guards, "resample budget exhausted: a guard vanishes in general")


def redraw(samples: SampleSet, points, rng, nonzero=()):
    """New SampleSet with the listed points replaced by fresh draws."""
    values = {k: v.copy() for k, v in samples.values.items()}
    idx = np.asarray(sorted(set(points)), dtype=int)
    fresh = _draw(rng, samples.plan, list(values), len(idx), set(nonzero))
    for name in values:
        values[name][idx] = fresh[name]
    return SampleSet(values, samples.state, samples.plan)


def with_resampling(build, samples: SampleSet, rng, nonzero=(), guards=()):
    """Run build(samples), redrawing offending points until it succeeds."""
    guards = [as_expr(g) for g in guards]
    attempts = 0
    while True:
        try:
            return build(samples), samples
        except (SingularEvaluation, DegeneratePoints) as exc:
            attempts += 1
            if attempts > samples.plan.max_resamples:
                raise
            bad = set(exc.points)
            samples = redraw(samples, bad, rng, nonzero)
            samples = _enforce_guards(samples, guards, rng, nonzero)


def _enforce_guards(samples, guards, rng, nonzero):
    for _ in range(samples.plan.max_resamples + 1):
        bad = set()
        for g in guards:
            try:
                v = samples.value(g)
            except SingularEvaluation as exc:
                bad.update(exc.points)
                continue
            bad.update(np.nonzero(np.abs(v) <= GUARD_FLOOR)[0].tolist())
        if not bad:
            return samples
        samples = redraw(samples, bad, rng, nonzero)
    raise GuardVanishes(guards, "resample budget exhausted while redrawing points")


class Codistribution:
    """Span of covectors, held as numeric rows at every sample point.

    Generators are either scalar expressions (standing for their
    differential) or explicit Covectors.  Dependent candidates are dropped
    on insertion, so generators are always independent and rank equals
    their count.
    """

    def __init__(self, samples: SampleSet, dim=None):
        self.samples = samples
        self.dim = samples.n if dim is None else dim
        self.generators = []
        self.labels = []
        self._rows = []
        self._basis = np.zeros((samples.P, 0, self.dim))

    @property
    def state(self):
        return self.samples.state

    @property
    def n(self):
        return self.dim

    @property
    def rank(self):
        return len(self.generators)

    def copy(self):
        c = Codistribution(self.samples, self.dim)
        c.generators = list(self.generators)
        c.labels = list(self.labels)
        c._rows = list(self._rows)
        c._basis = self._basis.copy()
        return c

    def matrix(self, i=None):
        """Stacked generator rows, shape (P, r, n), or (r, n) at point i."""
        if not self._rows:
            m = np.zeros((self.samples.P, 0, self.n))
        else:
            m = np.stack(self._rows, axis=1)
        return m if i is None else m[i]

    def residual(self, rows):
        """Relative residual of each row against the span, per point."""
        rows = np.asarray(rows, dtype=float)
        norms = np.linalg.norm(rows, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        u = rows / safe[:, None]
        Q = self._basis
        for _ in range(2):
            if Q.shape[1]:
                u = u - np.einsum("pk,pkn->pn", np.einsum("pkn,pn->pk", Q, u), Q)
        res = np.linalg.norm(u, axis=1)
        return np.where(norms > 0, res, 0.0), norms

    def independent(self, w, label=None):
        """True when w would raise the generic rank."""
        rows = self.samples.rows_of(w)
        res, _ = self.residual(rows)
        return self.samples.vote(res > self.samples.plan.rank_tol,
                                 f"rank test of {label or 'candidate'}")

    def add(self, w, label=None):
        """Insert w if independent; return whether it was kept."""
        if self.rank >= self.n:
            return False
        return self.add_rows(self.samples.rows_of(w), w, label)

    def add_rows(self, rows, payload=None, label=None):
        """Insert precomputed (P, dim) rows if they raise the rank."""
        if self.rank >= self.n:
            return False
        res, _ = self.residual(rows)
        if not self.samples.vote(res > self.samples.plan.rank_tol,
                                 f"rank test of {label or 'candidate'}"):
            return False
        self._push(payload, label, rows)
        return True

    def _push(self, w, label, rows):
        norms = np.linalg.norm(rows, axis=1)
        u = rows / norms[:, None]
        Q = self._basis
        for _ in range(2):
            if Q.shape[1]:
                u = u - np.einsum("pk,pkn->pn", np.einsum("pkn,pn->pk", Q, u), Q)
        u = u / np.linalg.norm(u, axis=1)[:, None]
        self._basis = np.concatenate([Q, u[:, None, :]], axis=1)
        self._rows.append(rows)
        self.generators.append(w)
        self.labels.append(label if label is not None else f"g{len(self.labels)}")

    def contains(self, w):
        """Membership by least-squares residual at every point."""
        rows = self.samples.rows_of(w)
        return self.contains_rows(rows)

    def contains_rows(self, rows):
        norms = np.linalg.norm(rows, axis=1)
        res, _ = self.residual(rows)
        absolute = res * norms
        return bool(np.all(absolute < self.samples.plan.member_tol * (1.0 + norms)
                           + 1e-10 * norms))

    def contains_all(self, other):
        return all(self.contains_rows(r) for r in other._rows)

    def point_ranks(self):
        tol = self.samples.plan.rank_tol
        m = self.matrix()
        out = []
        for i in range(self.samples.P):
            if m.shape[1] == 0:
                out.append(0)
                continue
            rows = m[i] / np.linalg.norm(m[i], axis=1)[:, None]
            s = np.linalg.svd(rows, compute_uv=False)
            out.append(int(np.sum(s > tol * max(s[0], 1.0))))
        return out


def require_nonzero(samples: SampleSet, e, what="guard"):
    """Raise unless |e| clears the guard floor at every point."""
    try:
        v = samples.value(e)
    except SingularEvaluation:
        raise
    bad = np.abs(v) <= GUARD_FLOOR
    if bad.all():
        raise GuardVanishes(e, f"{what} vanishes at every sample point")
    if bad.any():
        raise DegeneratePoints(np.nonzero(bad)[0], what)
    return v


def generic_rank(c: Codistribution) -> int:
    return c.rank


def contains(c: Codistribution, w) -> bool:
    return c.contains(w)


def sum_codistributions(c1: Codistribution, c2: Codistribution) -> Codistribution:
    """Union of generators with already-contained ones dropped."""
    if c1.samples is not c2.samples:
        raise ValueError("codistributions must share one sample set")
    out = c1.copy()
    for w, label, rows in zip(c2.generators, c2.labels, c2._rows):
        res, _ = out.residual(rows)
        if out.rank < out.n and out.samples.vote(res > out.samples.plan.rank_tol, "sum"):
            out._push(w, label, rows)
    return out


def orthogonal_distribution(c: Codistribution, at: int = 0):
    """Orthonormal nullspace basis of the generator matrix at one point."""
    if c.rank >= c.n:
        return []
    m = c.matrix(at)
    if m.shape[0] == 0:
        return [row for row in np.eye(c.n)]
    rows = m / np.linalg.norm(m, axis=1)[:, None]
    _, s, vt = np.linalg.svd(rows)
    tol = c.samples.plan.rank_tol * max(s[0], 1.0)
    r = int(np.sum(s > tol))
    return [vt[k] for k in range(r, c.n)]


def symmetry_residuals(c: Codistribution, candidate: VectorField):
    """Largest |cosine| between the candidate and any generator, per point."""
    v = c.samples.field_rows(candidate)
    vn = np.linalg.norm(v, axis=1)
    if c.rank == 0:
        return np.zeros(c.samples.P)
    m = c.matrix()
    mn = np.linalg.norm(m, axis=2)
    dots = np.abs(np.einsum("prn,pn->pr", m, v))
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.where(vn[:, None] > 0, dots / (mn * vn[:, None]), 0.0)
    return cos.max(axis=1)


def verify_symmetry(c: Codistribution, candidate: VectorField) -> bool:
    return bool(np.all(symmetry_residuals(c, candidate) < c.samples.plan.member_tol))
