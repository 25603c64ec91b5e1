"""Vectorized numeric evaluation of expression DAGs over a batch of points.

Alongside each value the evaluator carries a magnitude bound: the value that
the same expression would take if every sum were replaced by the sum of
absolute values.  Rounding error is a small multiple of machine epsilon times
that bound, which lets callers tell a genuinely vanishing quantity from
cancellation noise.  Gradients with respect to the state are propagated in
forward mode so that rank tests never need symbolic derivatives.
"""
from __future__ import annotations

import numpy as np

from .expr import (ADD, ATAN, CONST, COS, MUL, PARAM, SIN, SQRT, TAN, VAR,
                   Expr, ExpressionError, postorder)

SINGULAR_DENOMINATOR = 1e-12
ZERO_RTOL = 1e-10


class SingularEvaluation(ExpressionError):
    """A denominator vanished or a value was not finite at some points."""

    def __init__(self, points, message="singular evaluation"):
        self.points = sorted(set(int(p) for p in points))
        super().__init__(f"{message} at point(s) {self.points}")


def numerically_zero(value, magnitude, rtol=ZERO_RTOL):
    """Elementwise test that value is indistinguishable from rounding noise."""
    return np.abs(value) <= rtol * magnitude + 1e-300


class Evaluator:
    """Evaluate expressions at a fixed batch of points.

    values maps every symbol name to an array of length P.  state lists the
    names that gradients are taken with respect to.
    """

    def __init__(self, values, state=()):
        self.values = {k: np.asarray(v, dtype=float) for k, v in values.items()}
        sizes = {v.shape for v in self.values.values()}
        if len(sizes) > 1:
            raise ValueError("all symbol arrays must share one shape")
        self.P = next(iter(sizes))[0] if sizes else 1
        self.state = tuple(state)
        self.col = {name: i for i, name in enumerate(self.state)}
        self._val = {}
        self._jet = {}

    def clear(self):
        self._val.clear()
        self._jet.clear()

    # values ----------------------------------------------------------------
    def value(self, e: Expr):
        """Return (value, magnitude) arrays of shape (P,)."""
        hit = self._val.get(e.id)
        if hit is not None:
            return hit
        for node in postorder([e]):
            if node.id not in self._val:
                self._val[node.id] = self._value_node(node)
        return self._val[e.id]

    def __call__(self, e: Expr):
        return self.value(e)[0]

    def _symbol(self, name):
        arr = self.values.get(name)
        if arr is None:
            raise ExpressionError(f"no value supplied for symbol '{name}'")
        return arr

    def _bad(self, mask, what):
        idx = np.nonzero(mask)[0]
        if len(idx):
            raise SingularEvaluation(idx, what)

    def _value_node(self, node):
        k = node.kind
        if k == CONST:
            v = np.full(self.P, float(node.data))
            return v, np.abs(v)
        if k in (VAR, PARAM):
            v = self._symbol(node.data)
            return v, np.abs(v)
        if k == ADD:
            c0 = float(node.data[0])
            v = np.full(self.P, c0)
            m = np.full(self.P, abs(c0))
            for t, c in zip(node.args, node.data[1]):
                tv, tm = self._val[t.id]
                cf = float(c)
                v = v + cf * tv
                m = m + abs(cf) * tm
            return v, m
        if k == MUL:
            v = np.ones(self.P)
            rel = np.zeros(self.P)
            for b, n in zip(node.args, node.data):
                bv, bm = self._val[b.id]
                if n < 0:
                    self._bad(np.abs(bv) < SINGULAR_DENOMINATOR, "vanishing denominator")
                v = v * bv ** n
                with np.errstate(divide="ignore", invalid="ignore"):
                    r = np.where(bv != 0, bm / np.abs(bv), 0.0)
                rel = rel + abs(n) * r
            self._bad(~np.isfinite(v), "non-finite value")
            m = np.abs(v) * (1.0 + rel)
            return v, m
        a, am = self._val[node.args[0].id]
        if k == SIN:
            v = np.sin(a)
            m = np.abs(v) + np.abs(np.cos(a)) * am
        elif k == COS:
            v = np.cos(a)
            m = np.abs(v) + np.abs(np.sin(a)) * am
        elif k == TAN:
            v = np.tan(a)
            m = np.abs(v) + (1.0 + v * v) * am
        elif k == ATAN:
            v = np.arctan(a)
            m = np.abs(v) + am / (1.0 + a * a)
        elif k == SQRT:
            self._bad(a < 0, "square root of a negative value")
            v = np.sqrt(a)
            self._bad(v < SINGULAR_DENOMINATOR, "square root at zero")
            m = np.abs(v) + am / (2.0 * v)
        else:
            raise ExpressionError(f"unknown node kind {k}")
        self._bad(~np.isfinite(v), "non-finite value")
        return v, m

    # gradients ---------------------------------------------------------------
    def jet(self, e: Expr):
        """Return (value, magnitude, gradient, gradient magnitude).

        Gradients have shape (P, len(state)); None stands for zero.
        """
        hit = self._jet.get(e.id)
        if hit is not None:
            return self._val[e.id] + hit
        for node in postorder([e]):
            if node.id not in self._val:
                self._val[node.id] = self._value_node(node)
            if node.id not in self._jet:
                self._jet[node.id] = self._jet_node(node)
        return self._val[e.id] + self._jet[e.id]

    def _jet_node(self, node):
        k = node.kind
        n_state = len(self.state)
        if k == VAR:
            j = self.col.get(node.data)
            if j is None:
                return None, None
            g = np.zeros((self.P, n_state))
            g[:, j] = 1.0
            return g, np.zeros((self.P, n_state))
        if k in (CONST, PARAM):
            return None, None
        if k == ADD:
            g = gm = None
            for t, c in zip(node.args, node.data[1]):
                tg, tgm = self._jet[t.id]
                if tg is None:
                    continue
                cf = float(c)
                if g is None:
                    g = cf * tg
                    gm = abs(cf) * tgm
                else:
                    g = g + cf * tg
                    gm = gm + abs(cf) * tgm
            return g, gm
        if k == MUL:
            v, m = self._val[node.id]
            rel = (m / np.maximum(np.abs(v), 1e-300))[:, None]
            g = gm = None
            for i, (b, n) in enumerate(zip(node.args, node.data)):
                bg, bgm = self._jet[b.id]
                if bg is None:
                    continue
                bv = self._val[b.id][0]
                if np.all(bv != 0):
                    w = n * v / bv
                else:
                    w = n * self._partial_product(node, i)
                w = w[:, None]
                term = w * bg
                tm = np.abs(w) * (bgm + np.abs(bg) * rel)
                if g is None:
                    g, gm = term, tm
                else:
                    g = g + term
                    gm = gm + tm
            return g, gm
        a = node.args[0]
        ag, agm = self._jet[a.id]
        if ag is None:
            return None, None
        av, am = self._val[a.id]
        v, _ = self._val[node.id]
        if k == SIN:
            d, dm = np.cos(av), np.abs(np.sin(av)) * am + np.abs(np.cos(av))
        elif k == COS:
            d, dm = -np.sin(av), np.abs(np.cos(av)) * am + np.abs(np.sin(av))
        elif k == TAN:
            d = 1.0 + v * v
            dm = d * (1.0 + 2.0 * np.abs(v) * am)
        elif k == ATAN:
            d = 1.0 / (1.0 + av * av)
            dm = d * (1.0 + 2.0 * np.abs(av) * am * d)
        elif k == SQRT:
            d = 0.5 / v
            dm = np.abs(d) * (1.0 + am / np.abs(av))
        else:
            raise ExpressionError(f"unknown node kind {k}")
        g = d[:, None] * ag
        gm = np.abs(d)[:, None] * agm + dm[:, None] * np.abs(ag)
        return g, gm

    def _partial_product(self, node, skip):
        out = np.ones(self.P)
        for i, (b, n) in enumerate(zip(node.args, node.data)):
            bv = self._val[b.id][0]
            out = out * (bv ** (n - 1) if i == skip else bv ** n)
        return out

    def gradient(self, e: Expr, clean=True):
        """Numeric gradient rows (P, n) with rounding noise set to zero."""
        _, _, g, gm = self.jet(e)
        if g is None:
            return np.zeros((self.P, len(self.state)))
        if clean:
            g = np.where(numerically_zero(g, gm), 0.0, g)
        return g

    def is_zero(self, e: Expr, rtol=ZERO_RTOL):
        """True where e vanishes up to rounding, per point."""
        v, m = self.value(e)
        return numerically_zero(v, m, rtol)


def evaluate(e: Expr, point) -> float:
    """Evaluate e at a single point given as {name: float}."""
    ev = Evaluator({k: np.array([float(v)]) for k, v in point.items()})
    return float(ev(e)[0])
