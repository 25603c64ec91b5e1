"""Lie derivatives, Lie brackets and the bracket along a set of fields."""
from __future__ import annotations

from dataclasses import dataclass

from .expr import ZERO, Expr, as_expr, directional, linear_combination, mul, add


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class VectorField:
    """Column of n expressions over an ordered state."""

    components: tuple
    state: tuple

    def __post_init__(self):
        comps = tuple(as_expr(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "state", tuple(self.state))
        if len(comps) != len(self.state):
            raise DimensionMismatch(
                f"field has {len(comps)} components for a {len(self.state)}-dimensional state")

    @classmethod
    def zero(cls, state):
        return cls((ZERO,) * len(state), state)

    @classmethod
    def unit(cls, state, name):
        return cls(tuple(as_expr(1 if s == name else 0) for s in state), state)

    def as_map(self):
        return {s: c for s, c in zip(self.state, self.components) if c is not ZERO}

    @property
    def is_zero(self):
        return all(c is ZERO for c in self.components)

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __add__(self, other):
        _check(self, other)
        return VectorField(tuple(add(a, b) for a, b in zip(self, other)), self.state)

    def __sub__(self, other):
        _check(self, other)
        return VectorField(tuple(add(a, -b) for a, b in zip(self, other)), self.state)

    def scaled(self, s):
        s = as_expr(s)
        return VectorField(tuple(mul(s, c) for c in self.components), self.state)

    def padded(self, state):
        """Embed in a larger state whose prefix is this field's state."""
        extra = tuple(state[len(self.state):])
        if tuple(state[:len(self.state)]) != self.state:
            raise DimensionMismatch("target state must extend the field's state")
        return VectorField(self.components + (ZERO,) * len(extra), state)


@dataclass(frozen=True)
class Covector:
    """Row of n expressions over an ordered state."""

    components: tuple
    state: tuple

    def __post_init__(self):
        comps = tuple(as_expr(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "state", tuple(self.state))
        if len(comps) != len(self.state):
            raise DimensionMismatch(
                f"covector has {len(comps)} components for a {len(self.state)}-dimensional state")

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __len__(self):
        return len(self.components)


def _check(a, b):
    if tuple(a.state) != tuple(b.state):
        raise DimensionMismatch("objects live on different state spaces")


def gradient(h: Expr, state) -> Covector:
    """Row of partial derivatives in state order."""
    h = as_expr(h)
    return Covector(tuple(directional(h, {s: as_expr(1)}) for s in state), state)


def lie_scalar(h: Expr, f: VectorField) -> Expr:
    """L_f h = dh/dx . f"""
    if not isinstance(f, VectorField):
        raise TypeError("lie_scalar expects a VectorField")
    return directional(as_expr(h), f.as_map())


def lie_covector(w: Covector, f: VectorField) -> Covector:
    """Coordinate formula w . df/dx + f^T (dw^T/dx)^T."""
    _check(w, f)
    fmap = f.as_map()
    comps = []
    for j, xj in enumerate(f.state):
        unit = {xj: as_expr(1)}
        pairs = [(1, mul(wi, directional(fi, unit))) for wi, fi in zip(w, f) if wi is not ZERO]
        pairs.append((1, directional(w[j], fmap)))
        comps.append(linear_combination(pairs))
    return Covector(tuple(comps), w.state)


def lie_bracket(a: VectorField, b: VectorField) -> VectorField:
    """[a, b] = (db/dx) a - (da/dx) b"""
    _check(a, b)
    amap, bmap = a.as_map(), b.as_map()
    comps = tuple(add(directional(bi, amap), -directional(ai, bmap)) for ai, bi in zip(a, b))
    return VectorField(comps, a.state)


def combine_fields(coeffs, fields, state) -> VectorField:
    """Sum_k coeffs[k] * fields[k]."""
    comps = []
    for i in range(len(state)):
        terms = [mul(c, f[i]) for c, f in zip(coeffs, fields) if c is not ZERO and f[i] is not ZERO]
        comps.append(add(*terms) if terms else ZERO)
    return VectorField(tuple(comps), state)


def extended_bracket(phi: VectorField, nu, g_set) -> list:
    """[phi]^alpha = sum_beta nu[alpha][beta] [phi, g^beta] for alpha = 0..m_w."""
    if len(nu) != len(g_set):
        raise DimensionMismatch("nu must be (m_w+1)x(m_w+1) and match the field set")
    brackets = [lie_bracket(phi, g) if not g.is_zero else VectorField.zero(phi.state) for g in g_set]
    return [combine_fields(row, brackets, phi.state) for row in nu]
