"""Control-affine systems with known and unknown inputs."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

from .expr import Expr, as_expr, symbols
from .lie import VectorField


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class SystemModel:
    """dx/dt = g0 + sum_i f^i u_i + sum_j g^j w_j,  y_k = h_k(x)."""

    state: tuple
    params: tuple = ()
    known_inputs: tuple = ()
    unknown_inputs: tuple = ()
    g0: VectorField = None
    f: tuple = ()
    g: tuple = ()
    outputs: tuple = ()          # (name, Expr) pairs
    ranges: dict = field(default_factory=dict)
    symmetries: tuple = ()
    name: str = "model"

    def __post_init__(self):
        st = tuple(self.state)
        object.__setattr__(self, "state", st)
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "known_inputs", tuple(self.known_inputs))
        object.__setattr__(self, "unknown_inputs", tuple(self.unknown_inputs))
        if self.g0 is None:
            object.__setattr__(self, "g0", VectorField.zero(st))
        object.__setattr__(self, "f", tuple(self.f))
        object.__setattr__(self, "g", tuple(self.g))
        object.__setattr__(self, "outputs", tuple((n, as_expr(h)) for n, h in self.outputs))
        object.__setattr__(self, "symmetries", tuple(self.symmetries))
        if len(set(st)) != len(st):
            raise ModelError("state names must be distinct")
        if len(self.f) != len(self.known_inputs):
            raise ModelError("one f field is required per known input")
        if len(self.g) != len(self.unknown_inputs):
            raise ModelError("one g field is required per unknown input")
        for v in (self.g0, *self.f, *self.g, *self.symmetries):
            if tuple(v.state) != st:
                raise ModelError("every field must live on the model state")
        if not self.outputs:
            raise ModelError("at least one output is required")
        declared = set(st) | set(self.params)
        for _, h in self.outputs:
            vs, ps = symbols(h)
            extra = (vs | ps) - declared
            if extra:
                raise ModelError(f"output uses undeclared symbols {sorted(extra)}")

    @property
    def n(self):
        return len(self.state)

    @property
    def m_u(self):
        return len(self.f)

    @property
    def m_w(self):
        return len(self.g)

    @property
    def h(self):
        return [e for _, e in self.outputs]

    @property
    def has_drift(self):
        return not self.g0.is_zero

    @property
    def symbols(self):
        return self.state + self.params

    def replace(self, **kw):
        return replace(self, **kw)

    def without_unknown_inputs(self):
        return self.replace(unknown_inputs=(), g=())

    def keep_unknown_inputs(self, indices):
        idx = list(indices)
        return self.replace(unknown_inputs=tuple(self.unknown_inputs[i] for i in idx),
                            g=tuple(self.g[i] for i in idx))

    def with_outputs(self, outputs):
        return self.replace(outputs=tuple(outputs))

    def digest(self):
        from .modelfile import dump_model
        return hashlib.sha256(dump_model(self).encode()).hexdigest()[:16]


def output_pairs(exprs, prefix="h"):
    return tuple((f"{prefix}{i + 1}", as_expr(e)) for i, e in enumerate(exprs))


def is_expr(x):
    return isinstance(x, Expr)
