"""Line-oriented model description format.

    state r phi theta
    param gamma
    known_input omega
    unknown_input v
    drift = 0, 0, 0
    f omega = 0, 0, 1
    g v = cos(theta - phi), sin(theta - phi)/r, 0
    output y = r
    range r 0.5 3
    symmetry = 0, 1, 1

Every symbol must be declared before the line that uses it.
"""
from __future__ import annotations

import re
from fractions import Fraction
from pathlib import Path

from .expr import ExpressionError, Namespace, ParseError, parse_expr, to_str
from .lie import VectorField
from .model import ModelError, SystemModel

_NAME = re.compile(r"[A-Za-z_][A-Za-z_0-9]*$")
KEYWORDS = {"state", "param", "known_input", "unknown_input", "drift", "f", "g",
            "output", "range", "symmetry"}


class ModelSyntaxError(ModelError):
    def __init__(self, message, line, column=1):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


def _split_top(text):
    """Split on commas that are not inside parentheses, keeping offsets."""
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append((text[start:i], start))
            start = i + 1
    parts.append((text[start:], start))
    return parts


class _Reader:
    def __init__(self, name):
        self.name = name
        self.state, self.params = [], []
        self.known, self.unknown = [], []
        self.drift = None
        self.f, self.g = {}, {}
        self.outputs = []
        self.ranges = {}
        self.symmetries = []

    def declared(self):
        return set(self.state) | set(self.params) | set(self.known) | set(self.unknown)

    def namespace(self):
        return Namespace(self.state, self.params)

    def names(self, words, lineno, col):
        out = []
        for w in words:
            if not _NAME.match(w):
                raise ModelSyntaxError(f"invalid name '{w}'", lineno, col)
            if w in self.declared() or w in out:
                raise ModelSyntaxError(f"'{w}' declared twice", lineno, col)
            out.append(w)
        return out

    def expr(self, text, lineno, col):
        try:
            return parse_expr(text, self.namespace())
        except ParseError as exc:
            raise ModelSyntaxError(exc.message, lineno, col + (exc.position or 0)) from exc
        except ExpressionError as exc:
            raise ModelSyntaxError(str(exc), lineno, col) from exc

    def vector(self, text, lineno, col, what):
        if not self.state:
            raise ModelSyntaxError(f"{what} given before any state declaration", lineno, col)
        parts = _split_top(text)
        if len(parts) != len(self.state):
            raise ModelSyntaxError(
                f"{what} has {len(parts)} components but the state has {len(self.state)}",
                lineno, col)
        comps = []
        for piece, off in parts:
            if not piece.strip():
                raise ModelSyntaxError(f"empty component in {what}", lineno, col + off)
            comps.append(self.expr(piece, lineno, col + off))
        return VectorField(tuple(comps), tuple(self.state))

    def line(self, raw, lineno):
        text = raw.split("#", 1)[0].rstrip()
        if not text.strip():
            return
        stripped = text.lstrip()
        col0 = len(text) - len(stripped) + 1
        m = re.match(r"[A-Za-z_][A-Za-z_0-9]*", stripped)
        head = m.group(0) if m else stripped.split()[0]
        rest = stripped[len(head):]
        rest_col = col0 + len(head)
        words = rest.split()
        if head == "state":
            if self.state:
                raise ModelSyntaxError("state declared twice", lineno, col0)
            if not words:
                raise ModelSyntaxError("state needs at least one name", lineno, col0)
            self.state = self.names(words, lineno, rest_col)
        elif head == "param":
            self.params += self.names(words, lineno, rest_col)
        elif head == "known_input":
            if not words:
                raise ModelSyntaxError("known_input needs at least one name", lineno, col0)
            self.known += self.names(words, lineno, rest_col)
        elif head == "unknown_input":
            self.unknown += self.names(words, lineno, rest_col)
        elif head in ("drift", "symmetry"):
            lhs, eq, rhs = rest.partition("=")
            if not eq or lhs.strip():
                raise ModelSyntaxError(f"expected '{head} = <expr>, ...'", lineno, col0)
            vec = self.vector(rhs, lineno, rest_col + len(lhs) + 1, head)
            if head == "drift":
                if self.drift is not None:
                    raise ModelSyntaxError("drift given twice", lineno, col0)
                self.drift = vec
            else:
                self.symmetries.append(vec)
        elif head in ("f", "g"):
            lhs, eq, rhs = rest.partition("=")
            inp = lhs.strip()
            if not eq or not inp:
                raise ModelSyntaxError(f"expected '{head} <input> = <expr>, ...'", lineno, col0)
            pool, table = (self.known, self.f) if head == "f" else (self.unknown, self.g)
            kind = "known_input" if head == "f" else "unknown_input"
            if inp not in pool:
                raise ModelSyntaxError(f"'{inp}' is not a declared {kind}", lineno, rest_col)
            if inp in table:
                raise ModelSyntaxError(f"field for '{inp}' given twice", lineno, rest_col)
            table[inp] = self.vector(rhs, lineno, rest_col + len(lhs) + 1, f"{head} {inp}")
        elif head == "output":
            lhs, eq, rhs = rest.partition("=")
            name = lhs.strip()
            if not eq or not _NAME.match(name or "-"):
                raise ModelSyntaxError("expected 'output <name> = <expr>'", lineno, col0)
            if name in {n for n, _ in self.outputs}:
                raise ModelSyntaxError(f"output '{name}' given twice", lineno, rest_col)
            self.outputs.append((name, self.expr(rhs, lineno, rest_col + len(lhs) + 1)))
        elif head == "range":
            if len(words) != 3:
                raise ModelSyntaxError("expected 'range <symbol> <lo> <hi>'", lineno, col0)
            sym, lo, hi = words
            if sym not in set(self.state) | set(self.params):
                raise ModelSyntaxError(f"range for undeclared symbol '{sym}'", lineno, rest_col)
            try:
                lo_v, hi_v = float(Fraction(lo)), float(Fraction(hi))
            except (ValueError, ZeroDivisionError) as exc:
                raise ModelSyntaxError("range bounds must be numbers", lineno, rest_col) from exc
            if not hi_v > lo_v:
                raise ModelSyntaxError("range must have lo < hi", lineno, rest_col)
            self.ranges[sym] = (lo_v, hi_v)
        else:
            raise ModelSyntaxError(f"unknown declaration '{head}'", lineno, col0)

    def build(self):
        if not self.state:
            raise ModelSyntaxError("no state declared", 1)
        for pool, table, head in ((self.known, self.f, "f"), (self.unknown, self.g, "g")):
            for inp in pool:
                if inp not in table:
                    raise ModelSyntaxError(f"missing '{head} {inp} = ...' line", 1)
        if not self.outputs:
            raise ModelSyntaxError("no output declared", 1)
        return SystemModel(
            state=tuple(self.state), params=tuple(self.params),
            known_inputs=tuple(self.known), unknown_inputs=tuple(self.unknown),
            g0=self.drift, f=tuple(self.f[k] for k in self.known),
            g=tuple(self.g[k] for k in self.unknown), outputs=tuple(self.outputs),
            ranges=dict(self.ranges), symmetries=tuple(self.symmetries), name=self.name)


def parse_model_text(text: str, name: str = "model") -> SystemModel:
    reader = _Reader(name)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        reader.line(raw, lineno)
    return reader.build()


def parse_model(path) -> SystemModel:
    path = Path(path)
    return parse_model_text(path.read_text(encoding="utf-8"), name=path.stem)


def _fmt_num(x):
    q = Fraction(x).limit_denominator(10**9)
    return str(q.numerator) if q.denominator == 1 else repr(float(x))


def dump_model(model: SystemModel) -> str:
    """Canonical text form; parse_model_text(dump_model(m)) rebuilds m."""
    vec = lambda v: ", ".join(to_str(c) for c in v)
    lines = ["state " + " ".join(model.state)]
    if model.params:
        lines.append("param " + " ".join(model.params))
    if model.known_inputs:
        lines.append("known_input " + " ".join(model.known_inputs))
    if model.unknown_inputs:
        lines.append("unknown_input " + " ".join(model.unknown_inputs))
    if model.has_drift:
        lines.append("drift = " + vec(model.g0))
    for name, fld in zip(model.known_inputs, model.f):
        lines.append(f"f {name} = " + vec(fld))
    for name, fld in zip(model.unknown_inputs, model.g):
        lines.append(f"g {name} = " + vec(fld))
    for name, h in model.outputs:
        lines.append(f"output {name} = {to_str(h)}")
    for sym in sorted(model.ranges):
        lo, hi = model.ranges[sym]
        lines.append(f"range {sym} {_fmt_num(lo)} {_fmt_num(hi)}")
    for s in model.symmetries:
        lines.append("symmetry = " + vec(s))
    return "\n".join(lines) + "\n"
