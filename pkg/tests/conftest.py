import numpy as np
import pytest

from uiobs import expr as E
from uiobs.lie import VectorField

STATE = ("x", "y", "z")


def random_expr(rng, depth=3, names=STATE, funcs=True):
    """Random expression that stays finite on the box [-2, 2]^n away from 0."""
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.3:
            return E.const(int(rng.integers(-3, 4)))
        return E.var(names[rng.integers(len(names))])
    a = random_expr(rng, depth - 1, names, funcs)
    b = random_expr(rng, depth - 1, names, funcs)
    pick = rng.integers(7 if funcs else 4)
    if pick == 0:
        return E.add(a, b)
    if pick == 1:
        return E.mul(a, b)
    if pick == 2:
        return E.sub(a, b)
    if pick == 3:
        return E.power(a, int(rng.integers(2, 4)))
    if pick == 4:
        return E.sin(a)
    if pick == 5:
        return E.cos(b)
    # denominators bounded away from zero
    return E.div(a, E.add(E.const(3), E.cos(b)))


def random_poly(rng, names=STATE, terms=3, degree=2):
    out = []
    for _ in range(terms):
        t = E.const(int(rng.integers(-3, 4)))
        for _ in range(int(rng.integers(0, degree + 1))):
            t = E.mul(t, E.var(names[rng.integers(len(names))]))
        out.append(t)
    return E.add(*out)


def random_field(rng, state=STATE, poly=True):
    make = (lambda: random_poly(rng, state)) if poly else (lambda: random_expr(rng, 2, state))
    return VectorField(tuple(make() for _ in state), state)


def to_sympy(e):
    import sympy
    text = E.to_str(e).replace("^", "**")
    return sympy.sympify(text, locals={n: sympy.Symbol(n) for n in STATE + ("a", "b")})


def random_points(rng, k=10, names=STATE):
    pts = rng.uniform(0.3, 1.7, size=(k, len(names))) * rng.choice([-1, 1], size=(k, len(names)))
    return [dict(zip(names, p)) for p in pts]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance lines, printed once at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
