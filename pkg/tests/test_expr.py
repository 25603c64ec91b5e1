import math

import numpy as np
import pytest

from uiobs import expr as E
from uiobs.evaluation import Evaluator, SingularEvaluation, evaluate
from conftest import STATE, random_expr, random_points, to_sympy

NS = E.Namespace(STATE, ("a", "b"))
x, y, z = (E.var(n) for n in STATE)


def P(text):
    return E.parse_expr(text, NS)


def test_hash_consing_gives_identity():
    assert P("x*y + sin(z)") is P("sin(z) + y*x")
    assert E.add(x, x) is E.scale(x, 2)
    assert E.mul(x, E.div(E.ONE, x)) is E.ONE


@pytest.mark.parametrize("text, expected", [
    ("x - x", "0"),
    ("0*y + 2*3", "6"),
    ("x*x*x/x", "x^2"),
    ("-(-x)", "x"),
    ("sqrt(4)", "2"),
    ("x^0", "1"),
    ("2^3", "8"),
])
def test_canonical_simplification(text, expected):
    assert E.to_str(P(text)) == expected


def test_leaves_and_symbols():
    e = P("a*x + sin(b*y)")
    vs, ps = E.symbols(e)
    assert vs == {"x", "y"} and ps == {"a", "b"}
    assert E.diff(e, "a") is E.ZERO   # parameters are not differentiated


@pytest.mark.parametrize("text", [
    "x + y*z", "-x/y", "x^3 - 2*x*y + 1/2", "sin(x)^2 + cos(x)^2", "atan(x/y)",
    "sqrt(x^2 + 1)", "tan(x - y)/(3 + cos(z))", "(-3)*x", "a*x - b", "x/(y^2*z)",
])
def test_print_parse_round_trip(text):
    e = P(text)
    assert P(E.to_str(e)) is e


def test_round_trip_random(rng):
    for _ in range(200):
        e = random_expr(rng, 4)
        assert P(E.to_str(e)) is e


@pytest.mark.parametrize("bad, pos", [("x +", 3), ("x * (y", 6), ("2^x", 2), ("x^1.5", 2),
                                      ("foo(x)", 0), ("x $ y", 2)])
def test_parse_errors_carry_position(bad, pos):
    with pytest.raises(E.ParseError) as info:
        P(bad)
    assert info.value.position is not None
    assert abs(info.value.position - pos) <= 3


def test_undeclared_symbol():
    with pytest.raises(E.UndeclaredSymbol):
        P("x + w")


def test_power_binds_tightest():
    assert evaluate(P("-x^2"), {"x": 3.0}) == -9.0
    assert evaluate(P("2*x^2"), {"x": 3.0}) == 18.0


def test_derivatives_against_sympy(rng):
    sympy = pytest.importorskip("sympy")
    for _ in range(100):
        e = random_expr(rng, 3)
        s = to_sympy(e)
        for name in STATE:
            d = E.diff(e, name)
            ref = sympy.diff(s, sympy.Symbol(name))
            for p in random_points(rng, 3):
                got = evaluate(d, p)
                want = float(ref.subs({sympy.Symbol(k): v for k, v in p.items()}))
                assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


def test_derivatives_against_finite_differences(rng):
    """Relative agreement within 1e-6 on a 100-expression corpus."""
    worst = 0.0
    for _ in range(100):
        e = random_expr(rng, 3)
        for p in random_points(rng, 2):
            for name in STATE:
                h = 1e-6 * max(1.0, abs(p[name]))
                up, dn = dict(p), dict(p)
                up[name] += h
                dn[name] -= h
                fd = (evaluate(e, up) - evaluate(e, dn)) / (2 * h)
                an = evaluate(E.diff(e, name), p)
                scale = max(1.0, abs(an), abs(evaluate(e, p)))
                worst = max(worst, abs(fd - an) / scale)
    assert worst <= 1e-6


def test_directional_matches_sum_of_partials(rng):
    for _ in range(30):
        e = random_expr(rng, 3)
        f = {n: random_expr(rng, 2) for n in STATE}
        lhs = E.directional(e, f)
        rhs = E.add(*[E.mul(E.diff(e, n), f[n]) for n in STATE])
        for p in random_points(rng, 3):
            assert evaluate(lhs, p) == pytest.approx(evaluate(rhs, p), rel=1e-9, abs=1e-9)


def test_substitute():
    e = P("x*y + sin(z)")
    s = E.substitute(e, {"z": E.const(0), "y": P("x")})
    assert s is P("x^2")


def test_expression_cap():
    e = x
    for _ in range(12):
        e = E.mul(E.add(e, y), E.add(e, z))
    with pytest.raises(E.ExpressionSwell):
        E.check_cap(e, cap=20)


def test_evaluator_gradient_matches_diff(rng):
    pts = rng.uniform(0.5, 1.5, size=(4, 3))
    ev = Evaluator({n: pts[:, i] for i, n in enumerate(STATE)}, STATE)
    for _ in range(20):
        e = random_expr(rng, 3)
        G = ev.gradient(e)
        for j, n in enumerate(STATE):
            np.testing.assert_allclose(G[:, j], ev(E.diff(e, n)), rtol=1e-9, atol=1e-9)


def test_evaluator_zero_magnitude():
    ev = Evaluator({"x": np.array([0.7, 1.3])}, ("x",))
    # structurally nonzero but numerically zero
    e = E.sub(E.power(E.sin(x), 2), E.sub(E.ONE, E.power(E.cos(x), 2)))
    assert ev.is_zero(e).all()
    assert not ev.is_zero(x).any()


def test_singular_evaluation():
    ev = Evaluator({"x": np.array([0.0, 1.0])}, ("x",))
    with pytest.raises(SingularEvaluation):
        ev(E.div(E.ONE, x))


def test_trig_constants_fold():
    assert E.sin(E.ZERO) is E.ZERO
    assert E.cos(E.ZERO) is E.ONE
    assert math.isclose(evaluate(P("atan(1)"), {}), math.pi / 4)
