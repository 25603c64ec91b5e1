"""Hash-consed symbolic expressions over state variables and parameters.

Every node is built through smart constructors that fold constants, collect
like terms in sums and merge powers in products, so structurally equal
expressions are the same Python object.  Quotients are products with negative
integer exponents and negation is a sum term with coefficient -1.
"""
from __future__ import annotations

import hashlib
import itertools
import re
from fractions import Fraction

CONST, PARAM, VAR, ADD, MUL, SIN, COS, TAN, ATAN, SQRT = range(10)
FUNC_KINDS = (SIN, COS, TAN, ATAN, SQRT)
FUNC_NAMES = {SIN: "sin", COS: "cos", TAN: "tan", ATAN: "atan", SQRT: "sqrt"}
NAME_TO_FUNC = {v: k for k, v in FUNC_NAMES.items()}

DEFAULT_NODE_CAP = 200_000

_MASK64 = (1 << 64) - 1


class ExpressionError(Exception):
    pass


class ParseError(ExpressionError):
    def __init__(self, message, position=None):
        self.position = position
        self.message = message
        if position is not None:
            message = f"{message} (at column {position + 1})"
        super().__init__(message)


class UndeclaredSymbol(ExpressionError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"undeclared symbol '{name}'")


class UndeclaredInText(UndeclaredSymbol, ParseError):
    def __init__(self, name, position):
        self.name = name
        ParseError.__init__(self, f"undeclared symbol '{name}'", position)


class ExpressionSwell(ExpressionError):
    """Raised when an expression exceeds the configured node cap."""


_table: dict = {}
_ids = itertools.count()
_var_bits: dict = {}


def _name_digest(kind, name):
    h = hashlib.blake2b(f"{kind}:{name}".encode(), digest_size=8).digest()
    return int.from_bytes(h, "little")


def var_bit(name):
    bit = _var_bits.get(name)
    if bit is None:
        bit = 1 << len(_var_bits)
        _var_bits[name] = bit
    return bit


class Expr:
    __slots__ = ("kind", "args", "data", "digest", "mask", "id", "__weakref__")

    def __repr__(self):
        text = to_str(self, limit=200)
        return f"Expr({text})"

    def __str__(self):
        return to_str(self)

    # arithmetic sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        return power(self, n)

    @property
    def is_const(self):
        return self.kind == CONST

    @property
    def is_zero(self):
        return self is ZERO

    @property
    def value(self):
        if self.kind != CONST:
            raise ExpressionError("not a constant")
        return self.data

    @property
    def name(self):
        if self.kind not in (VAR, PARAM):
            raise ExpressionError("not a symbol")
        return self.data


def _make(kind, args, data, digest, mask):
    key = (kind, args, data)
    node = _table.get(key)
    if node is not None:
        return node
    node = object.__new__(Expr)
    node.kind = kind
    node.args = args
    node.data = data
    node.digest = digest & _MASK64
    node.mask = mask
    node.id = next(_ids)
    _table[key] = node
    return node


def const(q) -> Expr:
    if isinstance(q, float):
        q = Fraction(q).limit_denominator(10**12)
    q = Fraction(q)
    return _make(CONST, (), q, hash((CONST, q)), 0)


ZERO = const(0)
ONE = const(1)


def var(name: str) -> Expr:
    return _make(VAR, (), name, _name_digest("v", name), var_bit(name))


def param(name: str) -> Expr:
    return _make(PARAM, (), name, _name_digest("p", name), 0)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction, float)):
        return const(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def _sort_key(node):
    return (node.digest, node.id)


# sums --------------------------------------------------------------------

def _scaled_parts(e):
    """Return (coefficient, core) with e == coefficient * core."""
    if e.kind == ADD and e.data[0] == 0 and len(e.args) == 1:
        return e.data[1][0], e.args[0]
    return Fraction(1), e


def _build_add(c0, acc):
    items = [(t, c) for t, c in acc.items() if c != 0]
    if not items:
        return const(c0)
    if c0 == 0 and len(items) == 1 and items[0][1] == 1:
        return items[0][0]
    items.sort(key=lambda tc: _sort_key(tc[0]))
    terms = tuple(t for t, _ in items)
    coefs = tuple(c for _, c in items)
    digest = hash((ADD, c0, coefs, tuple(t.digest for t in terms)))
    mask = 0
    for t in terms:
        mask |= t.mask
    return _make(ADD, terms, (c0, coefs), digest, mask)


def _accumulate(acc, e, coef, c0):
    k = e.kind
    if k == CONST:
        return c0 + coef * e.data
    if k == ADD:
        c0 = c0 + coef * e.data[0]
        for t, c in zip(e.args, e.data[1]):
            acc[t] = acc.get(t, 0) + coef * c
        return c0
    acc[e] = acc.get(e, 0) + coef
    return c0


def add(*xs) -> Expr:
    acc: dict = {}
    c0 = Fraction(0)
    for x in xs:
        c0 = _accumulate(acc, as_expr(x), 1, c0)
    return _build_add(c0, acc)


def linear_combination(pairs) -> Expr:
    """Sum of coefficient * expression for (coefficient, Expr) pairs."""
    acc: dict = {}
    c0 = Fraction(0)
    for coef, e in pairs:
        coef = Fraction(coef)
        if coef == 0:
            continue
        c0 = _accumulate(acc, as_expr(e), coef, c0)
    return _build_add(c0, acc)


def scale(e, c) -> Expr:
    c = Fraction(c)
    if c == 0:
        return ZERO
    if c == 1:
        return e
    acc: dict = {}
    c0 = _accumulate(acc, e, c, Fraction(0))
    return _build_add(c0, acc)


def neg(e) -> Expr:
    return scale(as_expr(e), -1)


def sub(a, b) -> Expr:
    return add(a, neg(as_expr(b)))


# products ----------------------------------------------------------------

def _monic(e):
    """Split a general sum into (k, s) with e == k*s and s's first coefficient 1."""
    k = e.data[1][0]
    if k == 1:
        return Fraction(1), e
    return k, scale(e, 1 / k)


def _build_mul(coef, exps):
    items = [(b, n) for b, n in exps.items() if n != 0]
    if not items:
        return const(coef)
    if len(items) == 1 and items[0][1] == 1:
        core = items[0][0]
    else:
        items.sort(key=lambda bn: _sort_key(bn[0]))
        bases = tuple(b for b, _ in items)
        pows = tuple(n for _, n in items)
        digest = hash((MUL, pows, tuple(b.digest for b in bases)))
        mask = 0
        for b in bases:
            mask |= b.mask
        core = _make(MUL, bases, pows, digest, mask)
    return scale(core, coef)


def _absorb(exps, e, n, coef):
    """Multiply the accumulator by e**n; returns the updated coefficient."""
    k = e.kind
    if k == CONST:
        q = e.data
        if q == 0:
            if n < 0:
                raise ZeroDivisionError("division by symbolic zero")
            return Fraction(0)
        return coef * q ** n
    if k == ADD:
        c, core = _scaled_parts(e)
        if core is not e:
            coef = coef * c ** n
            return _absorb(exps, core, n, coef)
        kk, s = _monic(e)
        coef = coef * kk ** n
        exps[s] = exps.get(s, 0) + n
        return coef
    if k == MUL:
        for b, m in zip(e.args, e.data):
            exps[b] = exps.get(b, 0) + m * n
        return coef
    exps[e] = exps.get(e, 0) + n
    return coef


def mul(*xs) -> Expr:
    exps: dict = {}
    coef = Fraction(1)
    for x in xs:
        coef = _absorb(exps, as_expr(x), 1, coef)
        if coef == 0:
            return ZERO
    return _build_mul(coef, exps)


def power(e, n: int) -> Expr:
    if int(n) != n:
        raise ExpressionError("only integer exponents are supported")
    n = int(n)
    e = as_expr(e)
    if n == 0:
        return ONE
    if n == 1:
        return e
    exps: dict = {}
    coef = _absorb(exps, e, n, Fraction(1))
    if coef == 0:
        return ZERO
    return _build_mul(coef, exps)


def div(a, b) -> Expr:
    return mul(a, power(as_expr(b), -1))


# elementary functions ------------------------------------------------------

def _leading_sign(e):
    if e.kind == CONST:
        return -1 if e.data < 0 else 1
    if e.kind == ADD:
        return -1 if e.data[1][0] < 0 else 1
    return 1


def _func(kind, a):
    return _make(kind, (a,), None, hash((kind, a.digest)), a.mask)


def sin(a) -> Expr:
    a = as_expr(a)
    if a is ZERO:
        return ZERO
    if _leading_sign(a) < 0:
        return neg(_func(SIN, neg(a)))
    return _func(SIN, a)


def cos(a) -> Expr:
    a = as_expr(a)
    if a is ZERO:
        return ONE
    if _leading_sign(a) < 0:
        a = neg(a)
    return _func(COS, a)


def tan(a) -> Expr:
    a = as_expr(a)
    if a is ZERO:
        return ZERO
    if _leading_sign(a) < 0:
        return neg(_func(TAN, neg(a)))
    return _func(TAN, a)


def atan(a) -> Expr:
    a = as_expr(a)
    if a is ZERO:
        return ZERO
    if _leading_sign(a) < 0:
        return neg(_func(ATAN, neg(a)))
    return _func(ATAN, a)


def _exact_sqrt(q):
    def isqrt_exact(k):
        r = int(k ** 0.5)
        for cand in (r - 1, r, r + 1):
            if cand >= 0 and cand * cand == k:
                return cand
        return None

    if q < 0:
        return None
    a, b = isqrt_exact(q.numerator), isqrt_exact(q.denominator)
    if a is None or b is None:
        return None
    return Fraction(a, b)


def sqrt(a) -> Expr:
    a = as_expr(a)
    if a.kind == CONST:
        r = _exact_sqrt(a.data)
        if r is not None:
            return const(r)
    return _func(SQRT, a)


FUNC_BUILDERS = {SIN: sin, COS: cos, TAN: tan, ATAN: atan, SQRT: sqrt}


# traversal helpers --------------------------------------------------------

def postorder(roots):
    """Yield the unique nodes reachable from roots, children first."""
    seen = set()
    out = []
    stack = [(r, False) for r in reversed(list(roots))]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            out.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack.append((node, True))
        for ch in node.args:
            if ch.id not in seen:
                stack.append((ch, False))
    return out


def node_count(*roots) -> int:
    return len(postorder(roots))


def check_cap(e, cap=DEFAULT_NODE_CAP):
    count = node_count(e)
    if count > cap:
        raise ExpressionSwell(f"expression has {count} nodes, cap is {cap}")
    return e


def symbols(e):
    """Names of state variables and parameters appearing in e."""
    vs, ps = set(), set()
    for node in postorder([e]):
        if node.kind == VAR:
            vs.add(node.data)
        elif node.kind == PARAM:
            ps.add(node.data)
    return vs, ps


def rebuild(e, leaf):
    """Reconstruct e bottom-up, mapping leaves through leaf(node)."""
    memo = {}
    for node in postorder([e]):
        k = node.kind
        if k in (CONST, VAR, PARAM):
            memo[node.id] = leaf(node)
        elif k == ADD:
            memo[node.id] = linear_combination(
                [(node.data[0], ONE)] + [(c, memo[t.id]) for t, c in zip(node.args, node.data[1])])
        elif k == MUL:
            memo[node.id] = mul(*[power(memo[b.id], n) for b, n in zip(node.args, node.data)])
        else:
            memo[node.id] = FUNC_BUILDERS[k](memo[node.args[0].id])
    return memo[e.id]


def substitute(e, mapping):
    """Replace symbols by expressions; mapping is name -> Expr."""
    if not mapping:
        return e
    return rebuild(e, lambda n: mapping.get(n.data, n) if n.kind in (VAR, PARAM) else n)


def simplify(e, cap=DEFAULT_NODE_CAP):
    """Normalize e through the smart constructors and enforce the node cap."""
    return check_cap(rebuild(e, lambda n: n), cap)


# differentiation ------------------------------------------------------------

_lie_caches: dict = {}


def clear_caches():
    _lie_caches.clear()


def _field_key(field):
    return tuple(sorted(((name, c.id) for name, c in field.items() if c is not ZERO)))


def directional(e, field) -> Expr:
    """Derivative of e along a field given as {state name: Expr component}."""
    field = {k: v for k, v in field.items() if v is not ZERO}
    support = 0
    for name in field:
        support |= var_bit(name)
    if not (e.mask & support):
        return ZERO
    key = _field_key(field)
    memo = _lie_caches.get(key)
    if memo is None:
        memo = _lie_caches[key] = {}
    hit = memo.get(e)
    if hit is not None:
        return hit
    stack = [e]
    while stack:
        node = stack[-1]
        if node in memo:
            stack.pop()
            continue
        if not (node.mask & support):
            memo[node] = ZERO
            stack.pop()
            continue
        pending = [ch for ch in node.args if ch not in memo and (ch.mask & support)]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        memo[node] = _derive_node(node, field, memo, support)
    return memo[e]


def _d(ch, memo, support):
    if not (ch.mask & support):
        return ZERO
    return memo[ch]


def _derive_node(node, field, memo, support):
    k = node.kind
    if k == VAR:
        return field.get(node.data, ZERO)
    if k == ADD:
        return linear_combination(
            [(c, _d(t, memo, support)) for t, c in zip(node.args, node.data[1])])
    if k == MUL:
        pairs = []
        bases, pows = node.args, node.data
        for i, (b, n) in enumerate(zip(bases, pows)):
            db = _d(b, memo, support)
            if db is ZERO:
                continue
            exps = dict(zip(bases, pows))
            exps[b] = n - 1
            rest = _build_mul(Fraction(1), exps)
            pairs.append((n, mul(rest, db)))
        return linear_combination(pairs)
    a = node.args[0]
    da = _d(a, memo, support)
    if k == SIN:
        return mul(cos(a), da)
    if k == COS:
        return neg(mul(sin(a), da))
    if k == TAN:
        return mul(add(ONE, power(node, 2)), da)
    if k == ATAN:
        return div(da, add(ONE, power(a, 2)))
    if k == SQRT:
        return div(da, scale(node, 2))
    raise ExpressionError(f"cannot differentiate node kind {k}")


def diff(e, name: str) -> Expr:
    return directional(e, {name: ONE})


# parsing ---------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+\.\d*|\.\d+|\d+)|([A-Za-z_][A-Za-z_0-9]*)|(\S))")


class Namespace:
    """Declared state variables and parameters."""

    def __init__(self, state=(), params=()):
        self.state = tuple(state)
        self.params = tuple(params)
        clash = set(self.state) & set(self.params)
        if clash:
            raise ExpressionError(f"symbols declared twice: {sorted(clash)}")

    def lookup(self, name):
        if name in self.state:
            return var(name)
        if name in self.params:
            return param(name)
        raise UndeclaredSymbol(name)

    def __contains__(self, name):
        return name in self.state or name in self.params


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            break
        if m.group(0).strip() == "":
            break
        start = m.start(m.lastindex)
        if m.group(1) is not None:
            tokens.append(("num", m.group(1), start))
        elif m.group(2) is not None:
            tokens.append(("name", m.group(2), start))
        else:
            tokens.append(("op", m.group(3), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, namespace):
        self.toks = _tokenize(text)
        self.i = 0
        self.ns = namespace

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        tok = self.take()
        if tok[1] != op:
            raise ParseError(f"expected '{op}' but found '{tok[1] or 'end of input'}'", tok[2])
        return tok

    def parse(self):
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected '{tok[1]}'", tok[2])
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()
            rhs = self.unary()
            if op[1] == "*":
                e = mul(e, rhs)
            else:
                if rhs is ZERO:
                    raise ParseError("division by zero", op[2])
                e = div(e, rhs)
        return e

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("-", "+"):
            self.take()
            e = self.unary()
            return neg(e) if tok[1] == "-" else e
        return self.pow()

    def pow(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            n = self.exponent()
            if base is ZERO and n < 0:
                raise ParseError("division by zero", self.peek()[2])
            return power(base, n)
        return base

    def exponent(self):
        tok = self.take()
        sign = 1
        if tok[0] == "op" and tok[1] == "(":
            n = self.exponent()
            self.expect(")")
            return n
        while tok[0] == "op" and tok[1] in ("-", "+"):
            if tok[1] == "-":
                sign = -sign
            tok = self.take()
        if tok[0] != "num" or not tok[1].isdigit():
            raise ParseError("exponent must be an integer", tok[2])
        return sign * int(tok[1])

    def atom(self):
        tok = self.take()
        kind, text, pos = tok
        if kind == "num":
            return const(Fraction(text))
        if kind == "name":
            if text in NAME_TO_FUNC and self.peek()[1] == "(":
                self.take()
                arg = self.expr()
                self.expect(")")
                return FUNC_BUILDERS[NAME_TO_FUNC[text]](arg)
            try:
                return self.ns.lookup(text)
            except UndeclaredSymbol as exc:
                raise UndeclaredInText(exc.name, pos) from exc
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ParseError(f"unexpected '{text or 'end of input'}'", pos)


def parse_expr(text: str, namespace: Namespace) -> Expr:
    """Parse an infix expression; symbols must be declared in namespace."""
    return _Parser(text, namespace).parse()


# printing ----------------------------------------------------------------------

def _fmt_q(q):
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def to_str(e, limit=None) -> str:
    memo = {}
    for node in postorder([e]):
        memo[node.id] = _str_node(node, memo)
        if limit is not None and len(memo[node.id]) > limit:
            return memo[node.id][:limit] + "..."
    return memo[e.id][0]


def _str_node(node, memo):
    """Return (text, precedence): 3 atom, 2 product, 1 sum."""
    k = node.kind
    if k == CONST:
        q = node.data
        text = _fmt_q(q)
        if q < 0:
            return (f"({text})", 3)
        return (text, 3 if q.denominator == 1 else 2)
    if k in (VAR, PARAM):
        return (node.data, 3)
    if k == ADD:
        parts = []
        for t, c in zip(node.args, node.data[1]):
            body = memo[t.id][0]
            mag = abs(c)
            piece = body if mag == 1 else f"{_fmt_q(mag)}*{body}"
            parts.append(("-" if c < 0 else "+", piece))
        c0 = node.data[0]
        if c0 != 0:
            parts.append(("-" if c0 < 0 else "+", _fmt_q(abs(c0))))
        sign, first = parts[0]
        text = ("-" if sign == "-" else "") + first
        for sign, piece in parts[1:]:
            text += f" {sign} {piece}"
        return (text, 1)
    if k == MUL:
        num, den = [], []
        for b, n in zip(node.args, node.data):
            btxt, bprec = memo[b.id]
            if bprec < 3:
                btxt = f"({btxt})"
            m = abs(n)
            piece = btxt if m == 1 else f"{btxt}^{m}"
            (num if n > 0 else den).append(piece)
        text = "*".join(num) if num else "1"
        if den:
            dtxt = den[0] if len(den) == 1 and "^" not in den[0] else "(" + "*".join(den) + ")"
            text = f"{text}/{dtxt}"
        return (text, 2)
    return (f"{FUNC_NAMES[k]}({memo[node.args[0].id][0]})", 3)
