"""Closed-form scalar expressions over chart coordinates.

Trees are immutable and may share subtrees (determinant expansions produce
DAGs), so evaluation, differentiation and substitution all memoise on node
identity. The smart constructors fold constants and drop additive zeros and
multiplicative ones; no other simplification is attempted.

Text form is prefix notation::

    (+ 1 (* 2 x (sin y)))
    (where (- 0.25 (abs t)) (log (abs t)) t)

``(where c a b)`` selects ``a`` where ``c > 0`` and ``b`` elsewhere. It is the
only piecewise primitive and is needed for compactly supported profiles.
"""
from __future__ import annotations

import math
import numbers
import re
from typing import Mapping

import numpy as np

from .errors import ParseError

__all__ = [
    "Expr", "Const", "Var", "Add", "Mul", "Div", "Pow", "Func", "Where",
    "const", "var", "as_expr", "add", "mul", "div", "power", "neg",
    "sin", "cos", "exp", "log", "absolute", "where", "sqrt",
    "ZERO", "ONE", "parse", "dumps", "evaluate", "evaluate_many", "is_zero", "is_const",
    "smooth_step", "to_sympy", "symbolically_equal",
]


class Expr:
    __slots__ = ("_dcache", "_free", "__weakref__")

    def __init__(self):
        self._dcache = {}
        self._free = None

    # -- structure -------------------------------------------------------
    @property
    def children(self) -> tuple:
        return ()

    def free_vars(self) -> frozenset:
        if self._free is None:
            out = frozenset()
            for c in self.children:
                out = out | c.free_vars()
            self._free = out
        return self._free

    # -- calculus --------------------------------------------------------
    def diff(self, name: str) -> "Expr":
        if name not in self.free_vars():
            return ZERO
        d = self._dcache.get(name)
        if d is None:
            d = self._diff(name)
            self._dcache[name] = d
        return d

    def _diff(self, name):
        raise NotImplementedError

    def subs(self, mapping: Mapping[str, "Expr"]) -> "Expr":
        mapping = {k: as_expr(v) for k, v in mapping.items()}
        return _subs(self, mapping, {})

    def __call__(self, env):
        return evaluate(self, env)

    # -- operators -------------------------------------------------------
    def __add__(self, other):
        return _binop(add, self, other)

    def __radd__(self, other):
        return _binop(add, other, self)

    def __sub__(self, other):
        return _binop(lambda a, b: add(a, neg(b)), self, other)

    def __rsub__(self, other):
        return _binop(lambda a, b: add(a, neg(b)), other, self)

    def __mul__(self, other):
        return _binop(mul, self, other)

    def __rmul__(self, other):
        return _binop(mul, other, self)

    def __truediv__(self, other):
        return _binop(div, self, other)

    def __rtruediv__(self, other):
        return _binop(div, other, self)

    def __pow__(self, other):
        return _binop(power, self, other)

    def __rpow__(self, other):
        return _binop(power, other, self)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Expr({dumps(self)})"

    __str__ = lambda self: dumps(self)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        super().__init__()
        self.value = float(value)
        self._free = frozenset()

    def _diff(self, name):
        return ZERO


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        super().__init__()
        self.name = name
        self._free = frozenset((name,))

    def _diff(self, name):
        return ONE if name == self.name else ZERO


class Add(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms):
        super().__init__()
        self.terms = tuple(terms)

    @property
    def children(self):
        return self.terms

    def _diff(self, name):
        return add(*(t.diff(name) for t in self.terms))


class Mul(Expr):
    __slots__ = ("factors",)

    def __init__(self, factors):
        super().__init__()
        self.factors = tuple(factors)

    @property
    def children(self):
        return self.factors

    def _diff(self, name):
        fs = self.factors
        terms = []
        for i, f in enumerate(fs):
            df = f.diff(name)
            if is_zero(df):
                continue
            terms.append(mul(*fs[:i], df, *fs[i + 1:]))
        return add(*terms)


class Div(Expr):
    __slots__ = ("num", "den")

    def __init__(self, num, den):
        super().__init__()
        self.num, self.den = num, den

    @property
    def children(self):
        return (self.num, self.den)

    def _diff(self, name):
        a, b = self.num, self.den
        da, db = a.diff(name), b.diff(name)
        return add(div(da, b), neg(div(mul(a, db), power(b, 2))))


class Pow(Expr):
    __slots__ = ("base", "exponent")

    def __init__(self, base, exponent):
        super().__init__()
        self.base, self.exponent = base, exponent

    @property
    def children(self):
        return (self.base, self.exponent)

    def _diff(self, name):
        b, e = self.base, self.exponent
        if isinstance(e, Const):
            return mul(e, power(b, e.value - 1.0), b.diff(name))
        return mul(self, add(mul(e.diff(name), log(b)), div(mul(e, b.diff(name)), b)))


class Func(Expr):
    __slots__ = ("fname", "arg")

    def __init__(self, fname, arg):
        super().__init__()
        self.fname, self.arg = fname, arg

    @property
    def children(self):
        return (self.arg,)

    def _diff(self, name):
        a = self.arg
        da = a.diff(name)
        f = self.fname
        if f == "sin":
            outer = cos(a)
        elif f == "cos":
            outer = neg(sin(a))
        elif f == "exp":
            outer = self
        elif f == "log":
            outer = div(ONE, a)
        elif f == "abs":
            outer = div(a, self)
        else:  # pragma: no cover
            raise ValueError(f)
        return mul(outer, da)


class Where(Expr):
    __slots__ = ("cond", "then", "other")

    def __init__(self, cond, then, other):
        super().__init__()
        self.cond, self.then, self.other = cond, then, other

    @property
    def children(self):
        return (self.cond, self.then, self.other)

    def _diff(self, name):
        return where(self.cond, self.then.diff(name), self.other.diff(name))


ZERO = Const(0.0)
ONE = Const(1.0)


# -- constructors -----------------------------------------------------------

def _binop(op, a, b):
    ok = (Expr, numbers.Real)
    if not (isinstance(a, ok) and isinstance(b, ok)):
        return NotImplemented
    return op(a, b)


def const(value) -> Const:
    value = float(value)
    if value == 0.0:
        return ZERO
    if value == 1.0:
        return ONE
    return Const(value)


def var(name: str) -> Var:
    return Var(name)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, numbers.Real):
        return const(x)
    if isinstance(x, str):
        return parse(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def is_zero(e) -> bool:
    return isinstance(e, Const) and e.value == 0.0


def is_const(e) -> bool:
    return isinstance(e, Const)


def add(*terms) -> Expr:
    flat = []
    c = 0.0
    for t in terms:
        t = as_expr(t)
        if isinstance(t, Const):
            c += t.value
        elif isinstance(t, Add):
            for s in t.terms:
                if isinstance(s, Const):
                    c += s.value
                else:
                    flat.append(s)
        else:
            flat.append(t)
    if c != 0.0:
        flat.insert(0, const(c))
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    return Add(flat)


def mul(*factors) -> Expr:
    flat = []
    c = 1.0
    for f in factors:
        f = as_expr(f)
        if isinstance(f, Const):
            c *= f.value
        elif isinstance(f, Mul):
            for s in f.factors:
                if isinstance(s, Const):
                    c *= s.value
                else:
                    flat.append(s)
        else:
            flat.append(f)
        if c == 0.0:
            return ZERO
    if not flat:
        return const(c)
    if c != 1.0:
        flat.insert(0, const(c))
    if len(flat) == 1:
        return flat[0]
    return Mul(flat)


def neg(a) -> Expr:
    return mul(-1.0, a)


def div(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    if is_zero(a):
        return ZERO
    if isinstance(b, Const):
        if b.value == 1.0:
            return a
        if isinstance(a, Const) and b.value != 0.0:
            return const(a.value / b.value)
    return Div(a, b)


def power(b, e) -> Expr:
    b, e = as_expr(b), as_expr(e)
    if isinstance(e, Const):
        if e.value == 0.0:
            return ONE
        if e.value == 1.0:
            return b
        if isinstance(b, Const):
            try:
                return const(b.value ** e.value)
            except (OverflowError, ZeroDivisionError):
                pass
    if isinstance(b, Const) and b.value == 1.0:
        return ONE
    return Pow(b, e)


def _func(fname, fold):
    def build(a) -> Expr:
        a = as_expr(a)
        if isinstance(a, Const):
            try:
                return const(fold(a.value))
            except (ValueError, OverflowError):
                pass
        return Func(fname, a)
    build.__name__ = fname
    return build


sin = _func("sin", math.sin)
cos = _func("cos", math.cos)
exp = _func("exp", math.exp)
log = _func("log", math.log)
absolute = _func("abs", abs)


def sqrt(a) -> Expr:
    return power(a, 0.5)


def where(cond, then, other) -> Expr:
    cond, then, other = as_expr(cond), as_expr(then), as_expr(other)
    if isinstance(cond, Const):
        return then if cond.value > 0 else other
    if then is other:
        return then
    return Where(cond, then, other)


def smooth_step(x) -> Expr:
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = as_expr(x)

    def flat(y):
        return where(y, exp(div(-1.0, y)), 0.0)

    a, b = flat(x), flat(add(1.0, neg(x)))
    return div(a, add(a, b))


# -- evaluation -------------------------------------------------------------

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log, "abs": np.abs}


def evaluate(e: Expr, env: Mapping[str, object]):
    """Evaluate ``e`` with coordinates bound by ``env`` (arrays broadcast)."""
    env = {k: np.asarray(v, dtype=float) for k, v in env.items()}
    with np.errstate(all="ignore"):
        return _eval(e, env, {})


def evaluate_many(exprs, env: Mapping[str, object]) -> list:
    """Evaluate several expressions sharing one memo (shared subtrees run once)."""
    env = {k: np.asarray(v, dtype=float) for k, v in env.items()}
    memo = {}
    with np.errstate(all="ignore"):
        return [_eval(e, env, memo) for e in exprs]


def _eval(e, env, memo):
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit
    if isinstance(e, Const):
        out = np.float64(e.value)
    elif isinstance(e, Var):
        try:
            out = env[e.name]
        except KeyError:
            raise KeyError(f"unbound coordinate {e.name!r}") from None
    elif isinstance(e, Add):
        out = _eval(e.terms[0], env, memo)
        for t in e.terms[1:]:
            out = out + _eval(t, env, memo)
    elif isinstance(e, Mul):
        out = _eval(e.factors[0], env, memo)
        for f in e.factors[1:]:
            out = out * _eval(f, env, memo)
    elif isinstance(e, Div):
        out = _eval(e.num, env, memo) / _eval(e.den, env, memo)
    elif isinstance(e, Pow):
        b = _eval(e.base, env, memo)
        if isinstance(e.exponent, Const) and float(e.exponent.value).is_integer():
            out = np.float_power(b, int(e.exponent.value))
        else:
            out = np.power(b, _eval(e.exponent, env, memo))
    elif isinstance(e, Func):
        out = _FUNCS[e.fname](_eval(e.arg, env, memo))
    elif isinstance(e, Where):
        c = _eval(e.cond, env, memo)
        out = np.where(np.asarray(c) > 0, _eval(e.then, env, memo), _eval(e.other, env, memo))
        if out.ndim == 0:
            out = np.float64(out)
    else:  # pragma: no cover
        raise TypeError(type(e))
    memo[key] = out
    return out


def _subs(e, mapping, memo):
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit
    if not (e.free_vars() & mapping.keys()):
        out = e
    elif isinstance(e, Var):
        out = mapping[e.name]
    elif isinstance(e, Add):
        out = add(*(_subs(t, mapping, memo) for t in e.terms))
    elif isinstance(e, Mul):
        out = mul(*(_subs(f, mapping, memo) for f in e.factors))
    elif isinstance(e, Div):
        out = div(_subs(e.num, mapping, memo), _subs(e.den, mapping, memo))
    elif isinstance(e, Pow):
        out = power(_subs(e.base, mapping, memo), _subs(e.exponent, mapping, memo))
    elif isinstance(e, Func):
        out = _BUILDERS[e.fname](_subs(e.arg, mapping, memo))
    elif isinstance(e, Where):
        out = where(*(_subs(c, mapping, memo) for c in e.children))
    else:  # pragma: no cover
        raise TypeError(type(e))
    memo[key] = out
    return out


_BUILDERS = {"sin": sin, "cos": cos, "exp": exp, "log": log, "abs": absolute}


# -- text form --------------------------------------------------------------

def _fmt_number(v: float) -> str:
    if v == math.pi:
        return "pi"
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def dumps(e: Expr) -> str:
    memo = {}

    def go(n):
        k = id(n)
        if k in memo:
            return memo[k]
        if isinstance(n, Const):
            s = _fmt_number(n.value)
        elif isinstance(n, Var):
            s = n.name
        elif isinstance(n, Add):
            s = "(+ " + " ".join(go(t) for t in n.terms) + ")"
        elif isinstance(n, Mul):
            s = "(* " + " ".join(go(f) for f in n.factors) + ")"
        elif isinstance(n, Div):
            s = f"(/ {go(n.num)} {go(n.den)})"
        elif isinstance(n, Pow):
            s = f"(pow {go(n.base)} {go(n.exponent)})"
        elif isinstance(n, Func):
            s = f"({n.fname} {go(n.arg)})"
        elif isinstance(n, Where):
            s = f"(where {go(n.cond)} {go(n.then)} {go(n.other)})"
        else:  # pragma: no cover
            raise TypeError(type(n))
        memo[k] = s
        return s

    return go(e)


_TOKEN = re.compile(r"\s*(\(|\)|[^\s()]+)")
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")


def parse(text: str) -> Expr:
    """Parse the prefix notation produced by :func:`dumps`."""
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"cannot tokenize expression at {text[pos:]!r}")
        tokens.append(m.group(1))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    if not tokens:
        raise ParseError("empty expression")
    expr, used = _parse_at(tokens, 0)
    if used != len(tokens):
        raise ParseError(f"trailing tokens in {text!r}")
    return expr


def _parse_at(tokens, i):
    tok = tokens[i]
    if tok == ")":
        raise ParseError("unexpected ')'")
    if tok != "(":
        return _atom(tok), i + 1
    if i + 1 >= len(tokens):
        raise ParseError("unterminated '('")
    op = tokens[i + 1]
    args = []
    j = i + 2
    while True:
        if j >= len(tokens):
            raise ParseError("unterminated '('")
        if tokens[j] == ")":
            break
        a, j = _parse_at(tokens, j)
        args.append(a)
    return _apply(op, args), j + 1


def _atom(tok):
    if tok == "pi":
        return const(math.pi)
    try:
        return const(float(tok))
    except ValueError:
        pass
    if _NAME.match(tok):
        return var(tok)
    raise ParseError(f"bad token {tok!r}")


_ARITY = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "abs": 1, "sqrt": 1, "neg": 1,
          "/": 2, "pow": 2, "^": 2, "where": 3}


def _apply(op, args):
    want = _ARITY.get(op)
    if want is not None and len(args) != want:
        raise ParseError(f"{op!r} takes {want} argument(s), got {len(args)}")
    if op == "+":
        return add(*args)
    if op == "*":
        return mul(*args)
    if op == "-":
        if len(args) == 1:
            return neg(args[0])
        if len(args) == 2:
            return add(args[0], neg(args[1]))
        raise ParseError("'-' takes 1 or 2 arguments")
    if op == "/":
        return div(*args)
    if op in ("pow", "^"):
        return power(*args)
    if op == "sqrt":
        return sqrt(args[0])
    if op == "neg":
        return neg(args[0])
    if op == "where":
        return where(*args)
    if op in _BUILDERS:
        return _BUILDERS[op](args[0])
    raise ParseError(f"unknown operator {op!r}")


# -- sympy bridge (verification only) ---------------------------------------

def to_sympy(e: Expr, symbols=None):
    import sympy

    symbols = {} if symbols is None else symbols
    memo = {}

    def num(v):
        if v == math.pi:
            return sympy.pi
        r = sympy.Rational(v).limit_denominator(10**9)
        return r if abs(float(r) - v) <= 1e-13 * max(1.0, abs(v)) else sympy.Rational(v)

    def go(n):
        k = id(n)
        if k in memo:
            return memo[k]
        if isinstance(n, Const):
            s = num(n.value)
        elif isinstance(n, Var):
            s = symbols.setdefault(n.name, sympy.Symbol(n.name, real=True))
        elif isinstance(n, Add):
            s = sympy.Add(*(go(t) for t in n.terms))
        elif isinstance(n, Mul):
            s = sympy.Mul(*(go(f) for f in n.factors))
        elif isinstance(n, Div):
            s = go(n.num) / go(n.den)
        elif isinstance(n, Pow):
            s = go(n.base) ** go(n.exponent)
        elif isinstance(n, Func):
            fn = {"sin": sympy.sin, "cos": sympy.cos, "exp": sympy.exp,
                  "log": sympy.log, "abs": sympy.Abs}[n.fname]
            s = fn(go(n.arg))
        elif isinstance(n, Where):
            s = sympy.Piecewise((go(n.then), go(n.cond) > 0), (go(n.other), True))
        else:  # pragma: no cover
            raise TypeError(type(n))
        memo[k] = s
        return s

    return go(e)


def symbolically_equal(a, b) -> bool:
    """Exact equality decided by sympy simplification of ``a - b``."""
    import sympy

    diff = sympy.simplify(sympy.expand(to_sympy(as_expr(a)) - to_sympy(as_expr(b))))
    return diff == 0
