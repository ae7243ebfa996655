"""Closed-form 1D potentials: parsing, printing, evaluation and symbolic derivatives.

Grammar (``^`` is right associative, a leading sign binds looser than ``^``)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | factor
    factor := base ('^' unary)?
    base   := number | symbol | '(' expr ')' | func '(' expr ')'

``x`` is the independent variable; every other symbol must be bound to a
number when the expression is turned into a :class:`Potential1D`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.special
from scipy import optimize

from .errors import DomainError, ParseError

FUNCTIONS = ("sin", "cos", "exp", "sqrt", "erf", "abs", "log")
VARIABLE = "x"

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------

class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Sym(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node


def symbols(node: Node) -> frozenset:
    """All symbol names in the tree, including ``x``."""
    if isinstance(node, Sym):
        return frozenset((node.name,))
    if isinstance(node, Num):
        return frozenset()
    if isinstance(node, (Neg, Call)):
        return symbols(node.arg)
    return symbols(node.left) | symbols(node.right)


def free_symbols(node: Node) -> frozenset:
    """Parameter symbols (everything except the variable ``x``)."""
    return symbols(node) - {VARIABLE}


def depends_on_x(node: Node) -> bool:
    return VARIABLE in symbols(node)


def walk(node: Node):
    yield node
    if isinstance(node, (Neg, Call)):
        yield from walk(node.arg)
    elif isinstance(node, BinOp):
        yield from walk(node.left)
        yield from walk(node.right)


# --------------------------------------------------------------------------
# Tokenizer and parser
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<sym>[A-Za-z][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, value, pos = self.take()
        if value != text:
            found = "end of input" if kind == "end" else repr(value)
            raise ParseError(f"expected {text!r}, found {found}", pos)

    def parse(self) -> Node:
        node = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {value!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        kind, value, _ = self.peek()
        if kind == "op" and value in ("+", "-"):
            self.take()
            arg = self.unary()
            if value == "+":
                return arg
            return mk_neg(arg) if isinstance(arg, Num) else Neg(arg)
        return self.factor()

    def factor(self):
        base = self.base()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def base(self):
        kind, value, pos = self.take()
        if kind == "num":
            return Num(float(value))
        if kind == "sym":
            if value in FUNCTIONS:
                if self.peek()[1] != "(":
                    raise ParseError(f"function {value!r} needs a parenthesised argument", pos)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(value, arg)
            return Sym(value)
        if value == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(value)
        raise ParseError(f"unexpected {found}", pos)


def parse_expr(source: str) -> Node:
    """Parse text into an AST without binding parameters."""
    return _Parser(source).parse()


def to_source(node: Node) -> str:
    """Print a tree so that :func:`parse_expr` rebuilds exactly the same tree."""
    if isinstance(node, Num):
        text = repr(float(node.value))
        if text in ("inf", "-inf", "nan"):
            raise ValueError(f"cannot print non-finite constant {text}")
        return f"({text})" if node.value < 0 or text.startswith("-") else text
    if isinstance(node, Sym):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.arg)})"
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    return f"({to_source(node.left)}{node.op}{to_source(node.right)})"


# --------------------------------------------------------------------------
# Constant-folding constructors and differentiation
# --------------------------------------------------------------------------

def _is(node, value):
    return isinstance(node, Num) and node.value == value


def mk_neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def mk_add(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return BinOp("+", a, b)


def mk_sub(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return mk_neg(b)
    return BinOp("-", a, b)


def mk_mul(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return Num(0.0)
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return mk_neg(b)
    if _is(b, -1.0):
        return mk_neg(a)
    return BinOp("*", a, b)


def mk_div(a, b):
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return Num(a.value / b.value)
    if _is(a, 0.0):
        return Num(0.0)
    if _is(b, 1.0):
        return a
    return BinOp("/", a, b)


def mk_pow(a, b):
    if _is(b, 1.0):
        return a
    if _is(b, 0.0):
        return Num(1.0)
    return BinOp("^", a, b)


def differentiate(node: Node, var: str = VARIABLE) -> Node:
    """Symbolic d/dvar with constant folding only."""
    d = lambda n: differentiate(n, var)  # noqa: E731
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Sym):
        return Num(1.0 if node.name == var else 0.0)
    if isinstance(node, Neg):
        return mk_neg(d(node.arg))
    if isinstance(node, Call):
        u = node.arg
        du = d(u)
        if _is(du, 0.0):
            return Num(0.0)
        f = node.func
        if f == "sin":
            outer = Call("cos", u)
        elif f == "cos":
            outer = mk_neg(Call("sin", u))
        elif f == "exp":
            outer = node
        elif f == "sqrt":
            return mk_div(du, mk_mul(Num(2.0), node))
        elif f == "log":
            return mk_div(du, u)
        elif f == "abs":
            outer = mk_div(u, node)
        elif f == "erf":
            outer = mk_mul(Num(_TWO_OVER_SQRT_PI), Call("exp", mk_neg(mk_pow(u, Num(2.0)))))
        else:  # pragma: no cover - grammar forbids other names
            raise ParseError(f"unknown function {f!r}")
        return mk_mul(outer, du)

    u, v = node.left, node.right
    if node.op in "+-":
        du, dv = d(u), d(v)
        return mk_add(du, dv) if node.op == "+" else mk_sub(du, dv)
    if node.op == "*":
        return mk_add(mk_mul(d(u), v), mk_mul(u, d(v)))
    if node.op == "/":
        du, dv = d(u), d(v)
        if _is(dv, 0.0):
            return mk_div(du, v)
        return mk_div(mk_sub(mk_mul(du, v), mk_mul(u, dv)), mk_pow(v, Num(2.0)))
    # power
    du, dv = d(u), d(v)
    if _is(dv, 0.0):
        reduced = Num(v.value - 1.0) if isinstance(v, Num) else mk_sub(v, Num(1.0))
        return mk_mul(mk_mul(v, mk_pow(u, reduced)), du)
    if _is(du, 0.0):
        return mk_mul(mk_mul(node, Call("log", u)), dv)
    return mk_mul(node, mk_add(mk_mul(dv, Call("log", u)), mk_div(mk_mul(v, du), u)))


# --------------------------------------------------------------------------
# Compilation to Python callables
# --------------------------------------------------------------------------

def _emit(node: Node, params: Mapping[str, float]) -> str:
    if isinstance(node, Num):
        return f"({float(node.value)!r})"
    if isinstance(node, Sym):
        if node.name == VARIABLE:
            return "x"
        return f"({float(params[node.name])!r})"
    if isinstance(node, Neg):
        return f"(-{_emit(node.arg, params)})"
    if isinstance(node, Call):
        return f"_{node.func}({_emit(node.arg, params)})"
    left, right = _emit(node.left, params), _emit(node.right, params)
    if node.op == "^":
        return f"_pow({left}, {right})"
    return f"({left} {node.op} {right})"


_VECTOR_NS = {
    "_sin": np.sin, "_cos": np.cos, "_exp": np.exp, "_sqrt": np.sqrt,
    "_erf": scipy.special.erf, "_abs": np.abs, "_log": np.log, "_pow": np.power,
}
_SCALAR_NS = {
    "_sin": math.sin, "_cos": math.cos, "_exp": math.exp, "_sqrt": math.sqrt,
    "_erf": math.erf, "_abs": abs, "_log": math.log, "_pow": math.pow,
}


def _broadcast(value, x):
    # constant sub-trees evaluate to scalars even for array input
    if np.ndim(value) < x.ndim:
        return np.full(x.shape, float(value))
    return value


def compile_expr(node: Node, params: Mapping[str, float], scalar: bool = False) -> Callable:
    """Return ``f(x)``; vectorised over numpy arrays unless ``scalar``."""
    missing = free_symbols(node) - set(params)
    if missing:
        raise ParseError(f"unbound symbol(s): {', '.join(sorted(missing))}")
    body = _emit(node, params)
    ns = dict(_SCALAR_NS if scalar else _VECTOR_NS)
    if scalar:
        src = f"def _f(x):\n    return float({body})\n"
    else:
        src = (
            "def _f(x):\n"
            "    x = _asarray(x, dtype=float)\n"
            f"    return _broadcast({body}, x)\n"
        )
        ns["_asarray"] = np.asarray
        ns["_broadcast"] = _broadcast
    exec(src, ns)  # noqa: S102 - source is generated from a validated AST
    return ns["_f"]


# --------------------------------------------------------------------------
# Pole detection
# --------------------------------------------------------------------------

def _zero_factors(node: Node) -> list[Node]:
    """Sub-expressions whose zeros are zeros of ``node``."""
    if not depends_on_x(node):
        return []
    if isinstance(node, BinOp) and node.op == "*":
        return _zero_factors(node.left) + _zero_factors(node.right)
    if isinstance(node, BinOp) and node.op == "/":
        return _zero_factors(node.left)
    if isinstance(node, BinOp) and node.op == "^" and isinstance(node.right, Num) and node.right.value > 0:
        return _zero_factors(node.left)
    if isinstance(node, Neg):
        return _zero_factors(node.arg)
    return [node]


def _pole_candidates(ast: Node) -> list[Node]:
    out = []
    for n in walk(ast):
        if isinstance(n, BinOp) and n.op == "/":
            out.extend(_zero_factors(n.right))
        elif isinstance(n, BinOp) and n.op == "^" and isinstance(n.right, Num) and n.right.value < 0:
            out.extend(_zero_factors(n.left))
        elif isinstance(n, Call) and n.func == "log":
            out.extend(_zero_factors(n.arg))
    unique = []
    for c in out:
        if c not in unique:
            unique.append(c)
    return unique


def _roots_of(f: Callable, lo: float, hi: float, samples: int) -> list[float]:
    xs = np.linspace(lo, hi, samples)
    with np.errstate(all="ignore"):
        ys = f(xs)
    roots = list(xs[ys == 0.0])
    finite = np.isfinite(ys)
    sign_change = finite[:-1] & finite[1:] & (np.sign(ys[:-1]) * np.sign(ys[1:]) < 0)
    for i in np.flatnonzero(sign_change):
        roots.append(optimize.brentq(lambda t: float(f(t)), xs[i], xs[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps))
    # double roots: no sign change, |f| touches zero
    mag = np.where(finite, np.abs(ys), np.inf)
    scale = float(np.median(mag[np.isfinite(mag)])) if np.any(np.isfinite(mag)) else 1.0
    interior = (mag[1:-1] <= mag[:-2]) & (mag[1:-1] <= mag[2:]) & (mag[1:-1] > 0)
    # minima next to a sign change or an exact zero are simple roots found above
    simple = sign_change | (ys[:-1] == 0.0) | (ys[1:] == 0.0)
    interior &= ~(simple[:-1] | simple[1:])
    for i in np.flatnonzero(interior) + 1:
        res = optimize.minimize_scalar(
            lambda t: abs(float(f(t))), bounds=(xs[i - 1], xs[i + 1]), method="bounded",
            options={"xatol": 1e-13},
        )
        if abs(float(f(res.x))) <= 1e-10 * max(scale, 1.0):
            roots.append(float(res.x))
    return roots


def _blows_up(raw: Callable, r: float) -> bool:
    s = max(1.0, abs(r))

    def peak(delta):
        with np.errstate(all="ignore"):
            vals = np.abs(raw(np.array([r - delta * s, r + delta * s])))
        vals = vals[~np.isnan(vals)]
        return float(vals.max()) if vals.size else float("nan")

    far, near = peak(1e-3), peak(1e-6)
    if math.isnan(near):
        return False
    return math.isinf(near) or (not math.isnan(far) and near > 1.5 * far)


def locate_poles(ast: Node, params: Mapping[str, float], window: tuple[float, float],
                 samples: int = 20001) -> list[float]:
    lo, hi = map(float, window)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
        raise DomainError("find_singularities needs a finite, non-empty window")
    raw = compile_expr(ast, params)
    found: list[float] = []
    for cand in _pole_candidates(ast):
        f = compile_expr(cand, params)
        for r in _roots_of(f, lo, hi, samples):
            if not (lo <= r <= hi):
                continue
            if any(abs(r - q) <= 1e-9 * max(1.0, abs(q)) for q in found):
                continue
            if _blows_up(raw, r):
                found.append(float(r))
    return sorted(found)


# --------------------------------------------------------------------------
# Potential1D
# --------------------------------------------------------------------------

_DEFAULT_WINDOW = 1.0e3


def _check_denominators(ast: Node, params: Mapping[str, float]) -> None:
    probe = np.linspace(-9.37, 11.13, 64)
    for n in walk(ast):
        if isinstance(n, BinOp) and n.op == "/":
            den = compile_expr(n.right, params)
            with np.errstate(all="ignore"):
                vals = den(probe)
            if np.all(vals == 0.0):
                raise ParseError(f"denominator {to_source(n.right)} is identically zero")


@dataclass(frozen=True, eq=False)
class Potential1D:
    """A bound potential V(x) with its analytic derivative (mass fixed to 1).

    ``singularities`` holds every detected pole in the search window; the ones
    strictly inside ``domain`` are the interior poles.
    """

    source: str
    ast: Node
    d_ast: Node
    params: Mapping[str, float]
    domain: tuple[float, float] = (-math.inf, math.inf)
    singularities: tuple[float, ...] = ()
    hbar: float = 1.0
    _f: Callable = field(default=None, repr=False)
    _df: Callable = field(default=None, repr=False)
    _fs: Callable = field(default=None, repr=False)
    _dfs: Callable = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "_f", compile_expr(self.ast, self.params))
        object.__setattr__(self, "_df", compile_expr(self.d_ast, self.params))
        object.__setattr__(self, "_fs", compile_expr(self.ast, self.params, scalar=True))
        object.__setattr__(self, "_dfs", compile_expr(self.d_ast, self.params, scalar=True))

    @property
    def interior_poles(self) -> tuple[float, ...]:
        lo, hi = self.domain
        return tuple(s for s in self.singularities if lo < s < hi)

    def _check(self, x):
        arr = np.asarray(x, dtype=float)
        lo, hi = self.domain
        if np.any(~(arr > lo)) or np.any(~(arr < hi)):
            raise DomainError(f"x outside the domain ({lo}, {hi})")
        for s in self.singularities:
            if np.any(np.abs(arr - s) <= 1e-14 * max(1.0, abs(s))):
                raise DomainError(f"x coincides with the pole at {s}")

    def eval(self, x):
        self._check(x)
        with np.errstate(all="ignore"):
            out = self._f(x)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, x):
        self._check(x)
        with np.errstate(all="ignore"):
            out = self._df(x)
        return float(out) if np.ndim(out) == 0 else out

    # Unchecked fast paths used by inner loops that already guard the domain.
    def __call__(self, x):
        with np.errstate(all="ignore"):
            return self._f(x)

    def d(self, x):
        with np.errstate(all="ignore"):
            return self._df(x)

    @property
    def scalar(self) -> Callable[[float], float]:
        return self._fs

    @property
    def scalar_derivative(self) -> Callable[[float], float]:
        return self._dfs

    def with_domain(self, domain) -> "Potential1D":
        return make_potential(self.ast, self.params, domain=domain, hbar=self.hbar, source=self.source)

    def __repr__(self):
        params = ", ".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))
        return f"Potential1D({self.source!r}, {{{params}}}, domain={self.domain})"


def make_potential(ast: Node, params: Mapping[str, float], domain=None, hbar: float = 1.0,
                   source: str | None = None) -> Potential1D:
    params = {k: float(v) for k, v in params.items()}
    missing = free_symbols(ast) - set(params)
    if missing:
        raise ParseError(f"unbound symbol(s): {', '.join(sorted(missing))}")
    _check_denominators(ast, params)
    lo, hi = (-math.inf, math.inf) if domain is None else (float(domain[0]), float(domain[1]))
    if not lo < hi:
        raise DomainError(f"empty domain ({lo}, {hi})")
    window = (max(lo, -_DEFAULT_WINDOW), min(hi, _DEFAULT_WINDOW))
    poles = tuple(locate_poles(ast, params, window))
    return Potential1D(
        source=source if source is not None else to_source(ast),
        ast=ast,
        d_ast=differentiate(ast),
        params=params,
        domain=(lo, hi),
        singularities=poles,
        hbar=float(hbar),
    )


def parse(source: str, params: Mapping[str, float] | None = None, domain=None,
          hbar: float = 1.0) -> Potential1D:
    """Parse ``source`` into a :class:`Potential1D`.

    Parameters
    ----------
    source : str
        Infix expression in ``x`` and parameter symbols.
    params : mapping, optional
        Values for every symbol other than ``x``.
    domain : (float, float), optional
        Open interval on which the potential is used; defaults to the real line.
    hbar : float
        Carried along for the quantum modules.

    Raises
    ------
    ParseError
        On a syntax error, an unbound symbol or an identically-zero denominator.
    """
    ast = parse_expr(source)
    return make_potential(ast, params or {}, domain=domain, hbar=hbar, source=source)


def evaluate(p: Potential1D, x):
    return p.eval(x)


def derivative(p: Potential1D, x):
    return p.derivative(x)


def find_singularities(p: Potential1D, window: Sequence[float]) -> list[float]:
    """Poles of ``p`` inside the closed ``window``, each refined to ~1e-13."""
    return locate_poles(p.ast, p.params, tuple(window))
