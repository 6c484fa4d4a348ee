"""Expression trees over vector variables ``x1..xm`` and the scalar ``sigma``.

Grammar (whitespace-insensitive)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" unary)?                      (right associative)
    atom    := NUMBER | "x" INT | "sigma" | "s"
             | FUNC "(" expr ("," expr)* ")" | "(" expr ")"
    FUNC    := "abs" | "exp" | "log" | "sqrt" | "max" | "min"
    NUMBER  := digits ["." digits] [("e" | "E") ["+" | "-"] digits]

``s`` is not a runtime symbol; :func:`parse` substitutes the fixed exponent as
a numeric literal. A ``-`` immediately followed by a number literal (and not by
``^``) is folded into a negative constant, so ``-2^2`` is ``-(2^2)``.

Two evaluators are provided. :func:`evaluate` works on a single point with the
``math`` module and raises :class:`DomainError` naming the offending node.
:func:`evaluate_many` is the vectorised path used by the checkers; it maps
every domain error to ``nan``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

UNARY_OPS = ("neg", "abs", "exp", "log", "sqrt")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")
NARY_OPS = ("max", "min")
FUNCTIONS = ("abs", "exp", "log", "sqrt", "max", "min")
NON_DIFFERENTIABLE = ("abs", "max", "min")

_SYMBOLS = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}
_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_ATOM = 5


class ExprSyntaxError(ValueError):
    """Malformed expression text."""

    def __init__(self, message, position, expected=()):
        self.position = position
        self.expected = tuple(expected)
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at position {position}{detail}")


class ArityError(ValueError):
    """A variable index exceeds the declared arity."""


class DomainError(ArithmeticError):
    """Evaluation left the real domain of an operation."""

    def __init__(self, node, reason):
        self.node = node
        self.reason = reason
        super().__init__(f"{reason} in {node}")


class NonDifferentiable(ValueError):
    """Symbolic differentiation reached abs/max/min."""

    def __init__(self, node):
        self.node = node
        super().__init__(f"{node.op} is not differentiable symbolically: {node}")


class Expr:
    """Base class of immutable expression nodes."""

    def __str__(self):
        return to_string(self)

    def __add__(self, other):
        return Binary("add", self, as_expr(other))

    def __radd__(self, other):
        return Binary("add", as_expr(other), self)

    def __sub__(self, other):
        return Binary("sub", self, as_expr(other))

    def __rsub__(self, other):
        return Binary("sub", as_expr(other), self)

    def __mul__(self, other):
        return Binary("mul", self, as_expr(other))

    def __rmul__(self, other):
        return Binary("mul", as_expr(other), self)

    def __truediv__(self, other):
        return Binary("div", self, as_expr(other))

    def __rtruediv__(self, other):
        return Binary("div", as_expr(other), self)

    def __pow__(self, other):
        return Binary("pow", self, as_expr(other))

    def __neg__(self):
        return Unary("neg", self)

    def children(self) -> tuple:
        return ()

    def walk(self):
        yield self
        for child in self.children():
            yield from child.walk()

    @property
    def arity(self) -> int:
        """Smallest m such that every variable index is < m."""
        return max((n.index + 1 for n in self.walk() if isinstance(n, Var)), default=0)

    @property
    def uses_sigma(self) -> bool:
        return any(isinstance(n, Sigma) for n in self.walk())

    def depends_on(self, index: int) -> bool:
        return any(isinstance(n, Var) and n.index == index for n in self.walk())


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"constants must be finite, got {self.value!r}")
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Var(Expr):
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("variable index must be >= 0")


@dataclass(frozen=True)
class Sigma(Expr):
    pass


@dataclass(frozen=True)
class Unary(Expr):
    op: str
    arg: Expr

    def __post_init__(self):
        if self.op not in UNARY_OPS:
            raise ValueError(f"unknown unary op {self.op!r}")

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ValueError(f"unknown binary op {self.op!r}")

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class NAry(Expr):
    op: str
    args: tuple

    def __post_init__(self):
        if self.op not in NARY_OPS:
            raise ValueError(f"unknown n-ary op {self.op!r}")
        if not self.args:
            raise ValueError(f"{self.op} needs at least one argument")
        object.__setattr__(self, "args", tuple(self.args))

    def children(self):
        return self.args


SIGMA = Sigma()
ZERO = Const(0.0)
ONE = Const(1.0)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Const(float(value))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # number | name | op | end
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[pos + stripped]!r}", pos + stripped)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append(_Token(kind, m.group(kind), start))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, arity, s):
        self.tokens = _tokenize(text)
        self.i = 0
        self.arity = arity
        self.s = s

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def peek(self, k=1) -> _Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def advance(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text):
        if self.tok.text != text or self.tok.kind != "op":
            raise ExprSyntaxError(f"unexpected {self._describe(self.tok)}", self.tok.pos, (repr(text),))
        return self.advance()

    @staticmethod
    def _describe(tok):
        return "end of input" if tok.kind == "end" else repr(tok.text)

    def parse(self) -> Expr:
        node = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(
                f"unexpected {self._describe(self.tok)}", self.tok.pos, ("'+'", "'-'", "'*'", "'/'", "'^'", "end")
            )
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = "add" if self.advance().text == "+" else "sub"
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = "mul" if self.advance().text == "*" else "div"
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            if self.tok.kind == "number" and not (self.peek().kind == "op" and self.peek().text == "^"):
                return Const(-float(self.advance().text))
            return Unary("neg", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return Binary("pow", base, self.unary())
        return base

    def atom(self):
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "name":
            return self.name()
        raise ExprSyntaxError(
            f"unexpected {self._describe(tok)}", tok.pos, ("number", "variable", "sigma", "function", "'('", "'-'")
        )

    def name(self):
        tok = self.advance()
        name = tok.text
        if name == "sigma":
            return SIGMA
        if name == "s":
            if self.s is None:
                raise ExprSyntaxError("symbol 's' used but no value of s was supplied", tok.pos)
            return Const(self.s)
        m = re.fullmatch(r"x([1-9]\d*)", name)
        if m:
            k = int(m.group(1))
            if self.arity is not None and k > self.arity:
                raise ArityError(f"variable {name} at position {tok.pos} exceeds arity {self.arity}")
            return Var(k - 1)
        if name in FUNCTIONS:
            self.expect("(")
            args = [self.expr()]
            while self.tok.kind == "op" and self.tok.text == ",":
                self.advance()
                args.append(self.expr())
            self.expect(")")
            if name in NARY_OPS:
                return NAry(name, tuple(args))
            if len(args) != 1:
                raise ExprSyntaxError(f"{name} takes exactly one argument", tok.pos)
            return Unary(name, args[0])
        raise ExprSyntaxError(f"unknown name {name!r}", tok.pos, ("x<k>", "sigma", "s") + FUNCTIONS)


def parse(text: str, arity: int | None = None, s: float | None = None) -> Expr:
    """Parse ``text`` into an expression tree.

    ``arity`` bounds the admissible variable indices (``x1..x{arity}``);
    ``s`` is the value substituted for the symbol ``s``.
    """
    if s is not None and not math.isfinite(s):
        raise ValueError("s must be finite")
    return _Parser(text, arity, s).parse()


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        text = str(int(v))
    else:
        text = repr(v)
    return f"({text})" if v < 0 or text.startswith("-") else text


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return _PREC["neg"]
    return _ATOM


def to_string(e: Expr) -> str:
    """Print ``e`` so that ``parse(to_string(e)) == e``."""
    if isinstance(e, Const):
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return f"x{e.index + 1}"
    if isinstance(e, Sigma):
        return "sigma"
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = to_string(e.arg)
            if isinstance(e.arg, Const) or _prec(e.arg) < _PREC["neg"]:
                inner = f"({inner})"
            return f"-{inner}"
        return f"{e.op}({to_string(e.arg)})"
    if isinstance(e, NAry):
        return f"{e.op}({', '.join(to_string(a) for a in e.args)})"
    p = _PREC[e.op]
    left, right = to_string(e.left), to_string(e.right)
    if e.op == "pow":
        if _prec(e.left) <= p:
            left = f"({left})"
        if _prec(e.right) < p:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {_SYMBOLS[e.op]} {right}"


# ---------------------------------------------------------------------------
# Scalar evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalPoint:
    b: tuple
    sigma: float | None = None


def _is_integer(x: float) -> bool:
    return float(x).is_integer()


def _scalar_pow(node, a, b):
    if a == 0.0:
        if b < 0:
            raise DomainError(node, "zero raised to a negative power")
        return 1.0 if b == 0 else 0.0
    if a < 0 and not _is_integer(b):
        raise DomainError(node, "negative base under a non-integer exponent")
    try:
        return math.pow(a, b)
    except OverflowError:
        raise DomainError(node, "overflow") from None


def _eval(e: Expr, b: Sequence[float], sigma):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return float(b[e.index])
    if isinstance(e, Sigma):
        return sigma
    if isinstance(e, Unary):
        x = _eval(e.arg, b, sigma)
        if e.op == "neg":
            return -x
        if e.op == "abs":
            return abs(x)
        if e.op == "exp":
            try:
                return math.exp(x)
            except OverflowError:
                raise DomainError(e, "overflow") from None
        if e.op == "log":
            if x <= 0:
                raise DomainError(e, "log of a nonpositive number")
            return math.log(x)
        if x < 0:
            raise DomainError(e, "sqrt of a negative number")
        return math.sqrt(x)
    if isinstance(e, NAry):
        vals = [_eval(a, b, sigma) for a in e.args]
        return max(vals) if e.op == "max" else min(vals)
    x = _eval(e.left, b, sigma)
    y = _eval(e.right, b, sigma)
    if e.op == "add":
        r = x + y
    elif e.op == "sub":
        r = x - y
    elif e.op == "mul":
        r = x * y
    elif e.op == "div":
        if y == 0:
            raise DomainError(e, "division by zero")
        r = x / y
    else:
        r = _scalar_pow(e, x, y)
    if not math.isfinite(r):
        raise DomainError(e, "overflow")
    return r


def evaluate(e: Expr, point, sigma: float | None = None) -> float:
    """Evaluate at one point; ``point`` is an :class:`EvalPoint` or a vector.

    Raises :class:`DomainError` when the point is outside the real domain.
    """
    if isinstance(point, EvalPoint):
        b, sigma = point.b, point.sigma
    else:
        b = point
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if e.arity > len(b):
        raise ArityError(f"expression needs {e.arity} variables, got {len(b)}")
    if sigma is None and e.uses_sigma:
        raise ValueError("expression references sigma but none was supplied")
    return float(_eval(e, [float(v) for v in b], None if sigma is None else float(sigma)))


# ---------------------------------------------------------------------------
# Vectorised evaluation
# ---------------------------------------------------------------------------


def _finite(x):
    return np.where(np.isfinite(x), x, np.nan)


def _vec_pow(a, b):
    a, b = np.broadcast_arrays(a, b)
    out = np.power(a, b)
    zero = a == 0.0
    out = np.where(zero & (b > 0), 0.0, out)
    out = np.where(zero & (b == 0), 1.0, out)
    bad = (zero & (b < 0)) | ((a < 0) & (np.floor(b) != b)) | np.isnan(a) | np.isnan(b)  # numpy: nan^0 = 1^nan = 1
    return np.where(bad, np.nan, out)


def _vec(e: Expr, b: np.ndarray, sigma, shape):
    if isinstance(e, Const):
        return np.full(shape, e.value)
    if isinstance(e, Var):
        return b[..., e.index]
    if isinstance(e, Sigma):
        return np.broadcast_to(sigma, shape)
    if isinstance(e, Unary):
        x = _vec(e.arg, b, sigma, shape)
        if e.op == "neg":
            return -x
        if e.op == "abs":
            return np.abs(x)
        if e.op == "exp":
            return _finite(np.exp(x))
        if e.op == "log":
            return np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), np.nan)
        return np.where(x >= 0, np.sqrt(np.where(x >= 0, x, 0.0)), np.nan)
    if isinstance(e, NAry):
        vals = np.stack([_vec(a, b, sigma, shape) for a in e.args])
        # nan anywhere must survive the reduction
        return np.max(vals, axis=0) if e.op == "max" else np.min(vals, axis=0)
    x = _vec(e.left, b, sigma, shape)
    y = _vec(e.right, b, sigma, shape)
    if e.op == "add":
        r = x + y
    elif e.op == "sub":
        r = x - y
    elif e.op == "mul":
        r = x * y
    elif e.op == "div":
        r = np.where(y != 0, x / np.where(y != 0, y, 1.0), np.nan)
    else:
        r = _vec_pow(x, y)
    return _finite(r)


def evaluate_many(e: Expr, b, sigma=None) -> np.ndarray:
    """Evaluate at many points at once; domain errors become ``nan``.

    ``b`` has shape ``(..., m)``; ``sigma`` must broadcast against ``b.shape[:-1]``.
    """
    b = np.asarray(b, dtype=float)
    if b.ndim == 0:
        b = b.reshape(1)
    if e.arity > b.shape[-1]:
        raise ArityError(f"expression needs {e.arity} variables, got {b.shape[-1]}")
    shape = b.shape[:-1]
    if e.uses_sigma:
        if sigma is None:
            raise ValueError("expression references sigma but none was supplied")
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), shape)
    with np.errstate(all="ignore"):
        out = _vec(e, b, sigma, shape)
    return np.array(out, dtype=float).reshape(shape)


# ---------------------------------------------------------------------------
# Construction helpers with constant folding
# ---------------------------------------------------------------------------


def _c(e):
    return e.value if isinstance(e, Const) else None


def add(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    ca, cb = _c(a), _c(b)
    if ca is not None and cb is not None:
        return Const(ca + cb)
    if ca == 0:
        return b
    if cb == 0:
        return a
    return Binary("add", a, b)


def sub(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    ca, cb = _c(a), _c(b)
    if ca is not None and cb is not None:
        return Const(ca - cb)
    if cb == 0:
        return a
    if ca == 0:
        return neg(b)
    return Binary("sub", a, b)


def mul(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    ca, cb = _c(a), _c(b)
    if ca is not None and cb is not None:
        return Const(ca * cb)
    if ca == 0 or cb == 0:
        return ZERO
    if ca == 1:
        return b
    if cb == 1:
        return a
    return Binary("mul", a, b)


def div(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    ca, cb = _c(a), _c(b)
    if ca is not None and cb is not None and cb != 0:
        return Const(ca / cb)
    if ca == 0 and cb != 0:
        return ZERO
    if cb == 1:
        return a
    return Binary("div", a, b)


def power(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    cb = _c(b)
    if cb == 1:
        return a
    if cb == 0:
        return ONE
    return Binary("pow", a, b)


def neg(a) -> Expr:
    a = as_expr(a)
    if isinstance(a, Const):
        return Const(-a.value)
    return Unary("neg", a)


def nary(op: str, args) -> Expr:
    args = tuple(as_expr(a) for a in args)
    if len(args) == 1:
        return args[0]
    return NAry(op, args)


def substitute(e: Expr, mapping: dict) -> Expr:
    """Replace ``Var(i)`` by ``mapping[i]``; variables not in the mapping stay."""
    if isinstance(e, Var):
        return mapping.get(e.index, e)
    if isinstance(e, Unary):
        return Unary(e.op, substitute(e.arg, mapping))
    if isinstance(e, Binary):
        return Binary(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, NAry):
        return NAry(e.op, tuple(substitute(a, mapping) for a in e.args))
    return e


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------


def differentiate(e: Expr, wrt: int) -> Expr:
    """Exact symbolic derivative of ``e`` with respect to ``x{wrt+1}``.

    Raises :class:`NonDifferentiable` when an abs/max/min node depends on the
    variable; callers then fall back to finite differences.
    """
    if not e.depends_on(wrt):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Unary):
        u = e.arg
        du = differentiate(u, wrt)
        if e.op == "neg":
            return neg(du)
        if e.op == "exp":
            return mul(e, du)
        if e.op == "log":
            return div(du, u)
        if e.op == "sqrt":
            return div(du, mul(2, e))
        raise NonDifferentiable(e)
    if isinstance(e, NAry):
        raise NonDifferentiable(e)
    u, v = e.left, e.right
    if e.op == "add":
        return add(differentiate(u, wrt), differentiate(v, wrt))
    if e.op == "sub":
        return sub(differentiate(u, wrt), differentiate(v, wrt))
    if e.op == "mul":
        return add(mul(differentiate(u, wrt), v), mul(u, differentiate(v, wrt)))
    if e.op == "div":
        return div(sub(mul(differentiate(u, wrt), v), mul(u, differentiate(v, wrt))), power(v, 2))
    # pow
    if not v.depends_on(wrt):
        return mul(mul(v, power(u, sub(v, 1))), differentiate(u, wrt))
    if not u.depends_on(wrt):
        return mul(mul(e, Unary("log", u)), differentiate(v, wrt))
    return mul(
        e,
        add(mul(differentiate(v, wrt), Unary("log", u)), div(mul(v, differentiate(u, wrt)), u)),
    )


def gradient(e: Expr, m: int) -> list[Expr]:
    return [differentiate(e, i) for i in range(m)]


def fd_gradient(e: Expr, b, sigma=None) -> np.ndarray:
    """Central finite-difference gradient at the rows of ``b`` (shape ``(n, m)``)."""
    b = np.atleast_2d(np.asarray(b, dtype=float))
    n, m = b.shape
    out = np.empty((n, m))
    for i in range(m):
        h = 1e-5 * np.maximum(1.0, np.abs(b[:, i]))
        up, dn = b.copy(), b.copy()
        up[:, i] += h
        dn[:, i] -= h
        out[:, i] = (evaluate_many(e, up, sigma) - evaluate_many(e, dn, sigma)) / (2 * h)
    return out


def gradient_many(e: Expr, b, m: int | None = None):
    """Gradient at the rows of ``b``; returns ``(values, used_fd)``.

    Symbolic where possible, central differences where a component hits
    abs/max/min. Singular points show up as ``nan`` entries.
    """
    b = np.atleast_2d(np.asarray(b, dtype=float))
    m = b.shape[1] if m is None else m
    out = np.empty((b.shape[0], m))
    used_fd = False
    for i in range(m):
        try:
            d = differentiate(e, i)
        except NonDifferentiable:
            used_fd = True
            out[:, i] = fd_gradient(e, b)[:, i]
            continue
        out[:, i] = evaluate_many(d, b)
    return out, used_fd
