"""Closed-form locally Lipschitz expressions over n real variables.

The node set (polynomial arithmetic plus ``abs``, ``min`` and ``max``) is
closed under composition and every member is locally Lipschitz on all of
R^n, so the evaluators below never have to guard against poles or branch
cuts.

Grammar (whitespace insignificant)::

    expr   := term (('+' | '-') term)*
    term   := factor ('*' factor)*
    factor := base ('^' INT)?
    base   := REAL | VAR | '-' base | '(' expr ')'
            | 'abs(' expr ')' | 'min(' expr ',' expr ')' | 'max(' expr ',' expr ')'
    VAR    := 'x' INT            (1-based in text, 0-based in the AST)
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Union

import numpy as np
from numpy.polynomial import polynomial as P

__all__ = [
    "Expr",
    "Var",
    "Const",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Pow",
    "Abs",
    "Min",
    "Max",
    "ExprSyntaxError",
    "Kink",
    "KinkReport",
    "parse",
    "to_str",
    "evaluate",
    "evaluate_with_magnitude",
    "delta",
    "kinks",
    "kinks_in_box",
    "interval",
    "jet",
    "gradient",
    "smooth_directional_derivative",
    "restriction_poly",
    "nodes",
    "dimension",
]


@dataclass(frozen=True, slots=True)
class Var:
    index: int


@dataclass(frozen=True, slots=True)
class Const:
    value: float


@dataclass(frozen=True, slots=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True, slots=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True, slots=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True, slots=True)
class Mul:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True, slots=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True, slots=True)
class Abs:
    arg: "Expr"


@dataclass(frozen=True, slots=True)
class Min:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True, slots=True)
class Max:
    left: "Expr"
    right: "Expr"


Expr = Union[Var, Const, Neg, Add, Sub, Mul, Pow, Abs, Min, Max]

_BINARY = (Add, Sub, Mul, Min, Max)


class ExprSyntaxError(ValueError):
    """Raised for malformed expression text; ``offset`` is a byte offset."""

    def __init__(self, message: str, offset: int, text: str = ""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.text = text


# --------------------------------------------------------------------------
# parsing and printing

_TOKEN = re.compile(
    r"\s*(?:(?P<real>\d+\.\d*|\.\d+|\d+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*^(),]))"
)
_VAR = re.compile(r"x(\d+)\Z")


class _Tok(NamedTuple):
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    raw = text.encode("utf-8")
    while True:
        # skip trailing whitespace
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos), text)
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), _byte_offset(text, m.start(kind))))
        pos = m.end()
    toks.append(_Tok("end", "", len(raw)))
    return toks


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, n: int | None):
        self.text = text
        self.n = n
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, op: str) -> None:
        tok = self.take()
        if tok.text != op or tok.kind not in ("op",):
            raise ExprSyntaxError(f"expected {op!r}, got {tok.text or 'end of input'!r}", tok.offset, self.text)

    def expr(self) -> Expr:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek().kind == "op" and self.peek().text == "*":
            self.take()
            node = Mul(node, self.factor())
        return node

    def factor(self) -> Expr:
        node = self.base()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.take()
            tok = self.take()
            if tok.kind != "real" or not tok.text.isdigit():
                raise ExprSyntaxError("exponent must be an integer literal", tok.offset, self.text)
            k = int(tok.text)
            if k < 1:
                raise ExprSyntaxError("exponent must be >= 1", tok.offset, self.text)
            node = Pow(node, k)
        return node

    def base(self) -> Expr:
        tok = self.take()
        if tok.kind == "real":
            return Const(float(tok.text))
        if tok.kind == "op":
            if tok.text == "-":
                return Neg(self.base())
            if tok.text == "(":
                node = self.expr()
                self.expect(")")
                return node
            raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.offset, self.text)
        if tok.kind == "name":
            if tok.text in ("abs", "min", "max"):
                self.expect("(")
                a = self.expr()
                if tok.text == "abs":
                    self.expect(")")
                    return Abs(a)
                self.expect(",")
                b = self.expr()
                self.expect(")")
                return Min(a, b) if tok.text == "min" else Max(a, b)
            m = _VAR.match(tok.text)
            if m is None:
                raise ExprSyntaxError(f"unknown identifier {tok.text!r}", tok.offset, self.text)
            k = int(m.group(1))
            if k < 1:
                raise ExprSyntaxError("variables are numbered from x1", tok.offset, self.text)
            if self.n is not None and k > self.n:
                raise ExprSyntaxError(
                    f"variable {tok.text} exceeds declared dimension {self.n}", tok.offset, self.text
                )
            return Var(k - 1)
        raise ExprSyntaxError("unexpected end of input", tok.offset, self.text)


def parse(text: str, n: int | None = None) -> Expr:
    """Parse ``text``; when ``n`` is given, variables beyond ``x<n>`` are rejected."""
    p = _Parser(text, n)
    node = p.expr()
    tok = p.peek()
    if tok.kind != "end":
        raise ExprSyntaxError(f"trailing input {tok.text!r}", tok.offset, text)
    return node


def _fmt_const(c: float) -> str:
    return np.format_float_positional(c, trim="-")


def to_str(e: Expr) -> str:
    """Fully parenthesized text that parses back to the same tree."""
    if isinstance(e, Var):
        return f"x{e.index + 1}"
    if isinstance(e, Const):
        if e.value < 0 or np.signbit(e.value):
            return f"(-{_fmt_const(-e.value)})"
        return _fmt_const(e.value)
    if isinstance(e, Neg):
        # '-' binds tighter than '^', so the operand needs its own parentheses
        return f"(-({to_str(e.arg)}))"
    if isinstance(e, Add):
        return f"({to_str(e.left)} + {to_str(e.right)})"
    if isinstance(e, Sub):
        return f"({to_str(e.left)} - {to_str(e.right)})"
    if isinstance(e, Mul):
        return f"({to_str(e.left)} * {to_str(e.right)})"
    if isinstance(e, Pow):
        return f"({to_str(e.base)})^{e.exponent}"
    if isinstance(e, Abs):
        return f"abs({to_str(e.arg)})"
    if isinstance(e, Min):
        return f"min({to_str(e.left)}, {to_str(e.right)})"
    if isinstance(e, Max):
        return f"max({to_str(e.left)}, {to_str(e.right)})"
    raise TypeError(f"not an expression node: {e!r}")


def nodes(e: Expr) -> Iterator[tuple[int, Expr]]:
    """Pre-order traversal yielding ``(node_id, node)``."""
    stack = [e]
    i = 0
    while stack:
        node = stack.pop()
        yield i, node
        i += 1
        if isinstance(node, (Neg, Abs)):
            stack.append(node.arg)
        elif isinstance(node, Pow):
            stack.append(node.base)
        elif isinstance(node, _BINARY):
            stack.append(node.right)
            stack.append(node.left)


def dimension(e: Expr) -> int:
    """Smallest n such that ``e`` only references x1..xn."""
    return max((node.index + 1 for _, node in nodes(e) if isinstance(node, Var)), default=0)


# --------------------------------------------------------------------------
# evaluation


def _check_dim(e: Expr, x: np.ndarray, n: int | None) -> None:
    need = dimension(e)
    have = x.shape[-1] if x.ndim else 0
    if n is not None and have != n:
        raise ValueError(f"dimension mismatch: point has {have} coordinates, expected {n}")
    if have < need:
        raise ValueError(f"dimension mismatch: expression uses x{need}, point has {have} coordinates")


def _ev(e: Expr, x: np.ndarray):
    if isinstance(e, Var):
        return x[..., e.index]
    if isinstance(e, Const):
        return np.float64(e.value)
    if isinstance(e, Neg):
        return -_ev(e.arg, x)
    if isinstance(e, Add):
        return _ev(e.left, x) + _ev(e.right, x)
    if isinstance(e, Sub):
        return _ev(e.left, x) - _ev(e.right, x)
    if isinstance(e, Mul):
        return _ev(e.left, x) * _ev(e.right, x)
    if isinstance(e, Pow):
        return _ev(e.base, x) ** e.exponent
    if isinstance(e, Abs):
        return np.abs(_ev(e.arg, x))
    if isinstance(e, Min):
        return np.minimum(_ev(e.left, x), _ev(e.right, x))
    if isinstance(e, Max):
        return np.maximum(_ev(e.left, x), _ev(e.right, x))
    raise TypeError(f"not an expression node: {e!r}")


def evaluate(e: Expr, x, n: int | None = None):
    """Evaluate at a point (shape ``(n,)``, returns float) or a batch ``(N, n)``."""
    x = np.asarray(x, dtype=float)
    _check_dim(e, x, n)
    out = _ev(e, x)
    if x.ndim == 1:
        return float(out)
    return np.broadcast_to(out, x.shape[:-1]).astype(float, copy=True)


def _ev_mag(e: Expr, x: np.ndarray):
    # (value, magnitude): magnitude bounds the size of every intermediate, so
    # rounding error of the value is O(eps * magnitude).
    if isinstance(e, Var):
        v = x[..., e.index]
        return v, np.abs(v)
    if isinstance(e, Const):
        return np.float64(e.value), np.float64(abs(e.value))
    if isinstance(e, Neg):
        v, m = _ev_mag(e.arg, x)
        return -v, m
    if isinstance(e, (Add, Sub)):
        a, ma = _ev_mag(e.left, x)
        b, mb = _ev_mag(e.right, x)
        return (a + b if isinstance(e, Add) else a - b), ma + mb
    if isinstance(e, Mul):
        a, ma = _ev_mag(e.left, x)
        b, mb = _ev_mag(e.right, x)
        return a * b, ma * mb
    if isinstance(e, Pow):
        a, ma = _ev_mag(e.base, x)
        return a**e.exponent, ma**e.exponent
    if isinstance(e, Abs):
        a, ma = _ev_mag(e.arg, x)
        return np.abs(a), ma
    if isinstance(e, (Min, Max)):
        a, ma = _ev_mag(e.left, x)
        b, mb = _ev_mag(e.right, x)
        f = np.minimum if isinstance(e, Min) else np.maximum
        return f(a, b), np.maximum(ma, mb)
    raise TypeError(f"not an expression node: {e!r}")


def _delta(e: Expr, x0: np.ndarray, H: np.ndarray):
    # (value at x0, e(x0 + H) - e(x0)) with the increment carried through every
    # node, so constants cancel exactly and the error scales with the increment
    if isinstance(e, Var):
        return np.float64(x0[e.index]), H[..., e.index]
    if isinstance(e, Const):
        return np.float64(e.value), np.zeros(H.shape[:-1])
    if isinstance(e, Neg):
        a, d = _delta(e.arg, x0, H)
        return -a, -d
    if isinstance(e, (Add, Sub)):
        a, da = _delta(e.left, x0, H)
        b, db = _delta(e.right, x0, H)
        if isinstance(e, Add):
            return a + b, da + db
        return a - b, da - db
    if isinstance(e, Mul):
        a, da = _delta(e.left, x0, H)
        b, db = _delta(e.right, x0, H)
        return a * b, a * db + da * b + da * db
    if isinstance(e, Pow):
        a, da = _delta(e.base, x0, H)
        k = e.exponent
        d = sum(math.comb(k, j) * a ** (k - j) * da**j for j in range(1, k + 1))
        return a**k, d
    if isinstance(e, Abs):
        a, da = _delta(e.arg, x0, H)
        if a > 0:
            d = np.where(da >= -a, da, np.abs(a + da) - a)
        elif a < 0:
            d = np.where(da <= -a, -da, np.abs(a + da) + a)
        else:
            d = np.abs(da)
        return abs(a), d
    if isinstance(e, (Min, Max)):
        a, da = _delta(e.left, x0, H)
        b, db = _delta(e.right, x0, H)
        pick = np.minimum if isinstance(e, Min) else np.maximum
        m = pick(a, b)
        # the gap terms vanish on the branch active at x0
        return m, pick(da + (a - m), db + (b - m))
    raise TypeError(f"not an expression node: {e!r}")


def delta(e: Expr, xbar, H):
    """``e(xbar + H) - e(xbar)`` for a batch of offsets ``H``, free of the
    cancellation a plain difference of two evaluations suffers when ``|e|`` is
    large compared with the increment."""
    x0 = np.asarray(xbar, dtype=float)
    H = np.asarray(H, dtype=float)
    _check_dim(e, x0, None)
    if H.shape[-1] != x0.shape[0]:
        raise ValueError("dimension mismatch between xbar and offsets")
    _, d = _delta(e, x0, H)
    return np.broadcast_to(d, H.shape[:-1]).astype(float, copy=True)


def evaluate_with_magnitude(e: Expr, x):
    """Return ``(value, magnitude)`` arrays for a batch of points."""
    x = np.asarray(x, dtype=float)
    _check_dim(e, x, None)
    v, m = _ev_mag(e, x)
    shape = x.shape[:-1]
    return np.broadcast_to(v, shape).astype(float), np.broadcast_to(m, shape).astype(float)


# --------------------------------------------------------------------------
# kinks


class Kink(NamedTuple):
    node_id: int
    kind: str  # "abs" | "min" | "max"
    value: float  # abs argument, or left - right for min/max


@dataclass(frozen=True)
class KinkReport:
    kinks: tuple[Kink, ...]
    kappa: float

    def __bool__(self) -> bool:
        return bool(self.kinks)

    def __len__(self) -> int:
        return len(self.kinks)


def kinks(e: Expr, x, kappa: float = 1e-9, n: int | None = None) -> KinkReport:
    """Nonsmooth nodes that are (nearly) active at ``x``."""
    if not kappa > 0:
        raise ValueError("kink tolerance must be positive")
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("kinks expects a single point")
    _check_dim(e, x, n)
    found = []
    for nid, node in nodes(e):
        if isinstance(node, Abs):
            a = float(_ev(node.arg, x))
            if abs(a) <= kappa:
                found.append(Kink(nid, "abs", a))
        elif isinstance(node, (Min, Max)):
            d = float(_ev(node.left, x) - _ev(node.right, x))
            if abs(d) <= kappa:
                found.append(Kink(nid, type(node).__name__.lower(), d))
    return KinkReport(tuple(found), kappa)


def _iv(e: Expr, lo: np.ndarray, hi: np.ndarray) -> tuple[float, float]:
    if isinstance(e, Var):
        return float(lo[e.index]), float(hi[e.index])
    if isinstance(e, Const):
        return e.value, e.value
    if isinstance(e, Neg):
        a, b = _iv(e.arg, lo, hi)
        return -b, -a
    if isinstance(e, Add):
        a, b = _iv(e.left, lo, hi)
        c, d = _iv(e.right, lo, hi)
        return a + c, b + d
    if isinstance(e, Sub):
        a, b = _iv(e.left, lo, hi)
        c, d = _iv(e.right, lo, hi)
        return a - d, b - c
    if isinstance(e, Mul):
        a, b = _iv(e.left, lo, hi)
        c, d = _iv(e.right, lo, hi)
        p = (a * c, a * d, b * c, b * d)
        return min(p), max(p)
    if isinstance(e, Pow):
        a, b = _iv(e.base, lo, hi)
        k = e.exponent
        if k % 2 == 1:
            return a**k, b**k
        if a <= 0 <= b:
            return 0.0, max(a**k, b**k)
        return min(a**k, b**k), max(a**k, b**k)
    if isinstance(e, Abs):
        a, b = _iv(e.arg, lo, hi)
        if a <= 0 <= b:
            return 0.0, max(-a, b)
        return min(abs(a), abs(b)), max(abs(a), abs(b))
    if isinstance(e, Min):
        a, b = _iv(e.left, lo, hi)
        c, d = _iv(e.right, lo, hi)
        return min(a, c), min(b, d)
    if isinstance(e, Max):
        a, b = _iv(e.left, lo, hi)
        c, d = _iv(e.right, lo, hi)
        return max(a, c), max(b, d)
    raise TypeError(f"not an expression node: {e!r}")


def interval(e: Expr, lo, hi) -> tuple[float, float]:
    """Naive interval enclosure of ``e`` over the box ``[lo, hi]``."""
    return _iv(e, np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))


def kinks_in_box(e: Expr, lo, hi, kappa: float = 1e-9) -> list[int]:
    """Node ids of abs/min/max nodes that may switch branch inside the box.

    An empty result means ``e`` is a polynomial (hence C-infinity) on the box.
    The enclosure is conservative, so false alarms are possible but misses
    are not (up to floating point rounding, covered by ``kappa``).
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    hits = []
    for nid, node in nodes(e):
        if isinstance(node, Abs):
            a, b = _iv(node.arg, lo, hi)
        elif isinstance(node, (Min, Max)):
            a, b = _iv(Sub(node.left, node.right), lo, hi)
        else:
            continue
        if a <= kappa and b >= -kappa:
            hits.append(nid)
    return hits


# --------------------------------------------------------------------------
# forward-mode differentiation


def _jet(e: Expr, x: np.ndarray, u: np.ndarray) -> tuple[float, float, float]:
    # Taylor coefficients (phi(0), phi'(0), phi''(0)) of phi(t) = e(x + t u).
    if isinstance(e, Var):
        return float(x[e.index]), float(u[e.index]), 0.0
    if isinstance(e, Const):
        return e.value, 0.0, 0.0
    if isinstance(e, Neg):
        v, d, s = _jet(e.arg, x, u)
        return -v, -d, -s
    if isinstance(e, (Add, Sub)):
        a = _jet(e.left, x, u)
        b = _jet(e.right, x, u)
        sg = 1.0 if isinstance(e, Add) else -1.0
        return a[0] + sg * b[0], a[1] + sg * b[1], a[2] + sg * b[2]
    if isinstance(e, Mul):
        a0, a1, a2 = _jet(e.left, x, u)
        b0, b1, b2 = _jet(e.right, x, u)
        return a0 * b0, a1 * b0 + a0 * b1, a2 * b0 + 2.0 * a1 * b1 + a0 * b2
    if isinstance(e, Pow):
        v, d, s = _jet(e.base, x, u)
        k = e.exponent
        if k == 1:
            return v, d, s
        return v**k, k * v ** (k - 1) * d, k * (k - 1) * v ** (k - 2) * d * d + k * v ** (k - 1) * s
    if isinstance(e, Abs):
        v, d, s = _jet(e.arg, x, u)
        sg = -1.0 if v < 0 else 1.0
        return sg * v, sg * d, sg * s
    if isinstance(e, (Min, Max)):
        a = _jet(e.left, x, u)
        b = _jet(e.right, x, u)
        take_left = (a[0] <= b[0]) if isinstance(e, Min) else (a[0] >= b[0])
        return a if take_left else b
    raise TypeError(f"not an expression node: {e!r}")


def jet(e: Expr, x, u) -> tuple[float, float, float]:
    """Value, first and second derivative of ``t -> e(x + t u)`` at ``t = 0``.

    Only meaningful where ``e`` is smooth; abs/min/max take the branch that is
    active at ``x``.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_dim(e, x, u.shape[0])
    return _jet(e, x, u)


def gradient(e: Expr, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    eye = np.eye(x.shape[0])
    return np.array([_jet(e, x, eye[i])[1] for i in range(x.shape[0])])


def smooth_directional_derivative(e: Expr, x, u, kappa: float = 1e-9) -> float:
    """Exact ``grad e(x) . u`` by forward mode; refuses at a kink."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != u.shape:
        raise ValueError("dimension mismatch between point and direction")
    rep = kinks(e, x, kappa)
    if rep:
        raise ValueError(f"expression has {len(rep)} active kink(s) at x; use a sampled estimator")
    return _jet(e, x, u)[1]


# --------------------------------------------------------------------------
# restriction to a ray


class AmbiguousBranch(ValueError):
    """The branch of some abs/min/max node along the ray could not be resolved."""


def _trim(c: np.ndarray) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    return c if c.size else np.zeros(1)


def _leading_sign(c: np.ndarray, kappa: float) -> float:
    # Sign of the polynomial on (0, eps): decided by the lowest-order
    # coefficient that is clearly nonzero.
    for ci in c:
        if ci == 0.0:
            continue
        if abs(ci) <= kappa:
            raise AmbiguousBranch("coefficient within kink tolerance")
        return 1.0 if ci > 0 else -1.0
    return 0.0


def _rp(e: Expr, x: np.ndarray, u: np.ndarray, kappa: float) -> np.ndarray:
    if isinstance(e, Var):
        return _trim([x[e.index], u[e.index]])
    if isinstance(e, Const):
        return _trim([e.value])
    if isinstance(e, Neg):
        return -_rp(e.arg, x, u, kappa)
    if isinstance(e, Add):
        return P.polyadd(_rp(e.left, x, u, kappa), _rp(e.right, x, u, kappa))
    if isinstance(e, Sub):
        return P.polysub(_rp(e.left, x, u, kappa), _rp(e.right, x, u, kappa))
    if isinstance(e, Mul):
        return P.polymul(_rp(e.left, x, u, kappa), _rp(e.right, x, u, kappa))
    if isinstance(e, Pow):
        return P.polypow(_rp(e.base, x, u, kappa), e.exponent)
    if isinstance(e, Abs):
        c = _rp(e.arg, x, u, kappa)
        return c * (_leading_sign(c, kappa) or 1.0)
    if isinstance(e, (Min, Max)):
        a = _rp(e.left, x, u, kappa)
        b = _rp(e.right, x, u, kappa)
        s = _leading_sign(P.polysub(a, b), kappa)
        if isinstance(e, Min):
            return a if s <= 0 else b
        return a if s >= 0 else b
    raise TypeError(f"not an expression node: {e!r}")


def restriction_poly(e: Expr, x, u, kappa: float = 1e-9) -> np.ndarray:
    """Coefficients (lowest order first) of ``t -> e(x + t u)`` on ``(0, eps)``.

    Every expression is piecewise polynomial, so its restriction to a ray is
    a single polynomial for all small enough ``t > 0``. Raises
    :class:`AmbiguousBranch` if a branch decision rests on a coefficient
    within ``kappa`` of zero (but not exactly zero).
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_dim(e, x, u.shape[0])
    return _trim(_rp(e, x, u, kappa))
