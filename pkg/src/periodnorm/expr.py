"""Bivariate expression language: parsing, symbolic differentiation, folding.

Grammar (lowest to highest binding)::

    sum     := product (('+' | '-') product)*
    product := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := atom ('^' unary)?            # right associative
    atom    := number | name | name '(' sum ')' | '(' sum ')'

so ``-x^2`` parses as ``-(x^2)``.  ``**`` is accepted as a synonym for ``^``.
"""

from __future__ import annotations

import math
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Callable, Union

from .errors import (
    DifferentiationError,
    EvaluationDomainError,
    ParseError,
    UnknownIdentifierError,
)

__all__ = [
    "Expr", "Const", "Var", "Neg", "BinOp", "Call",
    "FUNCTIONS", "parse", "as_expr", "differentiate", "fold", "evaluate",
    "compile_expr", "node_count", "free_variables", "substitute",
]

FUNCTIONS = ("sin", "cos", "tan", "exp", "ln", "sqrt", "tanh", "abs")
CONSTANTS = {"pi": math.pi, "e": math.e}
DEFAULT_VARIABLES = ("x", "y")

# printing precedence
_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


class Expr:
    """Immutable expression node.  Arithmetic operators build new trees."""

    __slots__ = ()

    def __add__(self, other):
        return BinOp("+", self, as_expr(other))

    def __radd__(self, other):
        return BinOp("+", as_expr(other), self)

    def __sub__(self, other):
        return BinOp("-", self, as_expr(other))

    def __rsub__(self, other):
        return BinOp("-", as_expr(other), self)

    def __mul__(self, other):
        return BinOp("*", self, as_expr(other))

    def __rmul__(self, other):
        return BinOp("*", as_expr(other), self)

    def __truediv__(self, other):
        return BinOp("/", self, as_expr(other))

    def __rtruediv__(self, other):
        return BinOp("/", as_expr(other), self)

    def __pow__(self, other):
        return BinOp("^", self, as_expr(other))

    def __neg__(self):
        return Neg(self)

    def __str__(self):
        return _format(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in "+-*/^" or len(self.op) != 1:
            raise ValueError(f"unknown binary operator {self.op!r}")


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr

    def __post_init__(self):
        if self.func not in FUNCTIONS:
            raise ValueError(f"unknown function {self.func!r}")


ExprLike = Union[Expr, str, float, int]


def as_expr(obj: ExprLike, variables: Sequence[str] = DEFAULT_VARIABLES) -> Expr:
    if isinstance(obj, Expr):
        return obj
    if isinstance(obj, str):
        return parse(obj, variables)
    if isinstance(obj, (int, float)):
        return Const(obj)
    raise TypeError(f"cannot convert {type(obj).__name__} to Expr")


# ---------------------------------------------------------------------------
# tokenizer / Pratt parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^(),])
    """,
    re.VERBOSE,
)

_BINARY_BP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 30}
_UNARY_BP = 25
_OPERAND_START = ("number", "identifier", "'('", "'-'", "'+'")


@dataclass(frozen=True)
class _Token:
    kind: str  # num, name, op, end
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"invalid character {text[pos]!r}", _byte_offset(text, pos),
                             _OPERAND_START)
        kind = m.lastgroup
        if kind != "ws":
            tok = m.group()
            if tok == "**":
                tok = "^"
            tokens.append(_Token(kind, tok, _byte_offset(text, pos)))
        pos = m.end()
    tokens.append(_Token("end", "", _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.tokens = _tokenize(text)
        self.i = 0
        self.variables = tuple(variables)

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> None:
        if self.tok.text != text or self.tok.kind == "end":
            self.fail(f"expected '{text}'", (f"'{text}'",))
        self.advance()

    def fail(self, message: str, expected) -> None:
        found = "end of input" if self.tok.kind == "end" else repr(self.tok.text)
        raise ParseError(f"{message}, found {found}", self.tok.offset, expected)

    def expression(self, rbp: int = 0) -> Expr:
        left = self.nud(self.advance())
        while self.tok.kind == "op" and _BINARY_BP.get(self.tok.text, 0) > rbp:
            op = self.advance().text
            # '^' is right associative and its exponent may carry a sign
            right_bp = _UNARY_BP - 1 if op == "^" else _BINARY_BP[op]
            left = BinOp(op, left, self.expression(right_bp))
        return left

    def nud(self, tok: _Token) -> Expr:
        if tok.kind == "num":
            return Const(float(tok.text))
        if tok.kind == "name":
            return self.name(tok)
        if tok.kind == "op":
            if tok.text == "(":
                inner = self.expression()
                self.expect(")")
                return inner
            if tok.text == "-":
                return Neg(self.expression(_UNARY_BP))
            if tok.text == "+":
                return self.expression(_UNARY_BP)
        self.i -= 1
        self.fail("expected an operand", _OPERAND_START)

    def name(self, tok: _Token) -> Expr:
        if tok.text in FUNCTIONS:
            self.expect("(")
            arg = self.expression()
            self.expect(")")
            return Call(tok.text, arg)
        if tok.text in self.variables:
            return Var(tok.text)
        if tok.text in CONSTANTS:
            return Const(CONSTANTS[tok.text])
        known = self.variables + FUNCTIONS + tuple(CONSTANTS)
        raise UnknownIdentifierError(tok.text, tok.offset, known)


def parse(text: str, variables: Sequence[str] = DEFAULT_VARIABLES) -> Expr:
    """Parse ``text`` into an expression tree over ``variables``."""
    if not text or not text.strip():
        raise ParseError("empty expression", 0, _OPERAND_START)
    p = _Parser(text, variables)
    tree = p.expression()
    if p.tok.kind != "end":
        p.fail("unexpected token", tuple(f"'{op}'" for op in _BINARY_BP) + ("end of input",))
    return tree


# ---------------------------------------------------------------------------
# evaluation

def _pow(a: float, b: float) -> float:
    if math.isfinite(b) and b == int(b) and abs(b) < 2**53:
        return a ** int(b)
    if a <= 0.0:
        raise ValueError("non-integer power of a non-positive base")
    return math.pow(a, b)


def _ln(a: float) -> float:
    return math.log(a)


_FUNC_IMPL: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "ln": _ln,
    "sqrt": math.sqrt,
    "tanh": math.tanh,
    "abs": abs,
}


def _apply_binary(op: str, a: float, b: float) -> float:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    return _pow(a, b)


def _bind(point, variables: Sequence[str]) -> Mapping[str, float]:
    if isinstance(point, Mapping):
        return point
    return dict(zip(variables, (float(c) for c in point)))


def evaluate(e: Expr, p, variables: Sequence[str] = DEFAULT_VARIABLES) -> float:
    """Evaluate ``e`` at point ``p`` (a sequence matching ``variables`` or a mapping).

    Raises EvaluationDomainError naming the offending subexpression.
    """
    return _eval(e, _bind(p, variables))


def _eval(e: Expr, env: Mapping[str, float]) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise EvaluationDomainError(f"unbound variable {e.name!r}", e) from None
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, BinOp):
        a = _eval(e.left, env)
        b = _eval(e.right, env)
        try:
            return _apply_binary(e.op, a, b)
        except ZeroDivisionError:
            raise EvaluationDomainError("division by zero", e) from None
        except (ValueError, OverflowError) as exc:
            raise EvaluationDomainError(str(exc), e) from None
    if isinstance(e, Call):
        a = _eval(e.arg, env)
        try:
            return _FUNC_IMPL[e.func](a)
        except (ValueError, OverflowError) as exc:
            raise EvaluationDomainError(f"{e.func}: {exc}", e) from None
    raise TypeError(f"not an expression node: {e!r}")


def _source(e: Expr) -> str:
    if isinstance(e, Const):
        v = e.value
        return repr(v) if math.isfinite(v) else f"float({str(v)!r})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{_source(e.arg)})"
    if isinstance(e, BinOp):
        a, b = _source(e.left), _source(e.right)
        if e.op == "^":
            return f"_pow({a}, {b})"
        return f"({a} {e.op} {b})"
    if isinstance(e, Call):
        return f"_f_{e.func}({_source(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")


_NAMESPACE = {"_pow": _pow, **{f"_f_{k}": v for k, v in _FUNC_IMPL.items()}}


def compile_expr(e: Expr, variables: Sequence[str] = DEFAULT_VARIABLES) -> Callable[..., float]:
    """Compile ``e`` to a positional-argument Python function.

    The fast path is generated code; on any arithmetic failure the tree
    evaluator is re-run so the raised error names the subexpression.
    """
    args = ", ".join(variables)
    fast = eval(f"lambda {args}: {_source(e)}", dict(_NAMESPACE))

    def fn(*values):
        try:
            return fast(*values)
        except (ArithmeticError, ValueError):
            return _eval(e, dict(zip(variables, values)))

    fn.expr = e
    return fn


# ---------------------------------------------------------------------------
# folding

def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def fold(e: Expr) -> Expr:
    """Collapse constant subtrees and apply the 0/1 identities.

    Constant subtrees whose evaluation fails (``1/0``) are left in place so
    the error surfaces at evaluation time.
    """
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Neg):
        a = fold(e.arg)
        if isinstance(a, Const):
            return Const(-a.value)
        if isinstance(a, Neg):
            return a.arg
        return Neg(a)
    if isinstance(e, Call):
        a = fold(e.arg)
        if isinstance(a, Const):
            try:
                return Const(_FUNC_IMPL[e.func](a.value))
            except (ValueError, OverflowError):
                pass
        return Call(e.func, a)
    if isinstance(e, BinOp):
        return _fold_binary(e.op, fold(e.left), fold(e.right))
    raise TypeError(f"not an expression node: {e!r}")


def _fold_binary(op: str, l: Expr, r: Expr) -> Expr:
    if isinstance(l, Const) and isinstance(r, Const):
        try:
            return Const(_apply_binary(op, l.value, r.value))
        except (ArithmeticError, ValueError):
            return BinOp(op, l, r)
    if op == "+":
        if _is_const(l, 0.0):
            return r
        if _is_const(r, 0.0):
            return l
    elif op == "-":
        if _is_const(r, 0.0):
            return l
        if _is_const(l, 0.0):
            return fold(Neg(r))
    elif op == "*":
        if _is_const(l, 0.0) or _is_const(r, 0.0):
            return Const(0.0)
        if _is_const(l, 1.0):
            return r
        if _is_const(r, 1.0):
            return l
    elif op == "/":
        if _is_const(r, 1.0):
            return l
        if _is_const(l, 0.0):
            return Const(0.0)
    elif op == "^":
        if _is_const(r, 1.0):
            return l
        if _is_const(r, 0.0) or _is_const(l, 1.0):
            return Const(1.0)
    return BinOp(op, l, r)


# ---------------------------------------------------------------------------
# differentiation

def differentiate(e: Expr, var: str) -> Expr:
    """Exact symbolic derivative of ``e`` with respect to ``var``, folded."""
    return fold(_diff(e, var))


def _diff(e: Expr, v: str) -> Expr:
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.name == v else 0.0)
    if isinstance(e, Neg):
        return Neg(_diff(e.arg, v))
    if isinstance(e, BinOp):
        u, w = e.left, e.right
        du, dw = _diff(u, v), _diff(w, v)
        if e.op in "+-":
            return BinOp(e.op, du, dw)
        if e.op == "*":
            return du * w + u * dw
        if e.op == "/":
            return (du * w - u * dw) / (w ** Const(2.0))
        # power
        if _is_const(fold(dw), 0.0):
            n = fold(w)
            exponent = Const(n.value - 1.0) if isinstance(n, Const) else n - Const(1.0)
            return n * (u ** exponent) * du
        return e * (dw * Call("ln", u) + w * du / u)
    if isinstance(e, Call):
        u = e.arg
        du = _diff(u, v)
        f = e.func
        if f == "sin":
            outer = Call("cos", u)
        elif f == "cos":
            outer = Neg(Call("sin", u))
        elif f == "tan":
            outer = Const(1.0) / Call("cos", u) ** Const(2.0)
        elif f == "exp":
            outer = Call("exp", u)
        elif f == "ln":
            outer = Const(1.0) / u
        elif f == "sqrt":
            outer = Const(1.0) / (Const(2.0) * Call("sqrt", u))
        elif f == "tanh":
            outer = Const(1.0) - Call("tanh", u) ** Const(2.0)
        else:
            raise DifferentiationError(f"{f} is not differentiable (in '{_format(e)}')")
        return outer * du
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# inspection

def node_count(e: Expr) -> int:
    if isinstance(e, (Const, Var)):
        return 1
    if isinstance(e, (Neg, Call)):
        return 1 + node_count(e.arg)
    return 1 + node_count(e.left) + node_count(e.right)


def free_variables(e: Expr) -> frozenset[str]:
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, (Neg, Call)):
        return free_variables(e.arg)
    return free_variables(e.left) | free_variables(e.right)


def substitute(e: Expr, bindings: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (used to compose h -> psi(h) with H)."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return bindings.get(e.name, e)
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, bindings))
    if isinstance(e, Call):
        return Call(e.func, substitute(e.arg, bindings))
    return BinOp(e.op, substitute(e.left, bindings), substitute(e.right, bindings))


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL}.get(e.op, _PREC_POW)
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return _PREC_NEG
    return _PREC_ATOM


def _format_const(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v)) if v != 0 or math.copysign(1.0, v) > 0 else "-0"
    return repr(v)


def _wrap(e: Expr, parens: bool) -> str:
    s = _format(e)
    return f"({s})" if parens else s


def _format(e: Expr) -> str:
    if isinstance(e, Const):
        return _format_const(e.value) if math.isfinite(e.value) else str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, _prec(e.arg) <= _PREC_NEG)
    if isinstance(e, Call):
        return f"{e.func}({_format(e.arg)})"
    p = _prec(e)
    if e.op == "^":
        left = _wrap(e.left, _prec(e.left) <= _PREC_POW)
        right = _wrap(e.right, _prec(e.right) < _PREC_POW)
        return f"{left}^{right}"
    left = _wrap(e.left, _prec(e.left) < p)
    right = _wrap(e.right, _prec(e.right) <= p)
    if e.op in "+-":
        return f"{left} {e.op} {right}"
    return f"{left}{e.op}{right}"
