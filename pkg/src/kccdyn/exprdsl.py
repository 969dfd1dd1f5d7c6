"""Scalar expression DSL: parsing, serialization, exact differentiation.

Expressions over an ordered list of named variables are parsed into an
immutable AST (grammar in the README). Evaluation runs either on plain
floats or on second-order dual numbers, so gradients and Hessians are exact
forward-mode derivatives rather than finite-difference estimates, and every
Hessian is symmetric by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

__all__ = [
    "BinOp",
    "Call",
    "DomainError",
    "DualScalar",
    "Expression",
    "ExpressionError",
    "FUNCTION_NAMES",
    "Neg",
    "Num",
    "ParseError",
    "UnknownIdentifierError",
    "Var",
    "evaluate",
    "gradient",
    "hessian",
    "parse",
    "remap_variables",
    "shift_variables",
    "to_source",
    "value_gradient_hessian",
]

FUNCTION_NAMES = frozenset({"sin", "cos", "exp", "ln", "sqrt", "abs"})


class ExpressionError(ValueError):
    """Base class for expression parsing and evaluation failures."""


class ParseError(ExpressionError):
    """Syntax error; carries the byte offset and what was expected there."""

    def __init__(self, message: str, offset: int, expected: str | None = None):
        self.offset = offset
        self.expected = expected
        detail = f", expected {expected}" if expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownIdentifierError(ParseError):
    """Identifier that is neither a declared variable nor a function."""

    def __init__(self, name: str, offset: int):
        self.name = name
        super().__init__(
            f"unknown identifier {name!r}", offset,
            expected="a declared variable or one of " + ", ".join(sorted(FUNCTION_NAMES)),
        )


class DomainError(ExpressionError):
    """Singular numeric operation (division by zero, ln of a non-positive
    value, ...). The evaluator fills in the offending sub-expression."""

    def __init__(self, reason: str, offset: int | None = None, fragment: str | None = None):
        self.reason = reason
        self.offset = offset
        self.fragment = fragment
        message = reason
        if fragment is not None:
            message += f" in {fragment!r}"
        if offset is not None:
            message += f" (offset {offset})"
        super().__init__(message)


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float
    offset: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    index: int
    offset: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Neg:
    operand: "Node"
    offset: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"
    offset: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str  # member of FUNCTION_NAMES
    arg: "Node"
    offset: int | None = field(default=None, compare=False, repr=False)


Node = Union[Num, Var, Neg, BinOp, Call]


def _walk(node: Node):
    yield node
    if isinstance(node, Neg):
        yield from _walk(node.operand)
    elif isinstance(node, BinOp):
        yield from _walk(node.left)
        yield from _walk(node.right)
    elif isinstance(node, Call):
        yield from _walk(node.arg)


@dataclass(frozen=True)
class Expression:
    """Parsed expression over an ordered variable list.

    Immutable after construction; evaluation is reentrant, so a single
    Expression may be evaluated from many threads at once.
    """

    root: Node
    variables: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.variables)
        object.__setattr__(self, "variables", names)
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")
        for name in names:
            if not name.isidentifier():
                raise ValueError(f"variable name {name!r} is not a valid identifier")
        for node in _walk(self.root):
            if isinstance(node, Var) and not 0 <= node.index < len(names):
                raise ValueError(
                    f"variable index {node.index} out of range for {len(names)} variables")
            if isinstance(node, Call) and node.func not in FUNCTION_NAMES:
                raise ValueError(f"unknown function {node.func!r}")
            if isinstance(node, BinOp) and node.op not in "+-*/^":
                raise ValueError(f"unknown operator {node.op!r}")

    @property
    def arity(self) -> int:
        return len(self.variables)

    def __str__(self) -> str:
        return _render(self.root, self.variables, 0)

    def evaluate(self, point) -> float:
        return evaluate(self, point)

    def gradient(self, point) -> np.ndarray:
        return gradient(self, point)

    def hessian(self, point) -> np.ndarray:
        return hessian(self, point)

    def with_derivatives(self, point) -> tuple[float, np.ndarray, np.ndarray]:
        return value_gradient_hessian(self, point)


# ---------------------------------------------------------------------------
# Second-order dual numbers


class DualScalar:
    """Truncated second-order Taylor value: a scalar together with its first
    and second directional derivatives against m seed directions.

    The second-derivative block stays exactly symmetric under every
    operation because all update terms are built from symmetric outer
    products. Arithmetic on constants leaves both derivative blocks zero.
    """

    __slots__ = ("value", "first", "second")

    def __init__(self, value: float, first: np.ndarray, second: np.ndarray):
        self.value = float(value)
        self.first = first
        self.second = second

    @classmethod
    def constant(cls, value: float, ndirections: int) -> "DualScalar":
        return cls(value, np.zeros(ndirections), np.zeros((ndirections, ndirections)))

    @classmethod
    def seed(cls, value: float, index: int, ndirections: int) -> "DualScalar":
        first = np.zeros(ndirections)
        first[index] = 1.0
        return cls(value, first, np.zeros((ndirections, ndirections)))

    def _coerce(self, other):
        if isinstance(other, DualScalar):
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return DualScalar.constant(float(other), self.first.shape[0])
        return None

    def _chain(self, f0: float, f1: float, f2: float) -> "DualScalar":
        # f(u): value f0, slope f1, curvature f2, all at u = self.value
        return DualScalar(
            f0,
            f1 * self.first,
            f1 * self.second + f2 * np.outer(self.first, self.first),
        )

    def __repr__(self) -> str:
        return f"DualScalar({self.value!r}, first={self.first!r})"

    def __neg__(self) -> "DualScalar":
        return DualScalar(-self.value, -self.first, -self.second)

    def __add__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return DualScalar(self.value + other.value, self.first + other.first,
                          self.second + other.second)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return DualScalar(self.value - other.value, self.first - other.first,
                          self.second - other.second)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return other - self

    def __mul__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        cross = np.outer(self.first, other.first)
        return DualScalar(
            self.value * other.value,
            self.value * other.first + other.value * self.first,
            self.value * other.second + other.value * self.second + cross + cross.T,
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "DualScalar":
        if self.value == 0.0:
            raise DomainError("division by zero")
        inv = 1.0 / self.value
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return other * self.reciprocal()

    def _integer_power(self, n: int) -> "DualScalar":
        if n == 0:
            return DualScalar.constant(1.0, self.first.shape[0])
        if n < 0:
            return self._integer_power(-n).reciprocal()
        result = None
        base = self
        while n:
            if n & 1:
                result = base if result is None else result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def __pow__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        # A constant integer exponent keeps negative bases legal and exact.
        if not other.first.any() and not other.second.any():
            e = other.value
            if float(e).is_integer() and abs(e) < 2 ** 31:
                return self._integer_power(int(e))
        if self.value < 0.0:
            raise DomainError("negative base with non-integer exponent")
        if self.value == 0.0:
            raise DomainError("zero base with non-integer exponent (derivative singular)")
        return (other * self.ln()).exp()

    def __rpow__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return other ** self

    def sin(self) -> "DualScalar":
        s, c = math.sin(self.value), math.cos(self.value)
        return self._chain(s, c, -s)

    def cos(self) -> "DualScalar":
        s, c = math.sin(self.value), math.cos(self.value)
        return self._chain(c, -s, -c)

    def exp(self) -> "DualScalar":
        try:
            e = math.exp(self.value)
        except OverflowError:
            raise DomainError("overflow in exp") from None
        return self._chain(e, e, e)

    def ln(self) -> "DualScalar":
        if self.value <= 0.0:
            raise DomainError("ln of a non-positive value")
        inv = 1.0 / self.value
        return self._chain(math.log(self.value), inv, -inv * inv)

    def sqrt(self) -> "DualScalar":
        if self.value < 0.0:
            raise DomainError("square root of a negative value")
        if self.value == 0.0:
            raise DomainError("square root derivative singular at zero")
        s = math.sqrt(self.value)
        return self._chain(s, 0.5 / s, -0.25 / (s * self.value))

    def __abs__(self) -> "DualScalar":
        # sign(0) taken as 0; abs is treated as flat across the kink
        sign = 0.0 if self.value == 0.0 else math.copysign(1.0, self.value)
        return self._chain(abs(self.value), sign, 0.0)


# ---------------------------------------------------------------------------
# Evaluation over floats or duals


def _float_pow(a: float, b: float) -> float:
    if float(b).is_integer():
        if a == 0.0 and b < 0:
            raise DomainError("division by zero")
        try:
            return a ** b
        except OverflowError:
            raise DomainError("overflow in power") from None
    if a < 0.0:
        raise DomainError("negative base with non-integer exponent")
    if a == 0.0:
        if b > 0:
            return 0.0
        raise DomainError("zero base with negative exponent")
    try:
        return a ** b
    except OverflowError:
        raise DomainError("overflow in power") from None


def _float_ln(x: float) -> float:
    if x <= 0.0:
        raise DomainError("ln of a non-positive value")
    return math.log(x)


def _float_sqrt(x: float) -> float:
    if x < 0.0:
        raise DomainError("square root of a negative value")
    return math.sqrt(x)


def _float_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        raise DomainError("overflow in exp") from None


_FLOAT_FUNCS = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": _float_exp,
    "ln": _float_ln,
    "sqrt": _float_sqrt,
    "abs": abs,
}


class _FloatOps:
    @staticmethod
    def const(v: float) -> float:
        return float(v)

    @staticmethod
    def neg(a: float) -> float:
        return -a

    @staticmethod
    def binary(op: str, a: float, b: float) -> float:
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if b == 0.0:
                raise DomainError("division by zero")
            return a / b
        return _float_pow(a, b)

    @staticmethod
    def call(name: str, a: float) -> float:
        return _FLOAT_FUNCS[name](a)


class _DualOps:
    def __init__(self, ndirections: int):
        self.ndirections = ndirections

    def const(self, v: float) -> DualScalar:
        return DualScalar.constant(v, self.ndirections)

    @staticmethod
    def neg(a: DualScalar) -> DualScalar:
        return -a

    @staticmethod
    def binary(op: str, a: DualScalar, b: DualScalar) -> DualScalar:
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return a / b
        return a ** b

    @staticmethod
    def call(name: str, a: DualScalar) -> DualScalar:
        if name == "abs":
            return abs(a)
        return getattr(a, name)()


def _evaluate(node: Node, env, ops, variables):
    try:
        if isinstance(node, Num):
            return ops.const(node.value)
        if isinstance(node, Var):
            return env[node.index]
        if isinstance(node, Neg):
            return ops.neg(_evaluate(node.operand, env, ops, variables))
        if isinstance(node, BinOp):
            left = _evaluate(node.left, env, ops, variables)
            right = _evaluate(node.right, env, ops, variables)
            return ops.binary(node.op, left, right)
        if isinstance(node, Call):
            return ops.call(node.func, _evaluate(node.arg, env, ops, variables))
    except DomainError as err:
        if err.fragment is None:
            raise DomainError(err.reason, offset=node.offset,
                              fragment=_render(node, variables, 0)) from None
        raise
    raise TypeError(f"not an AST node: {node!r}")


def _check_point(expr: Expression, point) -> np.ndarray:
    values = np.asarray(point, dtype=float)
    if values.shape != (len(expr.variables),):
        raise ValueError(
            f"point has shape {values.shape}, expected ({len(expr.variables)},)")
    return values


def evaluate(expr: Expression, point) -> float:
    """Value of the expression at the point; raises DomainError at singular
    operations, locating the offending sub-expression."""
    values = _check_point(expr, point)
    return float(_evaluate(expr.root, list(values), _FloatOps, expr.variables))


def value_gradient_hessian(expr: Expression, point) -> tuple[float, np.ndarray, np.ndarray]:
    """Single forward sweep returning value, exact gradient, exact Hessian."""
    values = _check_point(expr, point)
    m = len(values)
    env = [DualScalar.seed(v, i, m) for i, v in enumerate(values)]
    out = _evaluate(expr.root, env, _DualOps(m), expr.variables)
    return out.value, out.first.copy(), out.second.copy()


def gradient(expr: Expression, point) -> np.ndarray:
    return value_gradient_hessian(expr, point)[1]


def hessian(expr: Expression, point) -> np.ndarray:
    return value_gradient_hessian(expr, point)[2]


# ---------------------------------------------------------------------------
# Tokenizer and recursive-descent parser


@dataclass(frozen=True)
class _Token:
    kind: str  # "num" | "ident" | "op" | "end"
    text: str
    offset: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    i = 0
    n = len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit():
            start = i
            while i < n and source[i].isdigit():
                i += 1
            if i < n and source[i] == ".":
                i += 1
                while i < n and source[i].isdigit():
                    i += 1
            if i < n and source[i] in "eE":
                j = i + 1
                if j < n and source[j] in "+-":
                    j += 1
                if j >= n or not source[j].isdigit():
                    raise ParseError("malformed number", j, expected="exponent digits")
                i = j
                while i < n and source[i].isdigit():
                    i += 1
            tokens.append(_Token("num", source[start:i], start))
            continue
        if c.isalpha() or c == "_":
            start = i
            while i < n and (source[i].isalnum() or source[i] == "_"):
                i += 1
            tokens.append(_Token("ident", source[start:i], start))
            continue
        if c in "+-*/^()":
            tokens.append(_Token("op", c, i))
            i += 1
            continue
        raise ParseError(f"unexpected character {c!r}", i,
                         expected="a number, identifier, or operator")
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], variables: Sequence[str]):
        self.tokens = tokens
        self.pos = 0
        self.index = {name: k for k, name in enumerate(variables)}

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def match_op(self, chars: str) -> _Token | None:
        tok = self.peek()
        if tok.kind == "op" and tok.text in chars:
            return self.take()
        return None

    def expect_op(self, char: str) -> _Token:
        tok = self.peek()
        if tok.kind == "op" and tok.text == char:
            return self.take()
        raise ParseError(self._describe(tok), tok.offset, expected=repr(char))

    @staticmethod
    def _describe(tok: _Token) -> str:
        return "unexpected end of input" if tok.kind == "end" else f"unexpected {tok.text!r}"

    def expression(self) -> Node:
        node = self.term()
        while (tok := self.match_op("+-")) is not None:
            node = BinOp(tok.text, node, self.term(), offset=tok.offset)
        return node

    def term(self) -> Node:
        node = self.unary()
        while (tok := self.match_op("*/")) is not None:
            node = BinOp(tok.text, node, self.unary(), offset=tok.offset)
        return node

    def unary(self) -> Node:
        if (tok := self.match_op("-")) is not None:
            return Neg(self.unary(), offset=tok.offset)
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if (tok := self.match_op("^")) is not None:
            return BinOp("^", base, self.unary(), offset=tok.offset)
        return base

    def atom(self) -> Node:
        tok = self.peek()
        if tok.kind == "num":
            self.take()
            return Num(float(tok.text), offset=tok.offset)
        if tok.kind == "ident":
            self.take()
            if tok.text in self.index:
                return Var(self.index[tok.text], offset=tok.offset)
            if tok.text in FUNCTION_NAMES:
                self.expect_op("(")
                arg = self.expression()
                self.expect_op(")")
                return Call(tok.text, arg, offset=tok.offset)
            raise UnknownIdentifierError(tok.text, tok.offset)
        if tok.kind == "op" and tok.text == "(":
            self.take()
            node = self.expression()
            self.expect_op(")")
            return node
        raise ParseError(self._describe(tok), tok.offset, expected="an expression")


def parse(source: str, variables: Sequence[str]) -> Expression:
    """Parse infix text over the given ordered variable names.

    Grammar: + - * / ^ with standard precedence, ^ right-associative,
    unary minus binding below ^, parentheses, decimal and scientific
    number literals, and the functions sin, cos, exp, ln, sqrt, abs.
    """
    names = tuple(variables)
    if not source or not source.strip():
        raise ParseError("empty input", 0, expected="an expression")
    parser = _Parser(_tokenize(source), names)
    root = parser.expression()
    trailing = parser.peek()
    if trailing.kind != "end":
        raise ParseError(parser._describe(trailing), trailing.offset,
                         expected="end of input or an operator")
    return Expression(root=root, variables=names)


# ---------------------------------------------------------------------------
# Serialization (round-trips through parse with identical evaluation)

_BIN_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
# (left slot, right slot) minimum precedence: the right slot of - and / is
# raised one level so reparsing cannot reassociate, and the left slot of ^
# demands an atom so exponent towers stay right-associated.
_SLOT_PREC = {"+": (1, 2), "-": (1, 2), "*": (2, 3), "/": (2, 3), "^": (5, 3)}


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _BIN_PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Num) and math.copysign(1.0, node.value) < 0:
        return 3  # renders with a leading minus sign
    return 5


def _number_text(value: float) -> str:
    # Integer-valued floats print without the trailing .0; repr otherwise.
    # Both forms re-tokenize to the identical float.
    if value.is_integer() and abs(value) < 1e16 and math.copysign(1.0, value) > 0:
        return str(int(value))
    return repr(value)


def _render(node: Node, variables: Sequence[str], min_prec: int) -> str:
    if isinstance(node, Num):
        text = _number_text(node.value)
    elif isinstance(node, Var):
        text = variables[node.index]
    elif isinstance(node, Neg):
        text = "-" + _render(node.operand, variables, 3)
    elif isinstance(node, BinOp):
        lmin, rmin = _SLOT_PREC[node.op]
        text = (_render(node.left, variables, lmin) + node.op
                + _render(node.right, variables, rmin))
    elif isinstance(node, Call):
        text = f"{node.func}({_render(node.arg, variables, 0)})"
    else:
        raise TypeError(f"not an AST node: {node!r}")
    if _prec(node) < min_prec:
        return f"({text})"
    return text


def to_source(expr: Expression) -> str:
    return str(expr)


# ---------------------------------------------------------------------------
# AST rewrites used by model construction


def _transform(node: Node, fn) -> Node:
    if isinstance(node, Var):
        return fn(node)
    if isinstance(node, Neg):
        return Neg(_transform(node.operand, fn), offset=node.offset)
    if isinstance(node, BinOp):
        return BinOp(node.op, _transform(node.left, fn), _transform(node.right, fn),
                     offset=node.offset)
    if isinstance(node, Call):
        return Call(node.func, _transform(node.arg, fn), offset=node.offset)
    return node


def shift_variables(expr: Expression, offsets) -> Expression:
    """Substitute every variable v_i by (v_i + offsets[i])."""
    shifts = np.asarray(offsets, dtype=float)
    if shifts.shape != (len(expr.variables),):
        raise ValueError(
            f"offsets have shape {shifts.shape}, expected ({len(expr.variables)},)")

    def rewrite(var: Var) -> Node:
        c = float(shifts[var.index])
        if c == 0.0:
            return var
        return BinOp("+", Var(var.index), Num(c))

    return Expression(root=_transform(expr.root, rewrite), variables=expr.variables)


def remap_variables(expr: Expression, variables: Sequence[str], index_map) -> Expression:
    """Rebase the expression onto a new variable list; old index i becomes
    index_map[i]."""
    names = tuple(variables)

    def rewrite(var: Var) -> Node:
        return Var(int(index_map[var.index]))

    return Expression(root=_transform(expr.root, rewrite), variables=names)
