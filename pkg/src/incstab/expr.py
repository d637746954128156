"""Scalar expression language: parsing, printing, evaluation, forward-mode AD.

Grammar (lowest to highest precedence)::

    sum     := product (('+' | '-') product)*
    product := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right-associative, binds tightest
    atom    := NUMBER | NAME | FUNC '(' sum ')' | '(' sum ')'

``-x^2`` is ``-(x^2)`` and ``2^3^2`` is ``2^(3^2)``.  The variable ``t`` is
reserved for time.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import EvalDomainError, ExprSyntaxError, PreconditionError
from .kernels import opcodes as oc

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "tanh")
BINARY_OPS = ("+", "-", "*", "/", "^")


class Expr:
    """Base class of expression tree nodes. Nodes are immutable."""

    __slots__ = ()

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise PreconditionError(f"non-finite constant {self.value!r}")


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Call(Expr):
    func: str
    arg: Expr


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


def _tokenize(source):
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            # only trailing whitespace can produce an empty match
            rest = source[pos:]
            if rest.strip() == "":
                break
            bad = pos + (len(rest) - len(rest.lstrip()))
            raise ExprSyntaxError(f"unexpected character {source[bad]!r}", bad, source)
        kind = m.lastgroup
        if kind is None:
            break
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def fail(self, message, offset=None):
        raise ExprSyntaxError(message, self.tok[2] if offset is None else offset, self.source)

    def parse(self):
        e = self.sum()
        if self.tok[0] != "end":
            if self.tok[1] == ")":
                self.fail("unbalanced ')'")
            self.fail(f"unexpected token {self.tok[1]!r}")
        return e

    def sum(self):
        e = self.product()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.advance()[1]
            e = BinOp(op, e, self.product())
        return e

    def product(self):
        e = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.advance()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self):
        if self.tok[0] == "op" and self.tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, offset = self.tok
        if kind == "num":
            self.advance()
            return Const(float(text))
        if kind == "name":
            self.advance()
            if self.tok[0] == "op" and self.tok[1] == "(":
                if text not in FUNCTIONS:
                    self.fail(f"unknown function {text!r}", offset)
                self.advance()
                arg = self.sum()
                self.expect_close(offset)
                return Call(text, arg)
            return Var(text)
        if kind == "op" and text == "(":
            self.advance()
            e = self.sum()
            self.expect_close(offset)
            return e
        if kind == "end":
            self.fail("expected operand, found end of input")
        self.fail(f"expected operand, found {text!r}")

    def expect_close(self, open_offset):
        if self.tok[0] == "op" and self.tok[1] == ")":
            self.advance()
            return
        if self.tok[0] == "end":
            self.fail(f"unbalanced '(' opened at offset {open_offset}")
        self.fail(f"expected ')', found {self.tok[1]!r}")


def parse(source: str) -> Expr:
    """Parse ``source`` into an expression tree.

    Raises :class:`ExprSyntaxError` carrying the byte offset of the fault.
    """
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0, source)
    return _Parser(source).parse()


def to_text(e: Expr) -> str:
    """Canonical fully-parenthesised form; ``parse(to_text(e))`` evaluates identically."""
    if isinstance(e, Const):
        if e.value < 0 or (e.value == 0 and math.copysign(1.0, e.value) < 0):
            return f"(-{repr(-e.value)})"
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_text(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_text(e.left)} {e.op} {to_text(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    raise TypeError(f"not an expression: {e!r}")


def variables(e: Expr) -> frozenset:
    """Names of all variables referenced by ``e`` (including ``t``)."""
    out = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Neg):
            stack.append(node.arg)
        elif isinstance(node, BinOp):
            stack.extend((node.left, node.right))
        elif isinstance(node, Call):
            stack.append(node.arg)
    return frozenset(out)


def substitute(e: Expr, mapping: Mapping[str, Expr | float]) -> Expr:
    """Replace variables by expressions or constants."""
    if isinstance(e, Var):
        if e.name in mapping:
            rep = mapping[e.name]
            return rep if isinstance(rep, Expr) else Const(float(rep))
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, BinOp):
        return BinOp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Call):
        return Call(e.func, substitute(e.arg, mapping))
    return e


# ---------------------------------------------------------------------------
# dual numbers


@dataclass(frozen=True)
class Dual:
    """value + deriv·ε with ε² = 0; ``deriv`` is a directional derivative."""

    value: float
    deriv: float = 0.0

    def __add__(self, other):
        other = _lift(other)
        return Dual(self.value + other.value, self.deriv + other.deriv)

    __radd__ = __add__

    def __sub__(self, other):
        other = _lift(other)
        return Dual(self.value - other.value, self.deriv - other.deriv)

    def __rsub__(self, other):
        return _lift(other) - self

    def __mul__(self, other):
        other = _lift(other)
        return Dual(self.value * other.value, self.value * other.deriv + self.deriv * other.value)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _lift(other)
        return dual_div(self, other)

    def __rtruediv__(self, other):
        return dual_div(_lift(other), self)

    def __neg__(self):
        return Dual(-self.value, -self.deriv)

    def __pow__(self, other):
        return dual_pow(self, _lift(other))


def _lift(x):
    return x if isinstance(x, Dual) else Dual(float(x), 0.0)


def _finite(*xs):
    for x in xs:
        if not math.isfinite(x):
            raise EvalDomainError("non-finite result")


def dual_div(a: Dual, b: Dual) -> Dual:
    if b.value == 0.0:
        raise EvalDomainError("division by zero")
    return Dual(a.value / b.value, (a.deriv * b.value - a.value * b.deriv) / (b.value * b.value))


def _check_pow(a, b):
    if a < 0.0 and b != math.floor(b):
        raise EvalDomainError("negative base with non-integer exponent")
    if a == 0.0 and b < 0.0:
        raise EvalDomainError("division by zero")


def _pow(a, b):
    _check_pow(a, b)
    try:
        return math.pow(a, b)
    except OverflowError:
        raise EvalDomainError("non-finite result") from None


def dual_pow(a: Dual, b: Dual) -> Dual:
    v = _pow(a.value, b.value)
    d = 0.0
    if a.deriv != 0.0 and b.value != 0.0:
        d = b.value * _pow(a.value, b.value - 1.0) * a.deriv
    if b.deriv != 0.0:
        if a.value > 0.0:
            d = d + v * math.log(a.value) * b.deriv
        elif not (a.value == 0.0 and b.value > 0.0):
            raise EvalDomainError("exponent derivative undefined for non-positive base")
    return Dual(v, d)


def _exp(a):
    try:
        return math.exp(a)
    except OverflowError:
        raise EvalDomainError("non-finite result") from None


def _log(a):
    if a <= 0.0:
        raise EvalDomainError("log of non-positive argument")
    return math.log(a)


def _sqrt(a):
    if a < 0.0:
        raise EvalDomainError("sqrt of negative argument")
    return math.sqrt(a)


def dual_call(func: str, a: Dual) -> Dual:
    x, dx = a.value, a.deriv
    if func == "sin":
        return Dual(math.sin(x), math.cos(x) * dx)
    if func == "cos":
        return Dual(math.cos(x), -math.sin(x) * dx)
    if func == "exp":
        v = _exp(x)
        return Dual(v, v * dx)
    if func == "log":
        v = _log(x)
        return Dual(v, dx / x)
    if func == "sqrt":
        v = _sqrt(x)
        if v == 0.0:
            if dx != 0.0:
                raise EvalDomainError("sqrt derivative at zero")
            return Dual(0.0, 0.0)
        return Dual(v, dx / (2.0 * v))
    if func == "tanh":
        v = math.tanh(x)
        return Dual(v, (1.0 - v * v) * dx)
    raise ValueError(f"unknown function {func!r}")


def _call(func, x):
    if func == "sin":
        return math.sin(x)
    if func == "cos":
        return math.cos(x)
    if func == "exp":
        return _exp(x)
    if func == "log":
        return _log(x)
    if func == "sqrt":
        return _sqrt(x)
    if func == "tanh":
        return math.tanh(x)
    raise ValueError(f"unknown function {func!r}")


def _binop(op, a, b):
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0.0:
            raise EvalDomainError("division by zero")
        return a / b
    return _pow(a, b)


def _dual_binop(op, a, b):
    if op == "+":
        return Dual(a.value + b.value, a.deriv + b.deriv)
    if op == "-":
        return Dual(a.value - b.value, a.deriv - b.deriv)
    if op == "*":
        return Dual(a.value * b.value, a.value * b.deriv + a.deriv * b.value)
    if op == "/":
        return dual_div(a, b)
    return dual_pow(a, b)


# ---------------------------------------------------------------------------
# evaluation


def _lookup(name, env, t):
    if name == "t":
        return t
    try:
        return float(env[name])
    except KeyError:
        raise PreconditionError(f"unbound variable {name!r}") from None


def evaluate(e: Expr, env: Mapping[str, float], t: float = 0.0) -> float:
    """Evaluate ``e`` in double precision; ``t`` binds the time variable."""
    try:
        if isinstance(e, Const):
            return e.value
        if isinstance(e, Var):
            return _lookup(e.name, env, t)
        if isinstance(e, Neg):
            return -evaluate(e.arg, env, t)
        if isinstance(e, BinOp):
            v = _binop(e.op, evaluate(e.left, env, t), evaluate(e.right, env, t))
        else:
            v = _call(e.func, evaluate(e.arg, env, t))
        _finite(v)
        return v
    except EvalDomainError as err:
        if err.expr is None:
            raise EvalDomainError(err.reason, e) from None
        raise


def evaluate_dual(e: Expr, env: Mapping[str, float], t: float = 0.0,
                  seed: Mapping[str, float] | None = None) -> Dual:
    """Value and directional derivative of ``e`` along ``seed`` (variable -> tangent)."""
    seed = seed or {}
    try:
        if isinstance(e, Const):
            return Dual(e.value, 0.0)
        if isinstance(e, Var):
            return Dual(_lookup(e.name, env, t), float(seed.get(e.name, 0.0)))
        if isinstance(e, Neg):
            a = evaluate_dual(e.arg, env, t, seed)
            return Dual(-a.value, -a.deriv)
        if isinstance(e, BinOp):
            r = _dual_binop(e.op, evaluate_dual(e.left, env, t, seed),
                            evaluate_dual(e.right, env, t, seed))
        else:
            r = dual_call(e.func, evaluate_dual(e.arg, env, t, seed))
        _finite(r.value, r.deriv)
        return r
    except EvalDomainError as err:
        if err.expr is None:
            raise EvalDomainError(err.reason, e) from None
        raise


def jacobian(field: Sequence[Expr], env: Mapping[str, float], t: float,
             wrt: Sequence[str]) -> np.ndarray:
    """Exact Jacobian d field_i / d wrt_j, one dual pass per column."""
    env = dict(env)
    for name in wrt:
        if name != "t" and name not in env:
            raise PreconditionError(f"unbound variable {name!r}")
    J = np.empty((len(field), len(wrt)))
    for j, name in enumerate(wrt):
        seed = {name: 1.0}
        for i, e in enumerate(field):
            J[i, j] = evaluate_dual(e, env, t, seed).deriv
    return J


def fd_jacobian(field: Sequence[Expr], env: Mapping[str, float], t: float,
                wrt: Sequence[str], h: float) -> np.ndarray:
    """Central-difference Jacobian; the test oracle for :func:`jacobian`."""
    if not h > 0.0:
        raise PreconditionError("finite-difference step h must be positive")
    J = np.empty((len(field), len(wrt)))
    for j, name in enumerate(wrt):
        plus = dict(env)
        minus = dict(env)
        tp = tm = t
        if name == "t":
            tp, tm = t + h, t - h
        else:
            plus[name] = env[name] + h
            minus[name] = env[name] - h
        for i, e in enumerate(field):
            J[i, j] = (evaluate(e, plus, tp) - evaluate(e, minus, tm)) / (2.0 * h)
    return J


# ---------------------------------------------------------------------------
# compilation to the postfix form consumed by the kernels

_BINOP_CODES = {"+": oc.ADD, "-": oc.SUB, "*": oc.MUL, "/": oc.DIV, "^": oc.POW}
_CALL_CODES = {"sin": oc.SIN, "cos": oc.COS, "exp": oc.EXP,
               "log": oc.LOG, "sqrt": oc.SQRT, "tanh": oc.TANH}


@dataclass(frozen=True)
class Program:
    """Postfix instruction stream for one expression.

    ``args`` holds the constant index for CONST and the variable slot for VAR.
    ``nodes[k]`` is the subexpression whose value instruction ``k`` produces.
    """

    ops: np.ndarray
    args: np.ndarray
    consts: np.ndarray
    nodes: tuple
    variables: tuple

    def __len__(self):
        return len(self.ops)


def compile_expr(e: Expr, slots: Sequence[str]) -> Program:
    """Compile ``e`` against an ordered variable layout (``t`` included if used)."""
    index = {name: k for k, name in enumerate(slots)}
    ops, args, nodes, consts = [], [], [], []

    def emit(node):
        if isinstance(node, Const):
            ops.append(oc.CONST)
            args.append(len(consts))
            consts.append(node.value)
        elif isinstance(node, Var):
            if node.name not in index:
                raise PreconditionError(f"variable {node.name!r} not in layout")
            ops.append(oc.VAR)
            args.append(index[node.name])
        elif isinstance(node, Neg):
            emit(node.arg)
            ops.append(oc.NEG)
            args.append(0)
        elif isinstance(node, BinOp):
            emit(node.left)
            emit(node.right)
            ops.append(_BINOP_CODES[node.op])
            args.append(0)
        else:
            emit(node.arg)
            ops.append(_CALL_CODES[node.func])
            args.append(0)
        nodes.append(node)

    emit(e)
    return Program(
        ops=np.asarray(ops, dtype=np.int32),
        args=np.asarray(args, dtype=np.int32),
        consts=np.asarray(consts, dtype=np.float64),
        nodes=tuple(nodes),
        variables=tuple(slots),
    )
