"""Scalar expression language: parsing, rendering, tape compilation.

Grammar (standard infix):

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right-associative, binds tighter
    atom    := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Functions: exp, log, sin, cos, sqrt.  Identifiers match
[a-zA-Z][a-zA-Z0-9_]* and must be declared in the surrounding scope.
`a ^ b` with a non-constant exponent is evaluated as exp(b*log(a)) and
therefore requires a > 0; a constant exponent is folded at compile time.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from . import backend as B
from .errors import ExprSyntaxError, UnknownIdentifierError

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")

_FN_OPCODE = {
    "exp": B.OP_EXP,
    "log": B.OP_LOG,
    "sin": B.OP_SIN,
    "cos": B.OP_COS,
    "sqrt": B.OP_SQRT,
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Name:
    ident: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    lhs: "Node"
    rhs: "Node"


Node = Num | Name | Neg | Call | BinOp


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[a-zA-Z][a-zA-Z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(src):
    pos = 0
    tokens = []
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            stripped = src[pos:].lstrip()
            if not stripped:
                break
            at = len(src) - len(stripped)
            raise ExprSyntaxError(f"unexpected character '{src[at]}'", at)
        if m.lastgroup == "num":
            tokens.append(("num", float(m.group("num")), m.start("num")))
        elif m.lastgroup == "name":
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", None, len(src)))
    return tokens


class _Parser:
    def __init__(self, tokens, scope):
        self.tokens = tokens
        self.scope = scope
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, symbol):
        kind, val, pos = self.next()
        if kind != "op" or val != symbol:
            raise ExprSyntaxError(f"found {val!r}", pos, expected=repr(symbol))

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"trailing input {val!r}", pos, expected="end of expression")
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                rhs = self.term()
                node = BinOp(val, node, rhs)
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.next()
                rhs = self.unary()
                node = BinOp(val, node, rhs)
            else:
                return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.next()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.next()
            return BinOp("^", node, self.unary())
        return node

    def atom(self):
        kind, val, pos = self.next()
        if kind == "num":
            return Num(val)
        if kind == "name":
            if val in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(val, arg)
            if val not in self.scope:
                raise UnknownIdentifierError(val, pos)
            return Name(val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExprSyntaxError(f"found {val!r}", pos, expected="number, name or '('")


_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def render(node):
    """Infix rendering; reparsing yields an equal tree."""

    def fmt_num(v):
        if v == int(v) and abs(v) < 1e15:
            return str(int(v))
        return repr(v)

    def go(n, parent_prec, right_side):
        if isinstance(n, Num):
            return fmt_num(n.value)
        if isinstance(n, Name):
            return n.ident
        if isinstance(n, Call):
            return f"{n.fn}({go(n.arg, 0, False)})"
        if isinstance(n, Neg):
            inner = go(n.arg, _PRECEDENCE["neg"], False)
            text = f"-{inner}"
            return f"({text})" if parent_prec > _PRECEDENCE["neg"] else text
        prec = _PRECEDENCE[n.op]
        if n.op == "^":
            # Right-associative; exponent may be a unary chain.
            lhs = go(n.lhs, prec + 1, False)
            rhs = go(n.rhs, prec, True)
            text = f"{lhs}^{rhs}"
        else:
            lhs = go(n.lhs, prec, False)
            rhs = go(n.rhs, prec + 1, True)
            text = f"{lhs} {n.op} {rhs}"
        need = parent_prec > prec or (parent_prec == prec and right_side)
        return f"({text})" if need else text

    return go(node, 0, False)


def _const_value(node):
    """Value of a variable-free subtree, or None if it contains names."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Name):
        return None
    if isinstance(node, Neg):
        v = _const_value(node.arg)
        return None if v is None else -v
    if isinstance(node, Call):
        v = _const_value(node.arg)
        if v is None:
            return None
        fn = getattr(math, node.fn)
        try:
            return fn(v)
        except ValueError:
            from .errors import EvalDomainError

            raise EvalDomainError(node.fn, v)
    lv = _const_value(node.lhs)
    rv = _const_value(node.rhs)
    if lv is None or rv is None:
        return None
    if node.op == "+":
        return lv + rv
    if node.op == "-":
        return lv - rv
    if node.op == "*":
        return lv * rv
    if node.op == "/":
        if rv == 0:
            from .errors import EvalDomainError

            raise EvalDomainError("divide", rv)
        return lv / rv
    return lv ** rv


class Tape:
    __slots__ = ("ops", "consts", "source_nodes")

    def __init__(self, ops, consts, source_nodes):
        self.ops = ops
        self.consts = consts
        self.source_nodes = source_nodes


def compile_tape(node, coords, params):
    """Flatten an AST into instruction arrays (one register per instruction)."""
    coord_ix = {c: i for i, c in enumerate(coords)}
    param_ix = {p: i for i, p in enumerate(params)}
    ops, consts, nodes = [], [], []

    def emit(op, a1, a2, const, src):
        ops.append((op, a1, a2))
        consts.append(const)
        nodes.append(src)
        return len(ops) - 1

    def go(n):
        if isinstance(n, Num):
            return emit(B.OP_CONST, 0, 0, n.value, n)
        if isinstance(n, Name):
            if n.ident in coord_ix:
                return emit(B.OP_VAR, coord_ix[n.ident], 0, 0.0, n)
            if n.ident in param_ix:
                return emit(B.OP_PARAM, param_ix[n.ident], 0, 0.0, n)
            raise UnknownIdentifierError(n.ident)
        if isinstance(n, Neg):
            return emit(B.OP_NEG, go(n.arg), 0, 0.0, n)
        if isinstance(n, Call):
            return emit(_FN_OPCODE[n.fn], go(n.arg), 0, 0.0, n)
        if n.op == "^":
            ev = _const_value(n.rhs)
            if ev is not None:
                a = go(n.lhs)
                if ev == int(ev) and abs(ev) <= 64:
                    return emit(B.OP_POWI, a, 0, float(int(ev)), n)
                return emit(B.OP_POWR, a, 0, ev, n)
            # Variable exponent: a^b = exp(b * log(a)), a > 0 enforced at eval.
            a = go(n.lhs)
            la = emit(B.OP_LOG, a, 0, 0.0, n)
            b = go(n.rhs)
            m = emit(B.OP_MUL, b, la, 0.0, n)
            return emit(B.OP_EXP, m, 0, 0.0, n)
        opcode = {"+": B.OP_ADD, "-": B.OP_SUB, "*": B.OP_MUL, "/": B.OP_DIV}[n.op]
        a = go(n.lhs)
        b = go(n.rhs)
        return emit(opcode, a, b, 0.0, n)

    go(node)
    return Tape(np.array(ops, dtype=np.int64).reshape(len(ops), 3),
                np.array(consts), nodes)


class Expression:
    """A parsed expression bound to an ordered scope of coordinates and parameters."""

    def __init__(self, root, coords, params=()):
        self.root = root
        self.coords = tuple(coords)
        self.params = tuple(params)
        self._tape = None

    @property
    def tape(self):
        if self._tape is None:
            self._tape = compile_tape(self.root, self.coords, self.params)
        return self._tape

    def render(self):
        return render(self.root)

    def __eq__(self, other):
        return (
            isinstance(other, Expression)
            and self.root == other.root
            and self.coords == other.coords
            and self.params == other.params
        )

    def __hash__(self):
        return hash((self.root, self.coords, self.params))

    def __repr__(self):
        return f"Expression({self.render()!r}, coords={self.coords}, params={self.params})"


def parse_expression(src, coords, params=()):
    """Parse `src` over the given scope; rejects undeclared identifiers."""
    if not src or not src.strip():
        raise ExprSyntaxError("empty expression", 0, expected="an expression")
    coords = tuple(coords)
    params = tuple(params)
    names = coords + params
    if len(set(names)) != len(names):
        raise ValueError(f"scope names not distinct: {names}")
    for nm in names:
        if nm in FUNCTIONS:
            raise ValueError(f"scope name '{nm}' collides with a function name")
    root = _Parser(_tokenize(src), set(names)).parse()
    return Expression(root, coords, params)
