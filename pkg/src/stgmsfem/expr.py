"""Arithmetic expressions over (x, y, t) for initial and inflow data.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | 'x' | 'y' | 't' | 'pi' | FUNC '(' expr ')' | '(' expr ')'

``^`` is right-associative and binds tighter than unary minus on its left
(``-2^2 == -4``).  Functions: sin, cos, exp.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
VARS = ("x", "y", "t")
CONSTS = {"pi": np.pi}

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(\S))")


class ExpressionError(ValueError):
    def __init__(self, message: str, text: str, pos: int):
        super().__init__(f"{message} at position {pos}: {text!r}")
        self.pos = pos


@dataclass(frozen=True)
class _Tok:
    kind: str  # num, name, op, end
    value: str
    pos: int


def _tokens(text: str) -> list[_Tok]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:  # only trailing whitespace left
            break
        start = m.start(m.lastindex)
        num, name, op = m.groups()
        if num is not None:
            out.append(_Tok("num", num, start))
        elif name is not None:
            out.append(_Tok("name", name, start))
        else:
            if op not in "+-*/^()":
                raise ExpressionError(f"unexpected character {op!r}", text, start)
            out.append(_Tok("op", op, start))
        pos = m.end()
    out.append(_Tok("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokens(text)
        self.i = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, op: str) -> None:
        if self.cur.kind != "op" or self.cur.value != op:
            found = self.cur.value or "end of input"
            raise ExpressionError(f"expected {op!r}, found {found!r}", self.text, self.cur.pos)
        self.take()

    def parse(self):
        node = self.expr()
        if self.cur.kind != "end":
            raise ExpressionError(f"unexpected {self.cur.value!r}", self.text, self.cur.pos)
        return node

    def expr(self):
        node = self.term()
        while self.cur.kind == "op" and self.cur.value in "+-":
            op = self.take().value
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.cur.kind == "op" and self.cur.value in "*/":
            op = self.take().value
            node = (op, node, self.unary())
        return node

    def unary(self):
        if self.cur.kind == "op" and self.cur.value in "+-":
            op = self.take().value
            operand = self.unary()
            return ("neg", operand) if op == "-" else operand
        return self.power()

    def power(self):
        base = self.atom()
        if self.cur.kind == "op" and self.cur.value == "^":
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        tok = self.cur
        if tok.kind == "num":
            self.take()
            return ("num", float(tok.value))
        if tok.kind == "name":
            self.take()
            if tok.value in VARS:
                return ("var", tok.value)
            if tok.value in CONSTS:
                return ("num", CONSTS[tok.value])
            if tok.value in FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return ("call", tok.value, arg)
            raise ExpressionError(f"unknown identifier {tok.value!r}", self.text, tok.pos)
        if tok.kind == "op" and tok.value == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        found = tok.value or "end of input"
        raise ExpressionError(f"unexpected {found!r}", self.text, tok.pos)


def _eval(node, env):
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "var":
        return env[node[1]]
    if kind == "neg":
        return -_eval(node[1], env)
    if kind == "call":
        return FUNCS[node[1]](_eval(node[2], env))
    a, b = _eval(node[1], env), _eval(node[2], env)
    if kind == "+":
        return a + b
    if kind == "-":
        return a - b
    if kind == "*":
        return a * b
    if kind == "/":
        return np.divide(a, b)
    return np.power(a, b)


def _uses(node) -> set[str]:
    if node[0] == "var":
        return {node[1]}
    return set().union(*(_uses(c) for c in node[1:] if isinstance(c, tuple)))


@dataclass(frozen=True)
class Expression:
    text: str
    tree: tuple

    @property
    def variables(self) -> set[str]:
        return _uses(self.tree)

    def __call__(self, x=0.0, y=0.0, t=0.0):
        x, y, t = (np.asarray(v, dtype=np.float64) for v in (x, y, t))
        val = _eval(self.tree, {"x": x, "y": y, "t": t})
        return np.broadcast_to(np.asarray(val, dtype=np.float64), np.broadcast_shapes(x.shape, y.shape, t.shape))

    def spatial(self, t: float = 0.0) -> Callable:
        """``f(x, y)`` with ``t`` frozen (initial data)."""
        return lambda x, y: self(x, y, t)


def parse_expression(text: str) -> Expression:
    if not isinstance(text, str):
        raise TypeError("expression must be a string")
    return Expression(text, _Parser(text).parse())
