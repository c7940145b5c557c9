"""Tiny arithmetic-expression compiler for directions and kernels.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | 'sqrt' '(' expr ')' | '(' expr ')'

Names are the declared variables (``x`` by default, ``x`` and ``y`` for
bivariate functions). Compiled functions accept numpy arrays.
"""

import re
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError

_TOKEN = re.compile(r"\s*(?:(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?|([A-Za-z_]\w*)|(\S))")


def _tokenize(text: str) -> list:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None:
            raise ConfigError(f"Cannot parse expression {text!r} at position {pos}")
        number, exponent, name, op = match.groups()
        if number is not None:
            tokens.append(("num", float(number + (exponent or "")), match.start(1)))
        elif name is not None:
            tokens.append(("name", name, match.start(3)))
        else:
            if op not in "+-*/^()":
                raise ConfigError(f"Unexpected character {op!r} in expression {text!r}")
            tokens.append(("op", op, match.start(4)))
        pos = match.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.variables = tuple(variables)
        self.tokens = _tokenize(text)
        self.index = 0

    def _peek(self):
        return self.tokens[self.index]

    def _next(self):
        token = self.tokens[self.index]
        self.index += 1
        return token

    def _fail(self, message: str):
        _, _, pos = self._peek()
        raise ConfigError(f"{message} in expression {self.text!r} at position {pos}")

    def _expect(self, op: str):
        kind, value, _ = self._peek()
        if kind != "op" or value != op:
            self._fail(f"Expected {op!r}")
        self._next()

    def parse(self):
        node = self._expr()
        if self._peek()[0] != "end":
            self._fail("Unexpected trailing input")
        return node

    def _expr(self):
        node = self._term()
        while self._peek()[:2] in (("op", "+"), ("op", "-")):
            op = self._next()[1]
            rhs = self._term()
            node = _binary(op, node, rhs)
        return node

    def _term(self):
        node = self._unary()
        while self._peek()[:2] in (("op", "*"), ("op", "/")):
            op = self._next()[1]
            rhs = self._unary()
            node = _binary(op, node, rhs)
        return node

    def _unary(self):
        kind, value, _ = self._peek()
        if kind == "op" and value in "+-":
            self._next()
            operand = self._unary()
            if value == "-":
                return lambda env, f=operand: -f(env)
            return operand
        return self._power()

    def _power(self):
        base = self._atom()
        if self._peek()[:2] == ("op", "^"):
            self._next()
            exponent = self._unary()
            return _binary("^", base, exponent)
        return base

    def _atom(self):
        kind, value, _ = self._next()
        if kind == "num":
            return lambda env, c=value: c
        if kind == "name":
            if value == "sqrt":
                self._expect("(")
                inner = self._expr()
                self._expect(")")
                return lambda env, f=inner: np.sqrt(f(env))
            if value not in self.variables:
                self.index -= 1
                self._fail(f"Unknown name {value!r}")
            return lambda env, name=value: env[name]
        if kind == "op" and value == "(":
            inner = self._expr()
            self._expect(")")
            return inner
        self.index -= 1
        self._fail("Unexpected token")


def _binary(op: str, lhs, rhs):
    if op == "+":
        return lambda env: lhs(env) + rhs(env)
    if op == "-":
        return lambda env: lhs(env) - rhs(env)
    if op == "*":
        return lambda env: lhs(env) * rhs(env)
    if op == "/":
        return lambda env: lhs(env) / rhs(env)
    return lambda env: np.power(lhs(env), rhs(env))


def compile_expression(text: str, variables: Sequence[str] = ("x",)) -> Callable:
    """Compile ``text`` into a vectorised function of ``variables``."""
    if not isinstance(text, str) or not text.strip():
        raise ConfigError("Empty expression")
    node = _Parser(text, variables).parse()
    names = tuple(variables)

    def evaluate(*args):
        if len(args) != len(names):
            raise TypeError(f"expected {len(names)} arguments, got {len(args)}")
        arrays = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in args))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = node(dict(zip(names, arrays)))
        return np.broadcast_to(np.asarray(out, dtype=float), arrays[0].shape).copy()

    evaluate.__name__ = "expr"
    evaluate.__doc__ = text
    return evaluate
