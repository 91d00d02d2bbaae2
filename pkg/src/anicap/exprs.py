"""Tiny arithmetic grammar for data fields over the cap.

Expressions may use the coordinates xi1..xi{n+1}, the function ell, the
chart-normalized coordinates u (arc fraction for curves, rho for surfaces)
and phi (surfaces), numeric literals, + - * / ^, parentheses and unary
minus, plus cos/sin/exp of a subexpression.  Evaluated nodally; no eval().
"""
from __future__ import annotations

import re

import numpy as np

from .errors import ConfigError

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?)|([A-Za-z_][A-Za-z_0-9]*)"
                    r"|(\*\*|[()+\-*/^]))")

_FUNCS = {"cos": np.cos, "sin": np.sin, "exp": np.exp, "sqrt": np.sqrt,
          "abs": np.abs}


def _tokenize(text):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip():
                raise ConfigError(f"cannot tokenize expression at: {text[pos:]!r}")
            break
        num, name, op = m.groups()
        if num:
            out.append(("num", float(num)))
        elif name:
            out.append(("name", name))
        else:
            out.append(("op", "^" if op == "**" else op))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, tokens, env):
        self.toks = tokens
        self.i = 0
        self.env = env

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self):
        t = self.peek()
        self.i += 1
        return t

    def parse(self):
        v = self.expr()
        if self.i != len(self.toks):
            raise ConfigError(f"trailing tokens in expression: {self.toks[self.i:]}")
        return v

    def expr(self):
        v = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            _, op = self.take()
            rhs = self.term()
            v = v + rhs if op == "+" else v - rhs
        return v

    def term(self):
        v = self.unary()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            _, op = self.take()
            rhs = self.unary()
            v = v * rhs if op == "*" else v / rhs
        return v

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return -self.unary()
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        v = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            e = self.unary()          # right-associative, allows ell^-2
            return v ** e
        return v

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return val
        if kind == "name":
            if val in _FUNCS:
                if self.peek() != ("op", "("):
                    raise ConfigError(f"{val} must be followed by (...)")
                self.take()
                arg = self.expr()
                if self.take() != ("op", ")"):
                    raise ConfigError("unbalanced parentheses")
                return _FUNCS[val](arg)
            if val == "pi":
                return np.pi
            if val not in self.env:
                raise ConfigError(f"unknown identifier {val!r} in expression")
            return self.env[val]
        if (kind, val) == ("op", "("):
            v = self.expr()
            if self.take() != ("op", ")"):
                raise ConfigError("unbalanced parentheses")
            return v
        raise ConfigError(f"unexpected token {val!r}")


def eval_field(text, md):
    """Evaluate an expression to a nodal field on the grid of `md`."""
    grid = md.grid
    env = {"ell": md.ell}
    for i in range(grid.cap.dim):
        env[f"xi{i + 1}"] = grid.xi[:, i]
    if grid.n == 1:
        th = grid.coords[0]
        env["u"] = (th - th[0]) / (th[-1] - th[0])
    else:
        env["u"] = grid.coords[0]
        env["phi"] = grid.coords[1]
    val = _Parser(_tokenize(str(text)), env).parse()
    return np.broadcast_to(np.asarray(val, float), (grid.ntotal,)).copy()
