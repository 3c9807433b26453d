"""Expression language for functions on a holomorphic chart of a complex surface.

Expressions are trees (shared as DAGs) over the chart variables ``z1``, ``z2``,
their conjugates and complex constants.  They support exact Wirtinger
differentiation, treating ``z^i`` and ``conj(z^i)`` as independent variables, and
vectorised complex evaluation with numpy.

Nodes are hash-consed: structurally identical expressions are the same object, so
identity comparison is structural equality and large derivative DAGs stay small.

Grammar accepted by :func:`parse`::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := atom ['^' integer]
    atom   := number | 'i' | 'z1' | 'z2' | 'conj' '(' expr ')' | '-' atom | '(' expr ')'
"""

from __future__ import annotations

import functools
import re
import threading
import weakref
from typing import Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "Expr",
    "ChartPoint",
    "ParseError",
    "UnknownIdentifierError",
    "VariableIndexError",
    "DomainError",
    "const",
    "var",
    "z1",
    "z2",
    "conj",
    "parse",
    "to_text",
    "diff",
    "evaluate",
    "evaluate_many",
    "Evaluator",
    "ZERO",
    "ONE",
]


class ChartPoint(NamedTuple):
    """A point of the chart, given by its two complex coordinates."""

    z1: complex
    z2: complex


class ParseError(ValueError):
    """Syntax error in an expression string.

    ``offset`` is the byte offset (UTF-8) of the offending token.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ParseError):
    pass


class VariableIndexError(UnknownIdentifierError):
    """A chart variable other than z1, z2 was referenced."""


class DomainError(ArithmeticError):
    """Evaluation hit a singularity (division by zero or overflow)."""

    def __init__(self, point, message: str = "expression is not finite"):
        super().__init__(f"{message} at {point}")
        self.point = point


# --------------------------------------------------------------------------- nodes

_intern_lock = threading.Lock()
_intern_table: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()


class Expr:
    """Immutable expression node.  Build with the module-level constructors."""

    __slots__ = ("op", "args", "value", "__weakref__")

    op: str
    args: tuple
    value: object

    def __new__(cls, *_):
        raise TypeError("use cproj.expr constructors (const, var, ...) to build expressions")

    @classmethod
    def _make(cls, op: str, args: tuple = (), value=None) -> "Expr":
        key = (op, value, *(id(a) for a in args))
        with _intern_lock:
            node = _intern_table.get(key)
            if node is None:
                node = object.__new__(cls)
                object.__setattr__(node, "op", op)
                object.__setattr__(node, "args", args)
                object.__setattr__(node, "value", value)
                _intern_table[key] = node
        return node

    def __setattr__(self, name, value):
        raise AttributeError("Expr is immutable")

    def __reduce__(self):
        return (parse, (to_text(self),))

    # arithmetic sugar
    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __pow__(self, n):
        return power(self, n)

    def __neg__(self):
        return neg(self)

    def conjugate(self) -> "Expr":
        return conj(self)

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    def is_zero(self) -> bool:
        return self.op == "const" and self.value == 0

    def is_one(self) -> bool:
        return self.op == "const" and self.value == 1

    def __repr__(self) -> str:
        return f"Expr({to_text(self)!r})"

    def __str__(self) -> str:
        return to_text(self)


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return parse(x)
    if isinstance(x, (int, float, complex, np.number)):
        return const(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def as_expr(x) -> Expr:
    """Coerce a number, string or Expr to an Expr."""
    return _coerce(x)


def const(c) -> Expr:
    c = complex(c)
    if c.real == 0.0:
        c = complex(0.0, c.imag)
    if c.imag == 0.0:
        c = complex(c.real, 0.0)
    return Expr._make("const", (), c)


ZERO = const(0)
ONE = const(1)


def var(index: int, barred: bool = False) -> Expr:
    if index not in (1, 2):
        raise ValueError(f"variable index must be 1 or 2, got {index}")
    return Expr._make("var", (), (index, bool(barred)))


z1 = var(1)
z2 = var(2)


def neg(a: Expr) -> Expr:
    if a.op == "const":
        return const(-a.value)
    if a.op == "neg":
        return a.args[0]
    return Expr._make("neg", (a,))


def conj(a) -> Expr:
    a = _coerce(a)
    if a.op == "const":
        return const(a.value.conjugate())
    if a.op == "var":
        index, barred = a.value
        return var(index, not barred)
    if a.op == "conj":
        return a.args[0]
    return Expr._make("conj", (a,))


def add(a: Expr, b: Expr) -> Expr:
    if a.is_zero():
        return b
    if b.is_zero():
        return a
    if a.op == "const" and b.op == "const":
        return const(a.value + b.value)
    if b.op == "neg":
        return sub(a, b.args[0])
    return Expr._make("add", (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if b.is_zero():
        return a
    if a.is_zero():
        return neg(b)
    if a is b:
        return ZERO
    if a.op == "const" and b.op == "const":
        return const(a.value - b.value)
    return Expr._make("sub", (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    if a.is_zero() or b.is_zero():
        return ZERO
    if a.is_one():
        return b
    if b.is_one():
        return a
    if a.op == "const" and b.op == "const":
        return const(a.value * b.value)
    if b.op == "const" and a.op != "const":
        a, b = b, a
    if a.op == "const" and a.value == -1:
        return neg(b)
    return Expr._make("mul", (a, b))


def div(a: Expr, b: Expr) -> Expr:
    if b.is_one():
        return a
    if a.is_zero() and not b.is_zero():
        return ZERO
    if a.op == "const" and b.op == "const" and b.value != 0:
        return const(a.value / b.value)
    return Expr._make("div", (a, b))


def power(a: Expr, n) -> Expr:
    if isinstance(n, bool) or int(n) != n:
        raise ValueError(f"only integer exponents are supported, got {n!r}")
    n = int(n)
    if n == 0:
        return ONE
    if n == 1:
        return a
    if a.op == "const" and not (a.value == 0 and n < 0):
        return const(a.value**n)
    return Expr._make("pow", (a,), n)


def _topological(roots: Iterable[Expr]) -> list[Expr]:
    """Nodes reachable from ``roots`` with children before parents."""
    order: list[Expr] = []
    seen: set[int] = set()
    for root in roots:
        if id(root) in seen:
            continue
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for child in reversed(node.args):
                if id(child) not in seen:
                    stack.append((child, False))
    return order


def size(e: Expr) -> int:
    """Number of distinct nodes in the DAG of ``e``."""
    return len(_topological([e]))


# ------------------------------------------------------------------- printing

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2}


def _fmt_real(x: float) -> str:
    text = repr(float(x))
    if text in ("inf", "-inf", "nan"):
        raise ValueError(f"cannot print non-finite constant {x}")
    return text


def _fmt_const(c: complex) -> str:
    re_, im = c.real, c.imag
    if im == 0:
        s = _fmt_real(re_)
        return s if re_ >= 0 else f"({s})"
    sign = "-" if im < 0 else "+"
    if re_ == 0:
        return f"({_fmt_real(im)}*i)" if im > 0 else f"(-{_fmt_real(-im)}*i)"
    return f"({_fmt_real(re_)}{sign}{_fmt_real(abs(im))}*i)"


def to_text(e: Expr) -> str:
    """Render ``e`` in the input grammar; ``parse(to_text(e))`` evaluates like ``e``."""
    text: dict[int, tuple[str, int]] = {}
    for node in _topological([e]):
        op = node.op
        if op == "const":
            text[id(node)] = (_fmt_const(node.value), 4)
        elif op == "var":
            index, barred = node.value
            text[id(node)] = (f"conj(z{index})" if barred else f"z{index}", 4)
        elif op == "conj":
            text[id(node)] = (f"conj({text[id(node.args[0])][0]})", 4)
        elif op == "neg":
            inner, prec = text[id(node.args[0])]
            text[id(node)] = (f"-{inner}" if prec >= 4 else f"-({inner})", 4)
        elif op == "pow":
            inner, prec = text[id(node.args[0])]
            base = inner if prec >= 4 and not inner.startswith("-") else f"({inner})"
            n = node.value
            text[id(node)] = (f"{base}^{n}" if n >= 0 else f"{base}^(-{-n})", 3)
        else:
            p = _PREC[op]
            (ls, lp), (rs, rp) = text[id(node.args[0])], text[id(node.args[1])]
            if lp < p:
                ls = f"({ls})"
            if rp <= p:
                rs = f"({rs})"
            sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[op]
            text[id(node)] = (f"{ls}{sym}{rs}", p)
    return text[id(e)][0]


# -------------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while True:
            while pos < len(text) and text[pos].isspace():
                pos += 1
            if pos >= len(text):
                break
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                raise ParseError(f"unexpected character {text[pos]!r}", self._offset(pos))
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.tokens.append(("end", "", len(text)))
        self.i = 0

    def _offset(self, pos: int) -> int:
        return len(self.text[:pos].encode("utf-8"))

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.take()
        if text != value or kind != "op":
            found = text or "end of input"
            raise ParseError(f"expected {value!r}, found {found!r}", self._offset(pos))

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", self._offset(pos))
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.factor()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def factor(self) -> Expr:
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            base = power(base, self.integer())
        return base

    def integer(self) -> int:
        sign = 1
        parens = False
        if self.peek()[1] == "(":
            self.take()
            parens = True
        if self.peek()[1] in ("-", "+") and self.peek()[0] == "op":
            sign = -1 if self.take()[1] == "-" else 1
        kind, text, pos = self.take()
        if kind != "num" or not text.isdigit():
            raise ParseError(f"exponent must be an integer, found {text or 'end of input'!r}", self._offset(pos))
        if parens:
            self.expect(")")
        return sign * int(text)

    def atom(self) -> Expr:
        kind, text, pos = self.take()
        if kind == "num":
            return const(float(text))
        if kind == "ident":
            if text == "i":
                return const(1j)
            if text == "conj":
                self.expect("(")
                inner = self.expr()
                self.expect(")")
                return conj(inner)
            m = re.fullmatch(r"z(\d+)", text)
            if m:
                index = int(m.group(1))
                if index not in (1, 2):
                    raise VariableIndexError(
                        f"unknown identifier {text!r}: variable index outside {{1,2}}", self._offset(pos)
                    )
                return var(index)
            raise UnknownIdentifierError(f"unknown identifier {text!r}", self._offset(pos))
        if kind == "op" and text == "-":
            return neg(self.atom())
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ParseError(f"unexpected {text or 'end of input'!r}", self._offset(pos))


def parse(text: str) -> Expr:
    """Parse an expression string.

    >>> to_text(parse("z1*conj(z1)"))
    'z1*conj(z1)'
    """
    if not isinstance(text, str):
        raise TypeError("parse expects a string")
    return _Parser(text).parse()


# ------------------------------------------------------------ differentiation

_diff_cache: "weakref.WeakKeyDictionary[Expr, dict]" = weakref.WeakKeyDictionary()
_diff_lock = threading.Lock()


def _rule(node: Expr, index: int, barred: bool, d: Sequence[Expr]) -> Expr:
    op = node.op
    if op == "const":
        return ZERO
    if op == "var":
        return ONE if node.value == (index, barred) else ZERO
    if op == "neg":
        return neg(d[0])
    if op == "conj":
        return conj(d[0])
    if op == "add":
        return add(d[0], d[1])
    if op == "sub":
        return sub(d[0], d[1])
    a = node.args[0]
    if op == "mul":
        b = node.args[1]
        return add(mul(d[0], b), mul(a, d[1]))
    if op == "div":
        b = node.args[1]
        return sub(div(d[0], b), div(mul(a, d[1]), power(b, 2)))
    if op == "pow":
        n = node.value
        return mul(mul(const(n), power(a, n - 1)), d[0])
    raise AssertionError(op)


def diff(e, index: int, barred: bool = False) -> Expr:
    """Wirtinger derivative of ``e`` with respect to ``z^index`` (or its conjugate).

    ``diff(e, 1)`` is d/dz1 and ``diff(e, 1, barred=True)`` is d/d(conj z1).
    """
    e = _coerce(e)
    if index not in (1, 2):
        raise ValueError(f"variable index must be 1 or 2, got {index}")
    barred = bool(barred)

    def cached(node: Expr, b: bool):
        entry = _diff_cache.get(node)
        return None if entry is None else entry.get((index, b))

    hit = cached(e, barred)
    if hit is not None:
        return hit
    memo: dict[tuple[int, bool], Expr] = {}
    stack = [(e, barred)]
    while stack:
        node, b = stack[-1]
        key = (id(node), b)
        if key in memo:
            stack.pop()
            continue
        hit = cached(node, b)
        if hit is not None:
            memo[key] = hit
            stack.pop()
            continue
        child_flag = (not b) if node.op == "conj" else b
        deps = [(a, child_flag) for a in node.args]
        missing = [dep for dep in deps if (id(dep[0]), dep[1]) not in memo]
        if missing:
            stack.extend(missing)
            continue
        stack.pop()
        result = _rule(node, index, b, [memo[(id(a), f)] for a, f in deps])
        memo[key] = result
        with _diff_lock:
            _diff_cache.setdefault(node, {})[(index, b)] = result
    return memo[(id(e), barred)]


# ----------------------------------------------------------------- evaluation

_CHUNK = 65536


class Evaluator:
    """Vectorised evaluator for a fixed tuple of expressions sharing one DAG.

    Calling it with arrays ``z1``, ``z2`` of a common shape returns a complex
    array of shape ``(len(exprs),) + shape``.  Non-finite results (division by
    zero, overflow) are returned as-is; use :meth:`finite_mask` to detect them.
    """

    def __init__(self, exprs: Sequence[Expr]):
        self.exprs = tuple(_coerce(e) for e in exprs)
        nodes = _topological(self.exprs)
        slot = {id(n): k for k, n in enumerate(nodes)}
        last_use = {k: k for k in range(len(nodes))}
        for k, n in enumerate(nodes):
            for a in n.args:
                last_use[slot[id(a)]] = k
        outputs = {slot[id(e)] for e in self.exprs}
        program = []
        for k, n in enumerate(nodes):
            frees = [slot[id(a)] for a in n.args if last_use[slot[id(a)]] == k and slot[id(a)] not in outputs]
            program.append((n.op, tuple(slot[id(a)] for a in n.args), n.value, tuple(set(frees))))
        self._program = program
        self._outputs = [slot[id(e)] for e in self.exprs]
        self._nslots = len(nodes)

    def _run(self, z1v: np.ndarray, z2v: np.ndarray) -> list:
        reg: list = [None] * self._nslots
        zv = {1: z1v, 2: z2v}
        zb = {}
        for k, (op, args, value, frees) in enumerate(self._program):
            if op == "const":
                r = value
            elif op == "var":
                index, barred = value
                if barred:
                    if index not in zb:
                        zb[index] = np.conj(zv[index])
                    r = zb[index]
                else:
                    r = zv[index]
            elif op == "neg":
                r = -reg[args[0]]
            elif op == "conj":
                r = np.conj(reg[args[0]])
            elif op == "add":
                r = reg[args[0]] + reg[args[1]]
            elif op == "sub":
                r = reg[args[0]] - reg[args[1]]
            elif op == "mul":
                r = reg[args[0]] * reg[args[1]]
            elif op == "div":
                r = reg[args[0]] / reg[args[1]]
            else:
                base = reg[args[0]]
                n = value
                r = base
                for _ in range(abs(n) - 1):
                    r = r * base
                if n < 0:
                    r = 1.0 / r
            reg[k] = r
            for f in frees:
                reg[f] = None
        return [reg[k] for k in self._outputs]

    def __call__(self, z1v, z2v) -> np.ndarray:
        z1v = np.asarray(z1v, dtype=complex)
        z2v = np.asarray(z2v, dtype=complex)
        z1v, z2v = np.broadcast_arrays(z1v, z2v)
        shape = z1v.shape
        flat1, flat2 = z1v.ravel(), z2v.ravel()
        out = np.empty((len(self.exprs), flat1.size), dtype=complex)
        with np.errstate(all="ignore"):
            for start in range(0, max(flat1.size, 1), _CHUNK):
                stop = min(start + _CHUNK, flat1.size)
                if stop <= start:
                    break
                vals = self._run(flat1[start:stop], flat2[start:stop])
                for k, v in enumerate(vals):
                    out[k, start:stop] = v
        return out.reshape((len(self.exprs),) + shape)

    @staticmethod
    def finite_mask(values: np.ndarray) -> np.ndarray:
        """Points (trailing axes) at which every output is finite."""
        return np.isfinite(values).all(axis=0)


@functools.lru_cache(maxsize=512)
def _evaluator(exprs: tuple) -> Evaluator:
    return Evaluator(exprs)


def evaluator(exprs: Sequence[Expr]) -> Evaluator:
    """Cached :class:`Evaluator` for ``exprs``."""
    return _evaluator(tuple(_coerce(e) for e in exprs))


def evaluate(e, p) -> complex:
    """Value of ``e`` at the chart point ``p``; raises DomainError if not finite."""
    p = ChartPoint(complex(p[0]), complex(p[1]))
    value = evaluator((_coerce(e),))(p.z1, p.z2)[0]
    value = complex(value)
    if not np.isfinite(value):
        raise DomainError(p)
    return value


def evaluate_many(exprs: Sequence[Expr], points) -> np.ndarray:
    """Evaluate ``exprs`` at ``points`` (array of shape (N, 2) complex).

    Returns shape ``(len(exprs), N)``; raises DomainError naming the first bad point.
    """
    pts = as_points(points)
    values = evaluator(exprs)(pts[:, 0], pts[:, 1])
    ok = Evaluator.finite_mask(values)
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise DomainError(ChartPoint(pts[bad, 0], pts[bad, 1]))
    return values


def as_points(points) -> np.ndarray:
    """Normalise a ChartPoint, a pair, or a sequence of them to an (N, 2) complex array."""
    arr = np.asarray(points, dtype=complex)
    if arr.ndim == 1:
        if arr.shape[0] != 2:
            raise ValueError("a chart point has exactly two complex coordinates")
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected points of shape (N, 2), got {arr.shape}")
    return arr
