"""Скалярные выражения: разбор, печать, вычисление и квазидифференциал в точке.

Грамматика: переменные x1..xN, параметры [a-z][a-z0-9_]*, десятичные числа,
инфиксные + - *, функции sin, cos, exp, pow(e, k), abs, max(...), min(...).
"""
import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Tuple

import numpy as np

from qd_model.config import FD_STEPS, TOL
from qd_model.errors import (
    ArityError,
    DimensionMismatchError,
    ExpressionSyntaxError,
    InputError,
    UnboundParameterError,
    UnknownIdentifierError,
)
from qd_model.polytope import Polytope, convex_hull_union
from qd_model.quasidiff import (
    Quasidifferential,
    matrix_qd_build,
    qd_abs,
    qd_add,
    qd_max,
    qd_min,
    qd_neg,
    qd_scale,
    smooth_leaf,
)

logger = logging.getLogger(__name__)


# =============================================================================
# УЗЛЫ ДЕРЕВА
# =============================================================================

class Expr:
    """Базовый класс узлов; узлы неизменяемы."""

    def __add__(self, other):
        return Add(self, _wrap(other))

    def __radd__(self, other):
        return Add(_wrap(other), self)

    def __sub__(self, other):
        return Sub(self, _wrap(other))

    def __rsub__(self, other):
        return Sub(_wrap(other), self)

    def __mul__(self, other):
        return Mul(self, _wrap(other))

    def __rmul__(self, other):
        return Mul(_wrap(other), self)

    def __neg__(self):
        return Neg(self)

    def __str__(self):
        return pretty(self)


def _wrap(value):
    if isinstance(value, Expr):
        return value
    return Const(float(value))


@dataclass(frozen=True, eq=True)
class Var(Expr):
    index: int  # с единицы, как в записи x1


@dataclass(frozen=True, eq=True)
class Param(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, eq=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    left: Expr
    right: Expr


SMOOTH_KINDS = ("sin", "cos", "exp", "pow")


@dataclass(frozen=True, eq=True)
class SmoothUnary(Expr):
    kind: str
    arg: Expr
    power: int = 1

    def __post_init__(self):
        if self.kind not in SMOOTH_KINDS:
            raise InputError(f"unknown smooth primitive '{self.kind}'")
        if self.kind == "pow" and (not isinstance(self.power, int) or self.power < 1):
            raise InputError("pow exponent must be an integer >= 1")


@dataclass(frozen=True, eq=True)
class Abs(Expr):
    arg: Expr


@dataclass(frozen=True, eq=True)
class Max(Expr):
    args: Tuple[Expr, ...]

    def __post_init__(self):
        if len(self.args) < 2:
            raise ArityError("max", "at least 2", len(self.args))


@dataclass(frozen=True, eq=True)
class Min(Expr):
    args: Tuple[Expr, ...]

    def __post_init__(self):
        if len(self.args) < 2:
            raise ArityError("min", "at least 2", len(self.args))


def sum_of(terms):
    terms = list(terms)
    if not terms:
        return Const(0.0)
    total = terms[0]
    for t in terms[1:]:
        total = Add(total, t)
    return total


# =============================================================================
# ПРИВЯЗКА (ТОЧКА + ПАРАМЕТРЫ)
# =============================================================================

@dataclass(frozen=True)
class Binding:
    point: np.ndarray
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.point, dtype=float).ravel()
        x.setflags(write=False)
        object.__setattr__(self, "point", x)
        object.__setattr__(self, "params", {k: float(v) for k, v in dict(self.params).items()})

    @property
    def n(self):
        return self.point.size

    def with_point(self, x):
        return Binding(x, self.params)

    def with_params(self, **updates):
        params = dict(self.params)
        params.update(updates)
        return Binding(self.point, params)


def check_binding_params(b, params, what="system"):
    """Параметры привязки должны совпадать с параметрами системы/задачи."""
    expected = {k: float(v) for k, v in dict(params).items()}
    if b.params != expected:
        raise InputError(f"binding parameters {b.params} differ from {what} parameters {expected}")


# =============================================================================
# РАЗБОР
# =============================================================================

FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "abs": 1, "pow": 2, "max": None, "min": None}

TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*(),])"
)
VAR_RE = re.compile(r"x([1-9][0-9]*)")
PARAM_RE = re.compile(r"[a-z][a-z0-9_]*")


def _byte_offset(text, pos):
    return len(text[:pos].encode("utf-8"))


def tokenize(text):
    """Список (вид, текст, байтовое смещение); последний токен — ('end', '', len)."""
    tokens = []
    pos = 0
    while pos < len(text):
        m = TOKEN_RE.match(text, pos)
        if not m:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), _byte_offset(text, pos)))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(text, len(text))))
    return tokens


class _Parser:
    def __init__(self, text, n):
        self.tokens = tokenize(text)
        self.i = 0
        self.n = n

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        kind, value, offset = self.take()
        if kind != "op" or value != op:
            shown = value or "end of input"
            raise ExpressionSyntaxError(f"expected '{op}', got '{shown}'", offset)

    def parse(self):
        node = self.expr()
        kind, value, offset = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected '{value}'", offset)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.take()
                right = self.term()
                node = Add(node, right) if value == "+" else Sub(node, right)
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value == "*":
                self.take()
                node = Mul(node, self.unary())
            else:
                return node

    def unary(self):
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.take()
            return Neg(self.unary())
        return self.primary()

    def primary(self):
        kind, value, offset = self.take()
        if kind == "num":
            return Const(float(value))
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "ident":
            nxt_kind, nxt_value, _ = self.peek()
            if nxt_kind == "op" and nxt_value == "(":
                return self.call(value, offset)
            if value in FUNCTIONS:
                raise ExpressionSyntaxError(f"function '{value}' needs '('", offset)
            return self.identifier(value, offset)
        shown = value or "end of input"
        raise ExpressionSyntaxError(f"unexpected '{shown}'", offset)

    def identifier(self, name, offset):
        m = VAR_RE.fullmatch(name)
        if m:
            index = int(m.group(1))
            if index > self.n:
                raise UnknownIdentifierError(name, offset)
            return Var(index)
        if not PARAM_RE.fullmatch(name):
            raise UnknownIdentifierError(name, offset)
        return Param(name)

    def call(self, name, offset):
        if name not in FUNCTIONS:
            raise UnknownIdentifierError(name, offset)
        self.expect("(")
        args = [self.expr()]
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value == ",":
                self.take()
                args.append(self.expr())
            else:
                break
        self.expect(")")

        arity = FUNCTIONS[name]
        if arity is None:
            if len(args) < 2:
                raise ArityError(name, "at least 2", len(args))
            return Max(tuple(args)) if name == "max" else Min(tuple(args))
        if len(args) != arity:
            raise ArityError(name, arity, len(args))
        if name == "abs":
            return Abs(args[0])
        if name == "pow":
            k = args[1]
            if not isinstance(k, Const) or k.value != int(k.value) or k.value < 1:
                raise ExpressionSyntaxError("pow exponent must be an integer literal >= 1", offset)
            return SmoothUnary("pow", args[0], int(k.value))
        return SmoothUnary(name, args[0])


def parse(text, n):
    if n < 1:
        raise InputError("expression dimension must be >= 1")
    return _Parser(text, n).parse()


# =============================================================================
# ПЕЧАТЬ
# =============================================================================

def _precedence(e):
    if isinstance(e, (Add, Sub)):
        return 1
    if isinstance(e, Mul):
        return 2
    if isinstance(e, Neg):
        return 3
    return 4


def _format_number(v):
    if v == int(v) and abs(v) < 1e15:
        text = str(int(v))
    else:
        text = repr(float(v))
    return f"({text})" if v < 0 else text


def pretty(e):
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Const):
        return _format_number(e.value)
    if isinstance(e, Neg):
        inner = pretty(e.arg)
        return f"-{inner}" if _precedence(e.arg) >= 3 else f"-({inner})"
    if isinstance(e, (Add, Sub, Mul)):
        prec = _precedence(e)
        op = {Add: " + ", Sub: " - ", Mul: "*"}[type(e)]
        left = pretty(e.left)
        right = pretty(e.right)
        if _precedence(e.left) < prec:
            left = f"({left})"
        if _precedence(e.right) <= prec:
            right = f"({right})"
        return left + op + right
    if isinstance(e, SmoothUnary):
        if e.kind == "pow":
            return f"pow({pretty(e.arg)}, {e.power})"
        return f"{e.kind}({pretty(e.arg)})"
    if isinstance(e, Abs):
        return f"abs({pretty(e.arg)})"
    if isinstance(e, (Max, Min)):
        name = "max" if isinstance(e, Max) else "min"
        return f"{name}(" + ", ".join(pretty(a) for a in e.args) + ")"
    raise InputError(f"unknown expression node {type(e).__name__}")


# =============================================================================
# ОБХОД ДЕРЕВА
# =============================================================================

def children(e):
    if isinstance(e, (Neg, SmoothUnary, Abs)):
        return (e.arg,)
    if isinstance(e, (Add, Sub, Mul)):
        return (e.left, e.right)
    if isinstance(e, (Max, Min)):
        return e.args
    return ()


def parameters(e):
    found = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Param):
            found.add(node.name)
        stack.extend(children(node))
    return found


def max_variable(e):
    best = 0
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            best = max(best, node.index)
        stack.extend(children(node))
    return best


# =============================================================================
# ВЫЧИСЛЕНИЕ
# =============================================================================

_SMOOTH = {
    "sin": (np.sin, np.cos),
    "cos": (np.cos, lambda v: -np.sin(v)),
    "exp": (np.exp, np.exp),
}


def _param_value(e, params):
    if e.name not in params:
        raise UnboundParameterError(e.name)
    return params[e.name]


def _eval(e, x, params):
    if isinstance(e, Var):
        return x[..., e.index - 1]
    if isinstance(e, Param):
        return np.full(x.shape[:-1], _param_value(e, params))
    if isinstance(e, Const):
        return np.full(x.shape[:-1], e.value)
    if isinstance(e, Neg):
        return -_eval(e.arg, x, params)
    if isinstance(e, Add):
        return _eval(e.left, x, params) + _eval(e.right, x, params)
    if isinstance(e, Sub):
        return _eval(e.left, x, params) - _eval(e.right, x, params)
    if isinstance(e, Mul):
        return _eval(e.left, x, params) * _eval(e.right, x, params)
    if isinstance(e, SmoothUnary):
        v = _eval(e.arg, x, params)
        if e.kind == "pow":
            return v ** e.power
        return _SMOOTH[e.kind][0](v)
    if isinstance(e, Abs):
        return np.abs(_eval(e.arg, x, params))
    if isinstance(e, Max):
        return np.maximum.reduce([_eval(a, x, params) for a in e.args])
    if isinstance(e, Min):
        return np.minimum.reduce([_eval(a, x, params) for a in e.args])
    raise InputError(f"unknown expression node {type(e).__name__}")


def _check_point(e, x):
    need = max_variable(e)
    if x.shape[-1] < need:
        raise DimensionMismatchError(need, x.shape[-1], "point")


def eval_expr(e, b):
    x = b.point
    _check_point(e, x)
    return float(_eval(e, x, b.params))


def eval_many(e, points, params):
    """Векторное вычисление в массиве точек формы (..., n)."""
    x = np.asarray(points, dtype=float)
    _check_point(e, x)
    return _eval(e, x, dict(params))


# =============================================================================
# КВАЗИДИФФЕРЕНЦИАЛ В ТОЧКЕ
# =============================================================================

def _smooth_derivative(kind, v, power):
    if kind == "pow":
        return power * v ** (power - 1)
    return float(_SMOOTH[kind][1](v))


@lru_cache(maxsize=4096)
def is_smooth(e):
    """Поддерево без abs/max/min."""
    if isinstance(e, (Abs, Max, Min)):
        return False
    return all(is_smooth(c) for c in children(e))


def _value_and_grad(e, b):
    """Прямой режим: значение и градиент гладкого поддерева."""
    x = b.point
    n = x.size
    if isinstance(e, Var):
        grad = np.zeros(n)
        grad[e.index - 1] = 1.0
        return float(x[e.index - 1]), grad
    if isinstance(e, Param):
        return _param_value(e, b.params), np.zeros(n)
    if isinstance(e, Const):
        return e.value, np.zeros(n)
    if isinstance(e, Neg):
        v, g = _value_and_grad(e.arg, b)
        return -v, -g
    if isinstance(e, (Add, Sub, Mul)):
        va, ga = _value_and_grad(e.left, b)
        vb, gb = _value_and_grad(e.right, b)
        if isinstance(e, Add):
            return va + vb, ga + gb
        if isinstance(e, Sub):
            return va - vb, ga - gb
        return va * vb, va * gb + vb * ga
    if isinstance(e, SmoothUnary):
        v, g = _value_and_grad(e.arg, b)
        value = v ** e.power if e.kind == "pow" else float(_SMOOTH[e.kind][0](v))
        return value, _smooth_derivative(e.kind, v, e.power) * g
    raise InputError(f"node {type(e).__name__} is not smooth")


def _negated(child, q):
    # гладкое слагаемое со знаком минус остаётся градиентом, остальное меняет местами ∂̲ и ∂̄
    if is_smooth(child):
        return smooth_leaf(-q.sub.vertices[0])
    return qd_neg(q)


def _scaled(child, q, t):
    if is_smooth(child):
        return smooth_leaf(t * q.sub.vertices[0])
    return qd_scale(q, t)


def _value_and_qd(e, b, tol):
    if is_smooth(e):
        v, g = _value_and_grad(e, b)
        return v, smooth_leaf(g)
    if isinstance(e, Neg):
        v, q = _value_and_qd(e.arg, b, tol)
        return -v, _negated(e.arg, q)
    if isinstance(e, (Add, Sub, Mul)):
        va, qa = _value_and_qd(e.left, b, tol)
        vb, qb = _value_and_qd(e.right, b, tol)
        if isinstance(e, Add):
            return va + vb, qd_add(qa, qb)
        if isinstance(e, Sub):
            return va - vb, qd_add(qa, _negated(e.right, qb))
        # 𝒟(f·g) = f(x)·𝒟g + g(x)·𝒟f
        return va * vb, qd_add(_scaled(e.right, qb, va), _scaled(e.left, qa, vb))
    if isinstance(e, SmoothUnary):
        v, q = _value_and_qd(e.arg, b, tol)
        value = v ** e.power if e.kind == "pow" else float(_SMOOTH[e.kind][0](v))
        return value, qd_scale(q, _smooth_derivative(e.kind, v, e.power))
    if isinstance(e, Abs):
        v, q = _value_and_qd(e.arg, b, tol)
        if is_smooth(e.arg):
            return abs(v), qd_max([(v, q), (-v, _negated(e.arg, q))], tol=tol)
        return abs(v), qd_abs(q, v, tol=tol)
    if isinstance(e, (Max, Min)):
        items = [_value_and_qd(a, b, tol) for a in e.args]
        values = [v for v, _ in items]
        if isinstance(e, Max):
            return max(values), qd_max(items, tol=tol)
        low = min(values)
        active = [i for i, v in enumerate(values) if v <= low + tol]
        if len(active) > 1 and all(is_smooth(a) for a in e.args):
            # минимум гладких: [{0}, co{∇f_k}], эквивалентно общему правилу со сдвигом на -Σ∇f_k
            grads = convex_hull_union([items[i][1].sub for i in active])
            return low, Quasidifferential(Polytope.zeros(b.n), grads)
        return low, qd_min(items, tol=tol)
    raise InputError(f"unknown expression node {type(e).__name__}")


def value_and_qd(e, b, tol=TOL):
    _check_point(e, b.point)
    return _value_and_qd(e, b, tol)


def qd_at(e, b, tol=TOL):
    return value_and_qd(e, b, tol)[1]


def qd_matrix_at(es, b, tol=TOL):
    es = list(es)
    if not es:
        raise InputError("empty expression list")
    return matrix_qd_build([qd_at(e, b, tol) for e in es])


# =============================================================================
# КОНЕЧНЫЕ РАЗНОСТИ (оракул для проверок)
# =============================================================================

def finite_difference_dd(e, b, h, steps=FD_STEPS):
    """Односторонняя разность (f(x + αh) - f(x))/α, экстраполированная к α = 0."""
    h = np.asarray(h, dtype=float).ravel()
    if h.size != b.n:
        raise DimensionMismatchError(b.n, h.size, "direction")
    base = eval_expr(e, b)
    alphas = np.asarray(steps, dtype=float)
    points = b.point[None, :] + alphas[:, None] * h[None, :]
    quotients = (eval_many(e, points, b.params) - base) / alphas
    if alphas.size == 1:
        return float(quotients[0])
    _, intercept = np.polyfit(alphas, quotients, 1)
    return float(intercept)
