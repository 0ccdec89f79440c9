"""Квазидифференциальное исчисление Демьянова–Рубинова на парах многогранников.

Квазидифференциал 𝒟f(x) = [∂̲f(x), ∂̄f(x)] задаёт производную по направлению
f'(x, h) = max_{v∈∂̲} <v, h> + min_{w∈∂̄} <w, h>. Представление не единственно:
пары [∂̲ + C, ∂̄ - C] дают ту же производную.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from qd_model.config import TOL
from qd_model.errors import DimensionMismatchError, InputError
from qd_model.polytope import (
    Polytope,
    convex_hull_union,
    lower_support,
    minkowski_sum,
    minkowski_sum_all,
    nearest_point,
    scale,
    support,
    unit_directions,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Quasidifferential:
    sub: Polytope
    super: Polytope

    def __post_init__(self):
        if self.sub.dim != self.super.dim:
            raise DimensionMismatchError(self.sub.dim, self.super.dim, "quasidifferential pair")

    @property
    def dim(self):
        return self.sub.dim

    def to_dict(self):
        return {"sub": self.sub.to_list(), "super": self.super.to_list()}

    def __repr__(self):
        return f"[{self.sub!r}, {self.super!r}]"


@dataclass(frozen=True)
class MatrixQuasidifferential:
    """Построчный квазидифференциал отображения F = (f_1, ..., f_l)."""

    rows: Tuple[Quasidifferential, ...]

    def __post_init__(self):
        if not self.rows:
            raise InputError("matrix quasidifferential needs at least one row")
        n = self.rows[0].dim
        for row in self.rows[1:]:
            if row.dim != n:
                raise DimensionMismatchError(n, row.dim, "matrix quasidifferential row")

    @property
    def l(self):
        return len(self.rows)

    @property
    def n(self):
        return self.rows[0].dim


# =============================================================================
# КОНСТРУКТОРЫ
# =============================================================================

def smooth_leaf(gradient):
    """[{∇f}, {0}] для гладкой функции."""
    g = np.asarray(gradient, dtype=float).ravel()
    return Quasidifferential(Polytope.point(g), Polytope.zeros(g.size))


def zero_qd(dim):
    return Quasidifferential(Polytope.zeros(dim), Polytope.zeros(dim))


# =============================================================================
# ПРОИЗВОДНАЯ ПО НАПРАВЛЕНИЮ
# =============================================================================

def dd(q, h):
    return support(q.sub, h) + lower_support(q.super, h)


# =============================================================================
# ПРАВИЛА ИСЧИСЛЕНИЯ
# =============================================================================

def _check_pair(a, b):
    if a.dim != b.dim:
        raise DimensionMismatchError(a.dim, b.dim, "quasidifferential")


def qd_add(a, b):
    _check_pair(a, b)
    return Quasidifferential(minkowski_sum(a.sub, b.sub), minkowski_sum(a.super, b.super))


def qd_scale(a, t):
    t = float(t)
    if t >= 0.0:
        return Quasidifferential(scale(a.sub, t), scale(a.super, t))
    # при t < 0 под- и наддифференциал меняются местами
    return Quasidifferential(scale(a.super, t), scale(a.sub, t))


def qd_neg(a):
    return qd_scale(a, -1.0)


def qd_mul(a, b, fa, fb):
    """𝒟(f·g) = f(x)·𝒟g + g(x)·𝒟f; fa = f(x), fb = g(x)."""
    _check_pair(a, b)
    return qd_add(qd_scale(b, fa), qd_scale(a, fb))


def _active_indices(values, tol):
    values = np.asarray(values, dtype=float)
    top = float(np.max(values))
    return [i for i, v in enumerate(values) if v >= top - tol]


def qd_max(items, tol=TOL):
    """items: список пар (значение f_i(x), 𝒟f_i(x))."""
    items = list(items)
    if not items:
        raise InputError("max of an empty list")
    dim = items[0][1].dim
    for _, q in items[1:]:
        if q.dim != dim:
            raise DimensionMismatchError(dim, q.dim, "quasidifferential")

    active = _active_indices([v for v, _ in items], tol)
    if len(active) == 1:
        return items[active[0]][1]

    qds = [items[i][1] for i in active]
    neg_supers = [scale(q.super, -1.0) for q in qds]
    super_sum = minkowski_sum_all([q.super for q in qds])
    branches = []
    for k, qk in enumerate(qds):
        rest = [neg_supers[i] for i in range(len(qds)) if i != k]
        branches.append(minkowski_sum_all([qk.sub] + rest))
    logger.debug("правило max: активны %s из %d", active, len(items))
    return Quasidifferential(convex_hull_union(branches), super_sum)


def qd_min(items, tol=TOL):
    items = list(items)
    if not items:
        raise InputError("min of an empty list")
    mirrored = [(-float(v), qd_neg(q)) for v, q in items]
    return qd_neg(qd_max(mirrored, tol=tol))


def qd_abs(q, f_value, tol=TOL):
    """|f| = max{f, -f}."""
    return qd_max([(f_value, q), (-f_value, qd_neg(q))], tol=tol)


def qd_plus_set(q):
    return minkowski_sum(q.sub, q.super)


def qd_shift(q, c):
    """Эквивалентный сдвиг [∂̲ + C, ∂̄ - C]."""
    return Quasidifferential(minkowski_sum(q.sub, c), minkowski_sum(q.super, scale(c, -1.0)))


# =============================================================================
# СКОРОСТЬ НАИСКОРЕЙШЕГО СПУСКА
# =============================================================================

def steepest_rate(q):
    """max по вершинам w ∈ ∂̄ расстояния d(0, ∂̲ + w); возвращает (rate, w*)."""
    best_rate = -1.0
    best_w = None
    for w in q.super.vertices:
        _, dist = nearest_point(q.sub, -w)
        if dist > best_rate + 1e-15:
            best_rate = dist
            best_w = w
    return best_rate, best_w.copy()


def steepest_descent_direction(q):
    """Единичное направление -v/‖v‖, где v — проекция нуля на ∂̲ + w*.

    Возвращает (h, rate); при rate = 0 направление нулевое.
    """
    rate, w = steepest_rate(q)
    if rate <= 0.0:
        return np.zeros(q.dim), 0.0
    point, _ = nearest_point(q.sub, -w)
    v = point + w
    return -v / np.linalg.norm(v), rate


def dd_min_on_sphere(q, samples=3600, seed=0):
    """Плотный перебор min f'(x, h) по единичным h; возвращает (значение, h)."""
    dirs = unit_directions(q.dim, samples, seed=seed)
    values = np.max(dirs @ q.sub.vertices.T, axis=1) + np.min(dirs @ q.super.vertices.T, axis=1)
    idx = int(np.argmin(values))
    return float(values[idx]), dirs[idx].copy()


def convexificator_bounds(q, h):
    """(min, max) <v, h> по [𝒟f]⁺; производная по направлению лежит между ними."""
    plus = qd_plus_set(q)
    return lower_support(plus, h), support(plus, h)


# =============================================================================
# МАТРИЧНЫЙ КВАЗИДИФФЕРЕНЦИАЛ
# =============================================================================

def matrix_qd_build(rows):
    return MatrixQuasidifferential(tuple(rows))


def matrix_qd_plus(mq):
    return [qd_plus_set(row) for row in mq.rows]


def qd_scalarize(mq, ystar):
    """𝒟<y*, F>(x) = Σ y_j 𝒟f_j(x)."""
    y = np.asarray(ystar, dtype=float).ravel()
    if y.size != mq.l:
        raise DimensionMismatchError(mq.l, y.size, "dual vector")
    total = zero_qd(mq.n)
    for yj, row in zip(y, mq.rows):
        total = qd_add(total, qd_scale(row, yj))
    return total
