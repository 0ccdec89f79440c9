"""Выпуклые многогранники в V-представлении.

Каждая операция возвращает канонический многогранник: вершины без
повторов (до DEDUP_TOL), только крайние точки, лексикографический порядок.
"""
import logging

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial import QhullError

from qd_model.config import DEDUP_TOL, TOL, WOLFE_MAX_ITER
from qd_model.errors import DimensionMismatchError, InputError
from qd_model.lp_solver import solve_lp

logger = logging.getLogger(__name__)


class Polytope:
    """co{vertices} ⊂ R^dim. Неизменяемый после построения."""

    __slots__ = ("_vertices",)

    def __init__(self, points, canonical=False):
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise InputError("polytope needs a nonempty list of points")
        if pts.shape[1] == 0:
            raise InputError("zero-dimensional ambient space is not supported")
        if not np.all(np.isfinite(pts)):
            raise InputError("polytope vertices must be finite")
        if not canonical:
            pts = _canonical_vertices(pts)
        pts.setflags(write=False)
        self._vertices = pts

    @classmethod
    def point(cls, p):
        return cls(np.asarray(p, dtype=float).reshape(1, -1), canonical=True)

    @classmethod
    def zeros(cls, dim):
        return cls(np.zeros((1, dim)), canonical=True)

    @classmethod
    def interval(cls, lo, hi):
        return cls([[lo], [hi]])

    @property
    def vertices(self):
        return self._vertices

    @property
    def dim(self):
        return self._vertices.shape[1]

    def __len__(self):
        return self._vertices.shape[0]

    def is_singleton(self):
        return len(self) == 1

    def __eq__(self, other):
        if not isinstance(other, Polytope):
            return NotImplemented
        if self._vertices.shape != other._vertices.shape:
            return False
        return bool(np.allclose(self._vertices, other._vertices, atol=TOL, rtol=0.0))

    __hash__ = None

    def __add__(self, other):
        return minkowski_sum(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        rows = ", ".join("(" + ", ".join(f"{v:.6g}" for v in row) + ")" for row in self._vertices)
        return f"co{{{rows}}}"

    def to_list(self):
        return self._vertices.tolist()


# =============================================================================
# КАНОНИЗАЦИЯ
# =============================================================================

def _dedup(points, tol=DEDUP_TOL):
    order = np.lexsort(points.T[::-1])
    kept = []
    for idx in order:
        p = points[idx]
        if any(np.max(np.abs(p - q)) <= tol for q in kept):
            continue
        kept.append(p)
    return np.array(kept)


def _lex_sort(points):
    return points[np.lexsort(points.T[::-1])]


def _affine_frame(points):
    center = points.mean(axis=0)
    centered = points - center
    scale_ = max(1.0, float(np.max(np.abs(points))))
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * scale_))
    return center, vt[:rank]


def _in_hull_of_others(points, idx, tol=TOL):
    others = np.delete(points, idx, axis=0)
    m = others.shape[0]
    # λ ≥ 0, Σλ = 1, othersᵀ λ = p
    a_eq = np.vstack([others.T, np.ones((1, m))])
    b_eq = np.concatenate([points[idx], [1.0]])
    outcome = solve_lp(np.zeros(m), a_eq=a_eq, b_eq=b_eq, bounds=(0, None))
    if not outcome.feasible:
        return False
    residual = np.max(np.abs(others.T @ outcome.point - points[idx]))
    return residual <= tol


def _extreme_by_lp(points):
    keep = list(range(points.shape[0]))
    for idx in range(points.shape[0] - 1, -1, -1):
        if len(keep) == 1:
            break
        sub = points[keep]
        pos = keep.index(idx)
        if _in_hull_of_others(sub, pos):
            keep.pop(pos)
    return points[sorted(keep)]


def _canonical_vertices(points):
    pts = _dedup(points)
    if pts.shape[0] <= 2:
        return _lex_sort(pts)

    center, frame = _affine_frame(pts)
    rank = frame.shape[0]
    if rank == 0:
        return _lex_sort(pts[:1])
    coords = (pts - center) @ frame.T
    if rank == 1:
        t = coords[:, 0]
        keep = sorted({int(np.argmin(t)), int(np.argmax(t))})
        return _lex_sort(pts[keep])
    try:
        hull = ConvexHull(coords)
        return _lex_sort(pts[np.sort(hull.vertices)])
    except QhullError:
        logger.debug("Qhull не справился (%d точек), проверка крайних точек через LP", len(pts))
        return _lex_sort(_extreme_by_lp(pts))


def canonicalize(a):
    return Polytope(a.vertices)


# =============================================================================
# АРИФМЕТИКА МНОГОГРАННИКОВ
# =============================================================================

def _check_dim(a, b):
    if a.dim != b.dim:
        raise DimensionMismatchError(a.dim, b.dim, "polytope")


def _check_vector(a, v):
    v = np.asarray(v, dtype=float).ravel()
    if v.size != a.dim:
        raise DimensionMismatchError(a.dim, v.size)
    return v


def minkowski_sum(a, b):
    _check_dim(a, b)
    sums = (a.vertices[:, None, :] + b.vertices[None, :, :]).reshape(-1, a.dim)
    return Polytope(sums)


def minkowski_sum_all(items, dim=None):
    items = list(items)
    if not items:
        if dim is None:
            raise InputError("empty Minkowski sum needs an explicit dimension")
        return Polytope.zeros(dim)
    total = items[0]
    for item in items[1:]:
        total = minkowski_sum(total, item)
    return total


def scale(a, t):
    return Polytope(a.vertices * float(t))


def translate(a, v):
    v = _check_vector(a, v)
    return Polytope(a.vertices + v)


def convex_hull_union(polytopes):
    polytopes = list(polytopes)
    if not polytopes:
        raise InputError("convex hull of an empty list")
    dim = polytopes[0].dim
    for p in polytopes[1:]:
        if p.dim != dim:
            raise DimensionMismatchError(dim, p.dim, "polytope")
    return Polytope(np.vstack([p.vertices for p in polytopes]))


def support(a, h):
    h = _check_vector(a, h)
    return float(np.max(a.vertices @ h))


def lower_support(a, h):
    """min по многограннику <v, h> = -s(a, -h)."""
    h = _check_vector(a, h)
    return float(np.min(a.vertices @ h))


# =============================================================================
# БЛИЖАЙШАЯ ТОЧКА (алгоритм Вульфа)
# =============================================================================

def _affine_minimizer(q):
    k = q.shape[0]
    m = np.zeros((k + 1, k + 1))
    m[0, 1:] = 1.0
    m[1:, 0] = 1.0
    m[1:, 1:] = q @ q.T
    rhs = np.zeros(k + 1)
    rhs[0] = 1.0
    sol = np.linalg.lstsq(m, rhs, rcond=None)[0]
    return sol[1:]


def min_norm_point(points, max_iter=WOLFE_MAX_ITER):
    """Точка минимальной нормы в co{points}; возвращает (x, индексы носителя, веса)."""
    p = np.asarray(points, dtype=float)
    sq = np.einsum("ij,ij->i", p, p)
    scale_ = max(1.0, float(np.max(sq)))
    eps = 1e-14 * scale_
    weight_eps = 1e-13

    j = int(np.argmin(sq))
    support_set = [j]
    lam = np.array([1.0])
    x = p[j].copy()

    for _ in range(max_iter):
        g = p @ x
        j = int(np.argmin(g))
        if x @ x - g[j] <= eps or j in support_set:
            break
        support_set.append(j)
        lam = np.append(lam, 0.0)

        # малый цикл: аффинный минимизатор и отсечение отрицательных весов
        while True:
            q = p[support_set]
            alpha = _affine_minimizer(q)
            if np.all(alpha > weight_eps):
                lam = alpha
                x = alpha @ q
                break
            neg = alpha <= weight_eps
            denom = lam[neg] - alpha[neg]
            ratios = np.where(denom > 0, lam[neg] / np.where(denom > 0, denom, 1.0), 1.0)
            theta = float(np.clip(np.min(ratios), 0.0, 1.0))
            lam = theta * alpha + (1.0 - theta) * lam
            drop = lam <= weight_eps
            if not np.any(drop):
                drop[int(np.argmin(lam))] = True
            support_set = [s for s, d in zip(support_set, drop) if not d]
            lam = lam[~drop]
            lam = lam / lam.sum()
            x = lam @ p[support_set]
            if len(support_set) == 1:
                break
    else:
        logger.warning("алгоритм Вульфа не сошёлся за %d итераций", max_iter)

    return x, support_set, lam


def nearest_point(a, q):
    q = _check_vector(a, q)
    if a.is_singleton():
        point = a.vertices[0].copy()
        return point, float(np.linalg.norm(point - q))
    x, _, _ = min_norm_point(a.vertices - q)
    point = x + q
    return point, float(np.linalg.norm(x))


def distance(a, q):
    return nearest_point(a, q)[1]


def contains(a, q, tol=TOL):
    return distance(a, q) <= tol


# =============================================================================
# ЛИНЕЙНАЯ ОБОЛОЧКА
# =============================================================================

def span_basis(points, tol=1e-10):
    """Ортонормированный базис span{points} строками матрицы (k, n)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise InputError("span of an empty point list")
    _, s, vt = np.linalg.svd(pts, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((0, pts.shape[1]))
    rank = int(np.sum(s > tol * max(1.0, s[0])))
    return vt[:rank].copy()


def orthogonal_complement(basis, dim):
    """Ортонормированный базис ортогонального дополнения к строкам basis."""
    if basis.shape[0] == 0:
        return np.eye(dim)
    _, s, vt = np.linalg.svd(basis, full_matrices=True)
    rank = int(np.sum(s > 1e-10))
    return vt[rank:].copy()


# =============================================================================
# СЕТКИ НАПРАВЛЕНИЙ НА ЕДИНИЧНОЙ СФЕРЕ
# =============================================================================

def unit_directions(dim, count, seed=0):
    """Детерминированный набор единичных векторов в R^dim.

    dim = 1: {-1, 1}; dim = 2: равномерные углы; dim = 3: сфера Фибоначчи;
    выше: нормированные гауссовы векторы с фиксированным зерном.
    """
    if dim < 1:
        raise InputError("direction grid needs dim >= 1")
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    if dim == 2:
        angles = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(angles), np.sin(angles)])
    if dim == 3:
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        theta = np.pi * (1.0 + 5.0 ** 0.5) * k
        return np.column_stack([rho * np.cos(theta), rho * np.sin(theta), z])
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((count, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)
