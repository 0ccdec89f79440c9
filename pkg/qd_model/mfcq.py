"""Условие регулярности q.d.-MFCQ в конечномерном случае.

Две части: линейная независимость квазидифференциальных сумм равенств
(полный ранг всех матриц из [𝒟F]⁺) и направление h̄, ортогональное суммам
равенств и строго убывающее на суммах активных неравенств.
"""
import itertools
import logging
from dataclasses import dataclass, field
from math import factorial, prod
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from qd_model.config import (
    DEFAULT_SEED,
    LAMBDA_GRID_2D,
    LAMBDA_GRID_3D,
    SQUARE_RANK_METHOD,
    TOL,
    VERTEX_TUPLE_BUDGET,
)
from qd_model.errors import BudgetExceededError, InfeasiblePointError, InputError
from qd_model.expression import check_binding_params, eval_expr, qd_at, qd_matrix_at
from qd_model.lp_solver import solve_lp
from qd_model.polytope import Polytope, contains, orthogonal_complement, span_basis, unit_directions
from qd_model.quasidiff import matrix_qd_plus, qd_plus_set

logger = logging.getLogger(__name__)

HYPOTHESIS_CAVEAT = "closedness and convexity of D(y) assumed, not checked"


# =============================================================================
# АКТИВНЫЕ ОГРАНИЧЕНИЯ
# =============================================================================

def active_inequalities(s, b, tol=TOL):
    check_binding_params(b, s.params)
    return [i for i, g in enumerate(s.inequalities) if abs(eval_expr(g, b)) <= tol]


def feasibility_residuals(s, b, tol=TOL):
    """Нарушения F(x) = 0, g(x) <= 0 выше tol: {'f1': ..., 'g2': ...}."""
    check_binding_params(b, s.params)
    residuals = {}
    for j, f in enumerate(s.equalities):
        v = eval_expr(f, b)
        if abs(v) > tol:
            residuals[f"f{j + 1}"] = v
    for i, g in enumerate(s.inequalities):
        v = eval_expr(g, b)
        if v > tol:
            residuals[f"g{i + 1}"] = v
    return residuals


# =============================================================================
# ПОЛНЫЙ РАНГ
# =============================================================================

@dataclass(frozen=True)
class DetRange:
    min_det: float
    max_det: float
    full_rank: bool
    tuples: int
    argmin: Tuple[int, ...] = ()
    argmax: Tuple[int, ...] = ()


def full_rank_det_range(rows, budget=VERTEX_TUPLE_BUDGET):
    """Диапазон det по кортежам вершин строк; определитель полилинеен по строкам."""
    rows = list(rows)
    if not rows:
        raise InputError("no rows")
    l, n = len(rows), rows[0].dim
    if l != n:
        raise InputError(f"determinant range needs a square system, got {l} rows in R^{n}")
    sizes = [len(r) for r in rows]
    count = prod(sizes)
    if count > budget:
        raise BudgetExceededError("vertex tuples", count, budget, state={"row_sizes": sizes})

    grids = np.meshgrid(*[np.arange(k) for k in sizes], indexing="ij")
    idx = [g.ravel() for g in grids]
    mats = np.stack([rows[j].vertices[idx[j]] for j in range(l)], axis=1)
    dets = np.linalg.det(mats)
    lo, hi = int(np.argmin(dets)), int(np.argmax(dets))
    min_det, max_det = float(dets[lo]), float(dets[hi])
    full_rank = min_det > 0.0 or max_det < 0.0
    logger.debug("det по %d кортежам: [%.6g, %.6g]", count, min_det, max_det)
    return DetRange(
        min_det, max_det, full_rank, count,
        tuple(int(i[lo]) for i in idx), tuple(int(i[hi]) for i in idx),
    )


def _interval_product(intervals):
    lo, hi = 1.0, 1.0
    for a, b in intervals:
        ends = (lo * a, lo * b, hi * a, hi * b)
        lo, hi = min(ends), max(ends)
    return lo, hi


def _permutation_sign(perm):
    sign = 1
    perm = list(perm)
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def interval_det_bound(row_summands, budget=VERTEX_TUPLE_BUDGET):
    """Интервальная оценка det по слагаемым Минковского каждой строки.

    Каждый элемент матрицы раскладывается на интервалы слагаемых, произведения
    раскрываются поэлементно. Результат содержит точный диапазон, поэтому
    0 ∉ [lo, hi] — достаточное условие полного ранга.
    """
    rows = [list(r) for r in row_summands]
    l = len(rows)
    n = rows[0][0].dim
    if l != n:
        raise InputError("interval determinant bound needs a square system")
    count = factorial(n) * prod(len(r) for r in rows)
    if count > budget:
        raise BudgetExceededError("interval products", count, budget, state={"row_sizes": [len(r) for r in rows]})
    # entry[j][c] — список интервалов слагаемых строки j по координате c
    entry = [[[(float(p.vertices[:, c].min()), float(p.vertices[:, c].max())) for p in rows[j]]
              for c in range(n)] for j in range(l)]
    lo_total, hi_total = 0.0, 0.0
    for perm in itertools.permutations(range(n)):
        sign = _permutation_sign(perm)
        for choice in itertools.product(*[entry[j][perm[j]] for j in range(l)]):
            lo, hi = _interval_product(choice)
            if sign < 0:
                lo, hi = -hi, -lo
            lo_total += lo
            hi_total += hi
    return lo_total, hi_total, bool(lo_total > 0.0 or hi_total < 0.0)


def _zero_in_combination(rows, lam):
    """LP: 0 ∈ Σ λ_j A_j (веса по вершинам каждого A_j)."""
    n = rows[0].dim
    blocks = [lam_j * r.vertices.T for lam_j, r in zip(lam, rows)]
    a_point = np.hstack(blocks)
    sizes = [len(r) for r in rows]
    simplex = np.zeros((len(rows), sum(sizes)))
    start = 0
    for j, k in enumerate(sizes):
        simplex[j, start:start + k] = 1.0
        start += k
    a_eq = np.vstack([a_point, simplex])
    b_eq = np.concatenate([np.zeros(n), np.ones(len(rows))])
    return solve_lp(np.zeros(sum(sizes)), a_eq=a_eq, b_eq=b_eq, bounds=(0, None)).feasible


@dataclass(frozen=True)
class RankCertificate:
    full_rank: bool
    method: str
    det_range: Optional[DetRange] = None
    witness_lambda: Optional[np.ndarray] = None
    density: Optional[int] = None

    def to_dict(self):
        out = {"full_rank": self.full_rank, "method": self.method}
        if self.det_range is not None:
            out["det_range"] = [self.det_range.min_det, self.det_range.max_det]
        if self.witness_lambda is not None:
            out["witness_lambda"] = self.witness_lambda.tolist()
        if self.density is not None:
            out["density"] = self.density
        return out


def full_rank_general(rows, grid_density=None, method=None, seed=DEFAULT_SEED, tol=TOL):
    """Линейная независимость сумм A_1..A_l: 0 ∈ Σλ_j A_j только при λ = 0.

    l = 1 — точно (0 ∉ A_1); l = n — по диапазону определителя; иначе сетка λ
    на единичной сфере, ответ "certified up to grid".
    """
    rows = list(rows)
    l, n = len(rows), rows[0].dim
    if l > n:
        return RankCertificate(False, "overdetermined")
    if method is None:
        method = "single-row" if l == 1 else ("det-range" if l == n else "lambda-grid")

    if method == "single-row":
        ok = not contains(rows[0], np.zeros(n), tol)
        return RankCertificate(ok, method, witness_lambda=None if ok else np.ones(1))
    if method == "det-range":
        dr = full_rank_det_range(rows)
        return RankCertificate(dr.full_rank, method, det_range=dr)

    if grid_density is None:
        grid_density = LAMBDA_GRID_2D if l <= 2 else LAMBDA_GRID_3D
    for lam in unit_directions(l, grid_density, seed=seed):
        if _zero_in_combination(rows, lam):
            logger.info("линейная зависимость при λ = %s", lam)
            return RankCertificate(False, "lambda-grid", witness_lambda=lam.copy(), density=grid_density)
    return RankCertificate(True, "lambda-grid", density=grid_density)


# =============================================================================
# НАПРАВЛЕНИЕ h̄
# =============================================================================

@dataclass(frozen=True)
class HbarResult:
    hbar: Optional[np.ndarray]
    margin: float
    span_rank: int


def find_hbar(eq_sums, ineq_sums, dim, tol=TOL):
    """max t: <v, h> <= -t на вершинах сумм неравенств, h ⊥ суммам равенств, ‖h‖∞ <= 1."""
    eq_sums, ineq_sums = list(eq_sums), list(ineq_sums)
    if eq_sums:
        basis = span_basis(np.vstack([p.vertices for p in eq_sums]))
    else:
        basis = np.zeros((0, dim))
    comp = orthogonal_complement(basis, dim)
    k = comp.shape[0]
    span_rank = basis.shape[0]

    if not ineq_sums:
        # второе требование пусто
        hbar = comp[0].copy() if k else np.zeros(dim)
        return HbarResult(hbar, float("inf"), span_rank)
    if k == 0:
        return HbarResult(None, float("-inf"), span_rank)

    verts = np.vstack([p.vertices for p in ineq_sums])
    proj = verts @ comp.T  # <v, C^T a>
    # переменные (a, t): max t при proj a + t <= 0, -1 <= C^T a <= 1
    a_ub = np.vstack([
        np.hstack([proj, np.ones((proj.shape[0], 1))]),
        np.hstack([comp.T, np.zeros((dim, 1))]),
        np.hstack([-comp.T, np.zeros((dim, 1))]),
    ])
    b_ub = np.concatenate([np.zeros(proj.shape[0]), np.ones(2 * dim)])
    objective = np.zeros(k + 1)
    objective[-1] = 1.0
    outcome = solve_lp(objective, a_ub=a_ub, b_ub=b_ub, maximize=True)
    if not outcome.feasible:
        return HbarResult(None, float("-inf"), span_rank)
    t_star = outcome.objective
    if t_star <= tol:
        return HbarResult(None, float(t_star), span_rank)

    # второй шаг: среди оптимальных h — с минимальной ‖h‖₁
    a_vars = k
    u_vars = dim
    obj2 = np.concatenate([np.zeros(a_vars), np.ones(u_vars)])
    a2 = np.vstack([
        np.hstack([proj, np.zeros((proj.shape[0], u_vars))]),
        np.hstack([comp.T, -np.eye(dim)]),
        np.hstack([-comp.T, -np.eye(dim)]),
        np.hstack([comp.T, np.zeros((dim, u_vars))]),
        np.hstack([-comp.T, np.zeros((dim, u_vars))]),
    ])
    b2 = np.concatenate([
        np.full(proj.shape[0], -t_star * (1.0 - 1e-9)),
        np.zeros(2 * dim),
        np.ones(2 * dim),
    ])
    bounds = [(None, None)] * a_vars + [(0, None)] * u_vars
    refined = solve_lp(obj2, a_ub=a2, b_ub=b2, bounds=bounds)
    a = refined.point[:a_vars] if refined.feasible else outcome.point[:k]
    hbar = comp.T @ a
    hbar[np.abs(hbar) < 1e-12] = 0.0
    margin = float(np.min(-(verts @ hbar)))
    return HbarResult(hbar, margin, span_rank)


# =============================================================================
# q.d.-MFCQ
# =============================================================================

@dataclass
class MfcqReport:
    point: np.ndarray
    active_set: List[int]
    rank: RankCertificate
    hbar: Optional[np.ndarray]
    margin: float
    span_rank: int
    verdict: bool
    warnings: List[str] = field(default_factory=list)
    caveat: str = HYPOTHESIS_CAVEAT

    @property
    def full_rank(self):
        return self.rank.full_rank

    @property
    def det_range(self):
        dr = self.rank.det_range
        return None if dr is None else (dr.min_det, dr.max_det)

    def to_dict(self):
        return {
            "point": self.point.tolist(),
            "active_set": list(self.active_set),
            "rank": self.rank.to_dict(),
            "hbar": None if self.hbar is None else self.hbar.tolist(),
            "margin": self.margin,
            "span_rank": self.span_rank,
            "verdict": self.verdict,
            "warnings": list(self.warnings),
            "caveat": self.caveat,
        }


def qd_mfcq_from_sums(eq_sums, ineq_sums, dim, point=None, active_set=(), grid_density=None,
                      seed=DEFAULT_SEED, tol=TOL, rank=None):
    """q.d.-MFCQ по готовым квазидифференциальным суммам (любое представление)."""
    eq_sums, ineq_sums = list(eq_sums), list(ineq_sums)
    if rank is None:
        rank = full_rank_general(eq_sums, grid_density=grid_density, seed=seed, tol=tol) \
            if eq_sums else RankCertificate(True, "none")
    hb = find_hbar(eq_sums, ineq_sums, dim, tol)
    verdict = bool(rank.full_rank and hb.hbar is not None)
    warnings = []
    if eq_sums and hb.span_rank == dim:
        warnings.append(
            f"equality span has full dimension {dim}: q.d.-MFCQ is only sufficient here "
            "and is expected to fail whenever an inequality is active"
        )
    point = np.zeros(dim) if point is None else np.asarray(point, dtype=float)
    return MfcqReport(point, list(active_set), rank, hb.hbar,
                      hb.margin, hb.span_rank, verdict, warnings)


def qd_mfcq(s, b, grid_density=None, seed=DEFAULT_SEED, tol=TOL, rank_method=None):
    """rank_method="interval" — интервальная оценка det по слагаемым [∂̲f_j, ∂̄f_j].

    Для квадратной системы (l = n) по умолчанию берётся SQUARE_RANK_METHOD,
    точный диапазон det — по rank_method="det-range".
    """
    residuals = feasibility_residuals(s, b, tol)
    if residuals:
        raise InfeasiblePointError(residuals)
    active = active_inequalities(s, b, tol)
    logger.debug("активные ограничения %s", active)
    mq = qd_matrix_at(s.equalities, b, tol) if s.equalities else None
    eq_sums = matrix_qd_plus(mq) if mq is not None else []
    ineq_sums = [qd_plus_set(qd_at(s.inequalities[i], b, tol)) for i in active]
    if rank_method is None and mq is not None and len(mq.rows) == s.n:
        rank_method = SQUARE_RANK_METHOD
    rank = None
    if rank_method == "interval" and mq is not None:
        lo, hi, ok = interval_det_bound([[row.sub, row.super] for row in mq.rows])
        rank = RankCertificate(ok, "interval", det_range=DetRange(lo, hi, ok, 0))
    elif rank_method is not None and mq is not None:
        rank = full_rank_general(eq_sums, grid_density=grid_density, method=rank_method, seed=seed, tol=tol)
    return qd_mfcq_from_sums(eq_sums, ineq_sums, s.n, b.point, active, grid_density, seed, tol, rank)


def _jacobian(rows):
    if rows is None or np.size(rows) == 0:
        return None
    return np.atleast_2d(np.asarray(rows, dtype=float))


def classical_mfcq(jac_eq, jac_ineq, tol=TOL):
    """Классическое MFCQ по якобианам: полный ранг и h с J_eq h = 0, J_ineq h < 0."""
    jac_eq = _jacobian(jac_eq)
    jac_ineq = _jacobian(jac_ineq)
    dims = [j.shape[1] for j in (jac_eq, jac_ineq) if j is not None]
    if not dims:
        raise InputError("classical MFCQ needs at least one Jacobian row")
    dim = dims[0]
    if jac_eq is not None and np.linalg.matrix_rank(jac_eq) < jac_eq.shape[0]:
        return False
    eq = [Polytope.point(r) for r in jac_eq] if jac_eq is not None else []
    ineq = [Polytope.point(r) for r in jac_ineq] if jac_ineq is not None else []
    return find_hbar(eq, ineq, dim, tol).hbar is not None


# =============================================================================
# ПАРАМЕТРИЧЕСКИЕ ПРОГОНЫ
# =============================================================================

def locate_verdict_flip(fn, lo, hi, tol=1e-6):
    """Бисекция точки смены булева вердикта fn на [lo, hi]."""
    v_lo, v_hi = bool(fn(lo)), bool(fn(hi))
    if v_lo == v_hi:
        raise InputError(f"verdict does not change on [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if bool(fn(mid)) == v_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mfcq_verdict_for(s, point, name, tol=TOL, rank_method=None):
    """Функция p -> вердикт q.d.-MFCQ при значении параметра name = p."""
    def verdict(value):
        sp = s.with_params(**{name: value})
        return qd_mfcq(sp, sp.binding(point), tol=tol, rank_method=rank_method).verdict
    return verdict


def sweep_parameter(s, point, name, values, tol=TOL, rank_method=None):
    rows = []
    for value in values:
        sp = s.with_params(**{name: float(value)})
        rep = qd_mfcq(sp, sp.binding(point), tol=tol, rank_method=rank_method)
        dr = rep.det_range
        rows.append({
            name: float(value),
            "verdict": rep.verdict,
            "full_rank": rep.full_rank,
            "det_min": dr[0] if dr else np.nan,
            "det_max": dr[1] if dr else np.nan,
            "margin": rep.margin,
        })
    return pd.DataFrame(rows)
