"""Необходимые условия оптимальности через точный штраф ℓ1.

Ψ_c = u + c·(Σ|f_j| + Σ max{g_i, 0}). Стационарность: 0 ∈ ∂̲Ψ_c(x̄) + w* для
всех w* ∈ ∂̄Ψ_c(x̄). Условие на множители проверяется LP для каждого набора
вершин (w₀*, v_j*, w_j*, z_i*); при фиксированном c оба условия равносильны.
"""
import itertools
import logging
from dataclasses import dataclass, field
from math import prod
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from qd_model.config import DEFAULT_C_LADDER, DEFAULT_GRID, SELECTION_BUDGET, TOL
from qd_model.errors import BudgetExceededError, DimensionMismatchError, InfeasiblePointError, InputError
from qd_model.expression import (
    Abs,
    Add,
    Binding,
    Const,
    Max,
    Mul,
    check_binding_params,
    eval_expr,
    max_variable,
    qd_at,
    sum_of,
)
from qd_model.lp_solver import solve_lp
from qd_model.mfcq import feasibility_residuals, qd_mfcq
from qd_model.polytope import contains
from qd_model.quasidiff import qd_abs, qd_add, qd_max, qd_scale, qd_shift, zero_qd
from qd_model.regularity import SystemSpec, estimate_error_bound

logger = logging.getLogger(__name__)


# =============================================================================
# ЗАДАЧА И ЕЁ КВАЗИДИФФЕРЕНЦИАЛЫ
# =============================================================================

@dataclass(frozen=True)
class ProgramSpec:
    objective: object
    equalities: Tuple = ()
    inequalities: Tuple = ()
    n: int = 1
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "equalities", tuple(self.equalities))
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        object.__setattr__(self, "params", {k: float(v) for k, v in dict(self.params).items()})
        for e in (self.objective,) + self.equalities + self.inequalities:
            if max_variable(e) > self.n:
                raise DimensionMismatchError(self.n, max_variable(e), "expression variables")

    def binding(self, x):
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.n:
            raise DimensionMismatchError(self.n, x.size, "point")
        return Binding(x, self.params)

    def with_params(self, **updates):
        params = dict(self.params)
        params.update(updates)
        return ProgramSpec(self.objective, self.equalities, self.inequalities, self.n, params)


@dataclass(frozen=True)
class ProgramQuasidiffs:
    """𝒟u, 𝒟f_j, 𝒟g_i в точке x̄ и значения g_i(x̄)."""

    u: object
    f: Tuple = ()
    g: Tuple = ()
    g_values: Tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "f", tuple(self.f))
        object.__setattr__(self, "g", tuple(self.g))
        gv = tuple(float(v) for v in self.g_values) if self.g_values else tuple(0.0 for _ in self.g)
        if len(gv) != len(self.g):
            raise DimensionMismatchError(len(self.g), len(gv), "inequality values")
        object.__setattr__(self, "g_values", gv)

    @property
    def dim(self):
        return self.u.dim

    def active(self, tol=TOL):
        return [i for i, v in enumerate(self.g_values) if abs(v) <= tol]

    def shifted(self, which, index, c):
        """Эквивалентный сдвиг одного квазидифференциала на многогранник c."""
        if which == "u":
            return ProgramQuasidiffs(qd_shift(self.u, c), self.f, self.g, self.g_values)
        items = list(getattr(self, which))
        items[index] = qd_shift(items[index], c)
        if which == "f":
            return ProgramQuasidiffs(self.u, items, self.g, self.g_values)
        return ProgramQuasidiffs(self.u, self.f, items, self.g_values)


def program_quasidiffs(p, b, tol=TOL):
    check_binding_params(b, p.params, "program")
    return ProgramQuasidiffs(
        qd_at(p.objective, b, tol),
        [qd_at(f, b, tol) for f in p.equalities],
        [qd_at(g, b, tol) for g in p.inequalities],
        [eval_expr(g, b) for g in p.inequalities],
    )


def _check_feasible(p, b, tol):
    residuals = feasibility_residuals(p, b, tol)
    if residuals:
        raise InfeasiblePointError(residuals)


# =============================================================================
# ШТРАФ И СТАЦИОНАРНОСТЬ
# =============================================================================

def build_penalty(p, c):
    if c < 0:
        raise InputError("penalty parameter c must be >= 0")
    if c == 0:
        return p.objective
    terms = [Abs(f) for f in p.equalities] + [Max((g, Const(0.0))) for g in p.inequalities]
    if not terms:
        return p.objective
    return Add(p.objective, Mul(Const(float(c)), sum_of(terms)))


def penalty_qd(qds, c, tol=TOL):
    """𝒟Ψ_c(x̄) из заданных квазидифференциалов (x̄ допустима: f_j(x̄) = 0)."""
    total = qds.u
    for q in qds.f:
        total = qd_add(total, qd_scale(qd_abs(q, 0.0, tol), c))
    for q, v in zip(qds.g, qds.g_values):
        total = qd_add(total, qd_scale(qd_max([(v, q), (0.0, zero_qd(q.dim))], tol), c))
    return total


@dataclass(frozen=True)
class Stationarity:
    holds: bool
    violating_w: Optional[np.ndarray]
    c: float

    def to_dict(self):
        return {
            "c": self.c,
            "holds": self.holds,
            "violating_w": None if self.violating_w is None else self.violating_w.tolist(),
        }


def stationarity_of(q, c=0.0, tol=TOL):
    """-∂̄ ⊆ ∂̲: достаточно проверить вершины ∂̄."""
    for w in q.super.vertices:
        if not contains(q.sub, -w, tol):
            return Stationarity(False, w.copy(), float(c))
    return Stationarity(True, None, float(c))


def check_stationarity(p, b, c, quasidiffs=None, tol=TOL):
    if p is not None and b is not None:
        check_binding_params(b, p.params, "program")
    if quasidiffs is None:
        q = qd_at(build_penalty(p, c), b, tol)
    else:
        q = penalty_qd(quasidiffs, c, tol)
    result = stationarity_of(q, c, tol)
    logger.debug("стационарность при c = %g: %s", c, result.holds)
    return result


# =============================================================================
# МНОЖИТЕЛИ
# =============================================================================

@dataclass(frozen=True)
class Selection:
    """Индексы вершин: w0 в ∂̄u, v[j] в ∂̲f_j, w[j] в ∂̄f_j, z[i] в ∂̄g_i (активные i)."""

    w0: int = 0
    v: Tuple[int, ...] = ()
    w: Tuple[int, ...] = ()
    z: Tuple[Tuple[int, int], ...] = ()

    def to_dict(self):
        return {"w0": self.w0, "v": list(self.v), "w": list(self.w), "z": {str(i): k for i, k in self.z}}


def _vertex_index(polytope, point, what):
    point = np.asarray(point, dtype=float)
    dists = np.max(np.abs(polytope.vertices - point), axis=1)
    k = int(np.argmin(dists))
    if dists[k] > 1e-9:
        raise InputError(f"{what}: {point.tolist()} is not a vertex of {polytope!r}")
    return k


def selection_from_points(qds, w0=None, v=(), w=(), z=None):
    """Набор по координатам вершин (None — единственная/первая вершина)."""
    w0_idx = 0 if w0 is None else _vertex_index(qds.u.super, w0, "w0")
    v_idx = tuple(_vertex_index(q.sub, pt, f"v{j + 1}") for j, (q, pt) in enumerate(zip(qds.f, v)))
    w_idx = tuple(_vertex_index(q.super, pt, f"w{j + 1}") for j, (q, pt) in enumerate(zip(qds.f, w)))
    z = z or {}
    z_idx = tuple((i, _vertex_index(qds.g[i].super, z[i], f"z{i + 1}") if i in z else 0) for i in qds.active())
    return Selection(w0_idx, v_idx, w_idx, z_idx)


@dataclass(frozen=True)
class MultiplierCertificate:
    feasible: bool
    selection: Selection
    mu_lower: np.ndarray
    mu_upper: np.ndarray
    lam: np.ndarray
    residual: float
    c_bound: Optional[float]

    @property
    def bound_value(self):
        parts = list(self.mu_lower + self.mu_upper) + list(self.lam)
        return float(max(parts)) if parts else 0.0

    def to_dict(self):
        return {
            "feasible": self.feasible,
            "selection": self.selection.to_dict(),
            "mu_lower": self.mu_lower.tolist(),
            "mu_upper": self.mu_upper.tolist(),
            "lambda": self.lam.tolist(),
            "residual": self.residual,
            "c_bound": self.c_bound,
            "bound_value": self.bound_value,
        }


def check_multipliers(p, b, selection, c_bound=None, quasidiffs=None, tol=TOL):
    """LP: 0 ∈ ∂̲u + w₀* - Σμ̲_j(v_j* + ∂̄f_j) + Σμ̄_j(∂̲f_j + w_j*) + Σλ_i(∂̲g_i + z_i*).

    Каждое слагаемое μ·C задаётся неотрицательными весами вершин C, μ — сумма весов.
    """
    if p is not None and b is not None:
        check_binding_params(b, p.params, "program")
    qds = program_quasidiffs(p, b, tol) if quasidiffs is None else quasidiffs
    n = qds.dim
    l = len(qds.f)
    active = [i for i, _ in selection.z] if selection.z else qds.active(tol)
    z_map = dict(selection.z)
    if len(selection.v) != l or len(selection.w) != l:
        raise InputError(f"selection must pick v and w for each of {l} equalities")

    # блоки столбцов: (матрица n×k, к какой группе множителей относится)
    columns = [qds.u.sub.vertices.T]
    groups = [("alpha", None)]
    for j, q in enumerate(qds.f):
        vj = q.sub.vertices[selection.v[j]]
        wj = q.super.vertices[selection.w[j]]
        columns.append(-(vj[None, :] + q.super.vertices).T)
        groups.append(("mu_lower", j))
        columns.append((q.sub.vertices + wj[None, :]).T)
        groups.append(("mu_upper", j))
    for i in active:
        q = qds.g[i]
        zi = q.super.vertices[z_map.get(i, 0)]
        columns.append((q.sub.vertices + zi[None, :]).T)
        groups.append(("lambda", i))

    sizes = [c.shape[1] for c in columns]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    w0 = qds.u.super.vertices[selection.w0]

    a_eq = [np.hstack(columns)]
    b_eq = [-w0]
    simplex = np.zeros((1, total))
    simplex[0, offsets[0]:offsets[1]] = 1.0
    a_eq.append(simplex)
    b_eq.append(np.ones(1))

    a_ub, b_ub = [], []
    if c_bound is not None:
        for j in range(l):
            row = np.zeros(total)
            for g_idx in (1 + 2 * j, 2 + 2 * j):
                row[offsets[g_idx]:offsets[g_idx + 1]] = 1.0
            a_ub.append(row)
            b_ub.append(float(c_bound))
        for k in range(len(active)):
            g_idx = 1 + 2 * l + k
            row = np.zeros(total)
            row[offsets[g_idx]:offsets[g_idx + 1]] = 1.0
            a_ub.append(row)
            b_ub.append(float(c_bound))

    objective = np.ones(total)
    objective[offsets[0]:offsets[1]] = 0.0
    outcome = solve_lp(
        objective,
        a_eq=np.vstack(a_eq), b_eq=np.concatenate(b_eq),
        a_ub=np.array(a_ub) if a_ub else None, b_ub=np.array(b_ub) if b_ub else None,
        bounds=(0, None),
    )

    m = len(qds.g)
    mu_lower, mu_upper, lam = np.zeros(l), np.zeros(l), np.zeros(m)
    if not outcome.feasible:
        logger.info("множители не существуют для набора %s", selection.to_dict())
        return MultiplierCertificate(False, selection, mu_lower, mu_upper, lam, float("inf"), c_bound)

    x = outcome.point
    for g_idx, (kind, idx) in enumerate(groups):
        weight = float(np.sum(x[offsets[g_idx]:offsets[g_idx + 1]]))
        if kind == "mu_lower":
            mu_lower[idx] = weight
        elif kind == "mu_upper":
            mu_upper[idx] = weight
        elif kind == "lambda":
            lam[idx] = weight
    residual = float(np.max(np.abs(np.hstack(columns) @ x + w0))) if n else 0.0
    return MultiplierCertificate(True, selection, mu_lower, mu_upper, lam, residual, c_bound)


@dataclass
class SelectionVerdict:
    holds: bool
    checked: int
    total: int
    failing: Optional[MultiplierCertificate]
    c_bound: Optional[float]

    def to_dict(self):
        return {
            "holds": self.holds,
            "checked": self.checked,
            "total": self.total,
            "failing": None if self.failing is None else self.failing.to_dict(),
            "c_bound": self.c_bound,
        }


def iter_selections(qds, tol=TOL):
    active = qds.active(tol)
    ranges = [range(len(qds.u.super))]
    ranges += [range(len(q.sub)) for q in qds.f]
    ranges += [range(len(q.super)) for q in qds.f]
    ranges += [range(len(qds.g[i].super)) for i in active]
    l = len(qds.f)
    total = prod(len(r) for r in ranges)
    gen = (
        Selection(combo[0], tuple(combo[1:1 + l]), tuple(combo[1 + l:1 + 2 * l]),
                  tuple(zip(active, combo[1 + 2 * l:])))
        for combo in itertools.product(*ranges)
    )
    return total, gen


def check_all_selections(p, b, c_bound, quasidiffs=None, budget=SELECTION_BUDGET, tol=TOL):
    qds = program_quasidiffs(p, b, tol) if quasidiffs is None else quasidiffs
    total, selections = iter_selections(qds, tol)
    checked = 0
    for sel in selections:
        if checked >= budget:
            raise BudgetExceededError(
                "vertex selections", total, budget,
                state=SelectionVerdict(True, checked, total, None, c_bound),
            )
        cert = check_multipliers(p, b, sel, c_bound, qds, tol)
        checked += 1
        if not cert.feasible:
            return SelectionVerdict(False, checked, total, cert, c_bound)
    return SelectionVerdict(True, checked, total, None, c_bound)


# =============================================================================
# ОЦЕНКА ПОРОГА c*
# =============================================================================

@dataclass(frozen=True)
class CStarEstimate:
    c_star: Optional[float]
    c_max: float
    label: str = "empirical estimate"

    def to_dict(self):
        return {"c_star": self.c_star, "c_max": self.c_max, "label": self.label}


def estimate_c_star(p, b, c_max=DEFAULT_C_LADDER[-1], tol=1e-6, quasidiffs=None):
    """Наименьшее c в [0, c_max] со стационарностью (монотонно по c)."""
    def holds(c):
        return check_stationarity(p, b, c, quasidiffs).holds

    if not holds(c_max):
        return CStarEstimate(None, float(c_max))
    if holds(0.0):
        return CStarEstimate(0.0, float(c_max))
    lo, hi = 0.0, float(c_max)
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if holds(mid):
            hi = mid
        else:
            lo = mid
    return CStarEstimate(hi, float(c_max))


# =============================================================================
# СВОДНАЯ ПРОВЕРКА
# =============================================================================

@dataclass
class OptimalityReport:
    point: np.ndarray
    ladder: List[float]
    stationarity: List[Stationarity]
    selections: List[SelectionVerdict]
    c_star: CStarEstimate
    mfcq_verdict: Optional[bool] = None
    error_bound_tau: Optional[float] = None

    @property
    def holds(self):
        return any(s.holds for s in self.stationarity)

    @property
    def summary(self):
        if self.holds:
            return "conditions hold for large c"
        return "conditions fail - point not optimal"

    def table(self):
        return pd.DataFrame([
            {"c": s.c, "stationarity": s.holds, "all_selections": v.holds, "checked": v.checked}
            for s, v in zip(self.stationarity, self.selections)
        ])

    def to_dict(self):
        return {
            "point": self.point.tolist(),
            "ladder": list(self.ladder),
            "stationarity": [s.to_dict() for s in self.stationarity],
            "selections": [v.to_dict() for v in self.selections],
            "c_star": self.c_star.to_dict(),
            "summary": self.summary,
            "pathways": {
                "qd_mfcq": self.mfcq_verdict,
                "local_error_bound_tau": self.error_bound_tau,
            },
        }


def check_optimality(p, b, ladder=DEFAULT_C_LADDER, quasidiffs=None, error_bound=False, r=0.1,
                     grid=DEFAULT_GRID, tol=TOL):
    """Стационарность и множители по лестнице c; пути обоснования: q.d.-MFCQ и error bound."""
    _check_feasible(p, b, tol)
    qds = program_quasidiffs(p, b, tol) if quasidiffs is None else quasidiffs
    stat, sel = [], []
    for c in ladder:
        st = check_stationarity(p, b, c, qds, tol)
        verdict = check_all_selections(p, b, c, qds, tol=tol)
        if st.holds != verdict.holds:
            logger.warning("c = %g: стационарность %s, множители %s", c, st.holds, verdict.holds)
        stat.append(st)
        sel.append(verdict)

    report = OptimalityReport(b.point, [float(c) for c in ladder], stat, sel,
                              estimate_c_star(p, b, max(ladder), quasidiffs=qds))
    if p.equalities or p.inequalities:
        system = SystemSpec(p.equalities, p.inequalities, p.n, p.params)
        report.mfcq_verdict = qd_mfcq(system, b, tol=tol).verdict
        if error_bound:
            report.error_bound_tau = estimate_error_bound(system, b.point, r, grid, tol=tol).tau
    return report
