"""Маленькие плотные LP поверх scipy.optimize.linprog (HiGHS).

Все вопросы допустимости в пакете (принадлежность оболочке, поиск h̄,
множители) сводятся к solve_lp. Недопустимость и неограниченность —
это статусы ответа, а не исключения.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from qd_model.config import LP_TOL
from qd_model.errors import QdError

logger = logging.getLogger(__name__)

FEASIBLE = "feasible-with-point"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_HIGHS_OPTIONS = {
    "presolve": True,
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


@dataclass(frozen=True)
class LpOutcome:
    status: str
    point: Optional[np.ndarray] = None
    objective: Optional[float] = None

    def __post_init__(self):
        if (self.status == FEASIBLE) != (self.point is not None):
            raise ValueError("point must be present iff status is feasible-with-point")
        if (self.point is None) != (self.objective is None):
            raise ValueError("objective must be present iff point is")

    @property
    def feasible(self):
        return self.status == FEASIBLE


def _as_matrix(rows, n):
    if rows is None:
        return None
    mat = np.asarray(rows, dtype=float)
    if mat.size == 0:
        return None
    return mat.reshape(-1, n)


def solve_lp(objective, a_eq=None, b_eq=None, a_ub=None, b_ub=None, bounds=None, maximize=False):
    """Решает min (или max) <objective, x> при A_eq x = b_eq, A_ub x <= b_ub, bounds.

    bounds — как в linprog: пара (lo, hi) для всех переменных или список пар;
    None означает свободные переменные.
    """
    c = np.asarray(objective, dtype=float).ravel()
    n = c.size
    a_eq = _as_matrix(a_eq, n)
    a_ub = _as_matrix(a_ub, n)
    b_eq = None if a_eq is None else np.asarray(b_eq, dtype=float).ravel()
    b_ub = None if a_ub is None else np.asarray(b_ub, dtype=float).ravel()
    if bounds is None:
        bounds = (None, None)

    sign = -1.0 if maximize else 1.0
    res = linprog(
        sign * c,
        A_ub=a_ub, b_ub=b_ub,
        A_eq=a_eq, b_eq=b_eq,
        bounds=bounds,
        method="highs",
        options=_HIGHS_OPTIONS,
    )

    if res.status == 0:
        point = np.asarray(res.x, dtype=float)
        _check_residuals(point, a_eq, b_eq, a_ub, b_ub)
        return LpOutcome(FEASIBLE, point, float(c @ point))
    if res.status == 2:
        return LpOutcome(INFEASIBLE)
    if res.status == 3:
        return LpOutcome(UNBOUNDED)
    raise QdError(f"LP solver failure (status {res.status}): {res.message}")


def _check_residuals(point, a_eq, b_eq, a_ub, b_ub):
    worst = 0.0
    if a_eq is not None:
        worst = max(worst, float(np.max(np.abs(a_eq @ point - b_eq))))
    if a_ub is not None:
        worst = max(worst, float(np.max(a_ub @ point - b_ub)))
    if worst > LP_TOL:
        logger.warning("невязка LP %.3e превышает допуск %.1e", worst, LP_TOL)
    return worst
