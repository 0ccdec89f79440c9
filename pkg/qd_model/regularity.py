"""Метрическая регулярность систем F(x, p) = y, g_i(x, p) <= z_i.

Проверяемый критерий: существует w* ∈ ∂̄ψ(x) с d(0, ∂̲ψ(x) + w*) > 1/K, где
ψ(x) = ‖F(x, p) - y‖ + Σ max{g_i(x, p) - z_i, 0} — функция расстояния до цели.
Рядом с критерием лежат выборочные оракулы: сильный наклон ψ и сеточная
проверка оценки d(x, S(y, z)) <= K·ψ(x).
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from qd_model.config import (
    DEFAULT_GRID,
    DEFAULT_NORM,
    DEFAULT_SEED,
    SLOPE_RADII,
    SLOPE_SAMPLES_PER_RADIUS,
    SOLUTION_SAMPLE_BUDGET,
    TOL,
)
from qd_model.errors import BudgetExceededError, DimensionMismatchError, InputError, NormKinkError
from qd_model.expression import (
    Abs,
    Binding,
    Const,
    Max,
    Sub,
    eval_many,
    max_variable,
    qd_at,
    qd_matrix_at,
    sum_of,
)
from qd_model.polytope import distance, unit_directions
from qd_model.quasidiff import qd_add, qd_plus_set, qd_scalarize, steepest_rate

logger = logging.getLogger(__name__)


# =============================================================================
# СИСТЕМА И ФУНКЦИЯ РАССТОЯНИЯ
# =============================================================================

@dataclass(frozen=True)
class SystemSpec:
    equalities: Tuple = ()
    inequalities: Tuple = ()
    n: int = 1
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "equalities", tuple(self.equalities))
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        object.__setattr__(self, "params", {k: float(v) for k, v in dict(self.params).items()})
        if not self.equalities and not self.inequalities:
            raise InputError("system needs at least one equality or inequality")
        if self.n < 1:
            raise InputError("system dimension must be >= 1")
        for e in self.equalities + self.inequalities:
            if max_variable(e) > self.n:
                raise DimensionMismatchError(self.n, max_variable(e), "expression variables")

    @property
    def l(self):
        return len(self.equalities)

    @property
    def m(self):
        return len(self.inequalities)

    def binding(self, x):
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.n:
            raise DimensionMismatchError(self.n, x.size, "point")
        return Binding(x, self.params)

    def with_params(self, **updates):
        params = dict(self.params)
        params.update(updates)
        return SystemSpec(self.equalities, self.inequalities, self.n, params)

    def values(self, points):
        """Значения (F, G) в массиве точек (..., n): формы (..., l) и (..., m)."""
        pts = np.asarray(points, dtype=float)
        shape = pts.shape[:-1]
        f = np.stack([eval_many(e, pts, self.params) for e in self.equalities], axis=-1) \
            if self.equalities else np.zeros(shape + (0,))
        g = np.stack([eval_many(e, pts, self.params) for e in self.inequalities], axis=-1) \
            if self.inequalities else np.zeros(shape + (0,))
        return f, g


def _target(values, size, what):
    v = np.zeros(size) if values is None else np.asarray(values, dtype=float).ravel()
    if v.size != size:
        raise DimensionMismatchError(size, v.size, what)
    return v


def _inequality_part(s, z):
    return [Max((Const(0.0), Sub(g, Const(float(zi))))) for g, zi in zip(s.inequalities, z)]


@dataclass(frozen=True)
class DistanceFunction:
    """ψ_(y,z)(x) с вычислением значений и квазидифференциала."""

    system: SystemSpec
    y: np.ndarray
    z: np.ndarray
    norm: str
    expr: object

    @property
    def euclidean(self):
        return self.norm == "l2" and self.system.l >= 2

    def values(self, points):
        pts = np.asarray(points, dtype=float)
        if not self.euclidean:
            return eval_many(self.expr, pts, self.system.params)
        f, _ = self.system.values(pts)
        return np.linalg.norm(f - self.y, axis=-1) + eval_many(self.expr, pts, self.system.params)

    def value(self, x):
        return float(self.values(np.asarray(x, dtype=float)[None, :])[0])

    def qd(self, x, tol=TOL):
        b = self.system.binding(x)
        if not self.euclidean:
            return qd_at(self.expr, b, tol)
        f, _ = self.system.values(b.point[None, :])
        r = f[0] - self.y
        norm = float(np.linalg.norm(r))
        if norm <= tol:
            raise NormKinkError()
        # гладкая внешняя норма: ψ' = <r/‖r‖, F'(x, h)>
        mq = qd_matrix_at(self.system.equalities, b, tol)
        return qd_add(qd_scalarize(mq, r / norm), qd_at(self.expr, b, tol))


def psi_expr(s, y=None, z=None, norm=DEFAULT_NORM):
    y = _target(y, s.l, "y")
    z = _target(z, s.m, "z")
    if norm not in ("l1", "l2"):
        raise InputError(f"unknown norm '{norm}' (use l1 or l2)")
    ineq = _inequality_part(s, z)
    if norm == "l2" and s.l >= 2:
        return DistanceFunction(s, y, z, norm, sum_of(ineq))
    # при l <= 1 норма в Y не влияет на |f - y|
    eq = [Abs(Sub(Const(float(yj)), f)) for f, yj in zip(s.equalities, y)]
    return DistanceFunction(s, y, z, norm, sum_of(eq + ineq))


# =============================================================================
# УСЛОВИЕ НА КВАЗИДИФФЕРЕНЦИАЛ ψ
# =============================================================================

@dataclass(frozen=True)
class Condition4:
    holds: bool
    margin: float
    witness_w: np.ndarray
    positive: bool


def check_condition4(q, K, tol=TOL):
    if not K > 0:
        raise InputError("K must be positive")
    margin, w = steepest_rate(q)
    return Condition4(bool(margin > 1.0 / K), margin, w, bool(margin > tol))


def check_uderzo_condition(q, m):
    """d(0, ∂̲ψ + w*) > m для всех w* ∈ ∂̄ψ, т.е. d(0, [𝒟ψ]⁺) > m."""
    dist = distance(qd_plus_set(q), np.zeros(q.dim))
    return bool(dist > m), dist


@dataclass
class RegularityReport:
    point: np.ndarray
    y: np.ndarray
    z: np.ndarray
    psi: float
    condition4_margin: float
    witness_w: np.ndarray
    K_estimate: float
    outside_graph: bool
    holds: Optional[bool] = None
    K: Optional[float] = None
    uderzo_distance: Optional[float] = None
    slope_estimate: Optional[float] = None

    def to_dict(self):
        return {
            "point": self.point.tolist(),
            "y": self.y.tolist(),
            "z": self.z.tolist(),
            "psi": self.psi,
            "condition4_margin": self.condition4_margin,
            "witness_w": self.witness_w.tolist(),
            "K_estimate": self.K_estimate,
            "outside_graph": self.outside_graph,
            "holds": self.holds,
            "K": self.K,
            "uderzo_distance": self.uderzo_distance,
            "slope_estimate": self.slope_estimate,
        }


def regularity_margin_at(s, x, y=None, z=None, norm=DEFAULT_NORM, K=None, tol=TOL):
    psi = psi_expr(s, y, z, norm)
    x = np.asarray(x, dtype=float).ravel()
    q = psi.qd(x, tol)
    margin, w = steepest_rate(q)
    value = psi.value(x)
    report = RegularityReport(
        point=x,
        y=psi.y,
        z=psi.z,
        psi=value,
        condition4_margin=margin,
        witness_w=w,
        K_estimate=1.0 / margin if margin > 0 else float("inf"),
        outside_graph=bool(value > tol),
    )
    if K is not None:
        report.K = float(K)
        report.holds = check_condition4(q, K, tol).holds
    report.uderzo_distance = check_uderzo_condition(q, 0.0)[1]
    if not report.outside_graph:
        logger.info("точка (%s) лежит на графике: критерий относится к точкам вне графика", x)
    return report


def scan_margins(s, samples, norm=DEFAULT_NORM, tol=TOL):
    """Таблица запасов условия по выборке (x, y, z); точки на графике пропускаются."""
    rows = []
    for x, y, z in samples:
        rep = regularity_margin_at(s, x, y, z, norm, tol=tol)
        if not rep.outside_graph:
            continue
        row = {f"x{i + 1}": v for i, v in enumerate(rep.point)}
        row.update({f"y{j + 1}": v for j, v in enumerate(rep.y)})
        row.update({f"z{i + 1}": v for i, v in enumerate(rep.z)})
        row.update({"psi": rep.psi, "margin": rep.condition4_margin})
        rows.append(row)
    return pd.DataFrame(rows)


def random_outside_samples(s, center, r, count, seed=DEFAULT_SEED, ybar=None, zbar=None, tol=TOL):
    """count случайных (x, y, z) из r-окрестности вне графика."""
    rng = np.random.default_rng(seed)
    center = np.asarray(center, dtype=float).ravel()
    ybar = _target(ybar, s.l, "y")
    zbar = _target(zbar, s.m, "z")
    samples = []
    attempts = 0
    while len(samples) < count:
        attempts += 1
        if attempts > 100 * count:
            raise BudgetExceededError("outside-graph sampling attempts", attempts, 100 * count)
        x = center + rng.uniform(-r, r, size=s.n)
        y = ybar + rng.uniform(-r, r, size=s.l)
        z = zbar + rng.uniform(-r, r, size=s.m)
        if psi_expr(s, y, z).value(x) > tol:
            samples.append((x, y, z))
    return samples


@dataclass
class WitnessPath:
    margins: list
    all_outside: bool
    tends_to_zero: bool

    @property
    def label(self):
        if self.all_outside and self.tends_to_zero:
            return "consistent with non-regularity"
        return "no witness"


def necessity_witness_path(s, path, norm=DEFAULT_NORM, tol=TOL):
    """Запасы вдоль пути (x_k, y_k, z_k) -> (x̄, ȳ, z̄), не заходящего на график."""
    margins = []
    outside = True
    for x, y, z in path:
        rep = regularity_margin_at(s, x, y, z, norm, tol=tol)
        outside = outside and rep.outside_graph
        margins.append(rep.condition4_margin)
    arr = np.asarray(margins)
    shrinking = arr.size >= 2 and bool(np.all(np.diff(arr) <= tol)) and arr[-1] <= 1e-2 * max(arr[0], tol)
    return WitnessPath(margins, outside, bool(shrinking))


# =============================================================================
# СИЛЬНЫЙ НАКЛОН (выборочная оценка)
# =============================================================================

def sampled_strong_slope(fn, x, radii=SLOPE_RADII, samples=SLOPE_SAMPLES_PER_RADIUS, seed=DEFAULT_SEED):
    """Оценка limsup max{ψ(x) - ψ(u), 0}/‖x - u‖ по сферам убывающих радиусов.

    fn — векторная функция: массив (k, n) -> массив (k,).
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    base = float(np.asarray(fn(x[None, :]))[0])
    rng = np.random.default_rng(seed)
    ring = unit_directions(n, max(samples // 2, 2), seed=seed)
    estimates = []
    for r in radii:
        if n == 1:
            dirs = ring
        else:
            g = rng.standard_normal((max(samples - ring.shape[0], 1), n))
            dirs = np.vstack([ring, g / np.linalg.norm(g, axis=1, keepdims=True)])
        vals = np.asarray(fn(x[None, :] + r * dirs))
        estimates.append(float(np.max(np.maximum(base - vals, 0.0))) / r)
    logger.debug("оценки наклона по радиусам: %s", estimates)
    return float(np.median(estimates[-3:]))


# =============================================================================
# МНОЖЕСТВО РЕШЕНИЙ S(y, z) И РАССТОЯНИЕ ДО НЕГО
# =============================================================================

def compass_directions(n):
    """2 направления в R^1, 8 в R^2, 26 в R^3 (нормированные)."""
    dirs = np.array([d for d in itertools.product((-1.0, 0.0, 1.0), repeat=n) if any(d)])
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def _bisect(fn, lo_pts, hi_pts, lo_vals, iterations=50):
    """Бисекция корня на отрезках [lo, hi] со сменой знака fn."""
    lo = lo_pts.copy()
    hi = hi_pts.copy()
    s_lo = lo_vals.copy()
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        s_mid = fn(mid)
        same = np.sign(s_mid) == np.sign(s_lo)
        lo = np.where(same[:, None], mid, lo)
        s_lo = np.where(same, s_mid, s_lo)
        hi = np.where(same[:, None], hi, mid)
    return 0.5 * (lo + hi)


class SolutionSetSampler:
    """Плотная аппроксимация S(y, z) = {x : F(x) = y, g(x) <= z} в кубе вокруг центра."""

    def __init__(self, system, center, radius, resolution=None, budget=SOLUTION_SAMPLE_BUDGET, tol=TOL):
        self.system = system
        self.center = np.asarray(center, dtype=float).ravel()
        self.radius = float(radius)
        self.tol = tol
        n = system.n
        if resolution is None:
            resolution = int(budget ** (1.0 / n))
        if resolution % 2 == 0:
            resolution -= 1
        if resolution ** n > budget:
            raise BudgetExceededError("solution-set grid nodes", resolution ** n, budget)
        self.resolution = resolution
        axes = [np.linspace(c - self.radius, c + self.radius, resolution) for c in self.center]
        self.spacing = 2.0 * self.radius / (resolution - 1)
        self.nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        self.f_nodes, self.g_nodes = system.values(self.nodes)
        if system.l >= 2:
            logger.warning("l = %d: S(y, z) аппроксимируется узлами с малой невязкой", system.l)

    # знаковая невязка, корни которой образуют S (при l <= 1)
    def _signed(self, f, g, y, z):
        if self.system.l == 1:
            return f[..., 0] - y[0]
        return np.max(g - z, axis=-1)

    def _feasible(self, g, z):
        if self.system.m == 0 or self.system.l == 0:
            return np.ones(g.shape[:-1], dtype=bool)
        return np.all(g <= z + self.tol, axis=-1)

    def _signed_at(self, points, y, z):
        f, g = self.system.values(points)
        return self._signed(f, g, y, z)

    def candidates(self, y, z):
        y = _target(y, self.system.l, "y")
        z = _target(z, self.system.m, "z")
        n = self.system.n
        if self.system.l >= 2:
            residual = np.sum(np.abs(self.f_nodes - y), axis=-1) + np.sum(np.maximum(self.g_nodes - z, 0.0), axis=-1)
            slack = float(np.max(np.sum(np.abs(np.diff(self.f_nodes, axis=0)), axis=-1)))
            return self.nodes[residual <= max(slack, self.tol)].reshape(-1, n)

        s = self._signed(self.f_nodes, self.g_nodes, y, z)
        feas = self._feasible(self.g_nodes, z)
        if self.system.l == 1:
            on_set = (np.abs(s) <= self.tol) & feas
        else:
            on_set = s <= self.tol
        found = [self.nodes[on_set].reshape(-1, n)]

        for axis in range(n):
            lo = [slice(None)] * n
            hi = [slice(None)] * n
            lo[axis] = slice(None, -1)
            hi[axis] = slice(1, None)
            lo, hi = tuple(lo), tuple(hi)
            cross = (s[lo] * s[hi] < 0) & (feas[lo] | feas[hi])
            if not np.any(cross):
                continue
            roots = _bisect(
                lambda pts: self._signed_at(pts, y, z),
                self.nodes[lo][cross], self.nodes[hi][cross], s[lo][cross],
            )
            if self.system.l == 1 and self.system.m:
                _, g = self.system.values(roots)
                roots = roots[self._feasible(g, z)]
            found.append(roots)
        return np.vstack(found)

    def distance(self, points, y, z, rays=True):
        """d(x, S(y, z)) для массива точек (k, n); +inf, если S в кубе не найдено."""
        y = _target(y, self.system.l, "y")
        z = _target(z, self.system.m, "z")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cand = self.candidates(y, z)
        if cand.shape[0]:
            d, _ = cKDTree(cand).query(pts)
        else:
            d = np.full(pts.shape[0], np.inf)
        if rays and self.system.l <= 1:
            d = np.minimum(d, self._ray_distance(pts, y, z, d))
        return d

    def _ray_distance(self, pts, y, z, upper, steps=32):
        n = self.system.n
        dirs = compass_directions(n)
        k, nd = pts.shape[0], dirs.shape[0]
        s0 = self._signed_at(pts, y, z)
        _, g0 = self.system.values(pts)
        inside = (np.abs(s0) <= self.tol) if self.system.l == 1 else (s0 <= self.tol)
        inside &= self._feasible(g0, z)

        reach = np.where(np.isfinite(upper), np.minimum(upper + 2.0 * self.spacing, 2.0 * self.radius), 2.0 * self.radius)
        t = (np.arange(1, steps + 1) / steps)[None, None, :] * reach[:, None, None]
        ray_pts = pts[:, None, None, :] + t[..., None] * dirs[None, :, None, :]
        s_ray = self._signed_at(ray_pts, y, z)
        if self.system.l == 1:
            change = np.sign(s_ray) != np.sign(s0)[:, None, None]
        else:
            change = s_ray <= 0.0
        hit = np.any(change, axis=-1)
        first = np.argmax(change, axis=-1)

        result = np.full(k, np.inf)
        result[inside] = 0.0
        if np.any(hit):
            pi, di = np.nonzero(hit)
            j = first[pi, di]
            t_hi = t[pi, 0, j]
            t_lo = np.where(j > 0, t[pi, 0, np.maximum(j - 1, 0)], 0.0)
            base = pts[pi]
            dvec = dirs[di]
            lo_pts = base + t_lo[:, None] * dvec
            hi_pts = base + t_hi[:, None] * dvec
            roots = _bisect(lambda q: self._signed_at(q, y, z), lo_pts, hi_pts, self._signed_at(lo_pts, y, z))
            ok = np.ones(roots.shape[0], dtype=bool)
            if self.system.l == 1 and self.system.m:
                _, g = self.system.values(roots)
                ok = self._feasible(g, z)
            dist = np.linalg.norm(roots - base, axis=1)
            dist[~ok] = np.inf
            np.minimum.at(result, pi, dist)
        return result


# =============================================================================
# СЕТОЧНАЯ ПРОВЕРКА ОЦЕНКИ РЕГУЛЯРНОСТИ
# =============================================================================

def _odd_offsets(r, size):
    size = max(int(size), 1)
    if size % 2 == 0:
        size += 1
    if size == 1:
        return np.zeros(1)
    return np.linspace(-r, r, size)


def _box_points(center, r, size):
    center = np.atleast_1d(np.asarray(center, dtype=float))
    offsets = _odd_offsets(r, size)
    return np.array([center + np.array(d) for d in itertools.product(offsets, repeat=center.size)])


@dataclass
class GridReport:
    K: float
    r: float
    grid: int
    worst_ratio: float
    violator: Optional[dict]
    empty_count: int
    checked: int
    table: pd.DataFrame

    @property
    def certified(self):
        return self.violator is None

    def to_dict(self):
        return {
            "K": self.K,
            "r": self.r,
            "grid": self.grid,
            "worst_ratio": self.worst_ratio,
            "violator": self.violator,
            "empty_count": self.empty_count,
            "checked": self.checked,
            "certified": self.certified,
        }


def verify_regularity_grid(s, center, K, r, grid=DEFAULT_GRID, target_grid=None, targets=None,
                           search_radius=None, resolution=None, tol=TOL):
    """Проверка d(x, S(y, z)) <= K·ψ_(y,z)(x) на сетке (x, y, z) около (x̄, F(x̄), 0).

    targets — явный список пар (y, z) вместо симметричной сетки.
    """
    if not K > 0:
        raise InputError("K must be positive")
    center = np.asarray(center, dtype=float).ravel()
    if center.size != s.n:
        raise DimensionMismatchError(s.n, center.size, "center")
    if s.n > 3:
        raise InputError("grid regularity check supports n <= 3")
    target_grid = grid if target_grid is None else target_grid

    xs = _box_points(center, r, grid)
    if targets is None:
        f0, _ = s.values(center[None, :])
        ys = _box_points(f0[0], r, target_grid)
        zs = _box_points(np.zeros(s.m), r, target_grid)
        targets = [(y, z) for y in ys for z in zs]
    else:
        targets = [(_target(y, s.l, "y"), _target(z, s.m, "z")) for y, z in targets]

    total = xs.shape[0] * len(targets)
    if total > SOLUTION_SAMPLE_BUDGET:
        raise BudgetExceededError("regularity grid queries", total, SOLUTION_SAMPLE_BUDGET)

    radius = 4.0 * r if search_radius is None else float(search_radius)
    sampler = SolutionSetSampler(s, center, radius, resolution=resolution, tol=tol)
    logger.info("сетка регулярности: %d точек x, %d целей, узлов S %d^%d",
                xs.shape[0], len(targets), sampler.resolution, s.n)

    f_x, g_x = s.values(xs)
    rows = []
    worst = 0.0
    violator = None
    empty = 0
    for y, z in targets:
        resid = np.sum(np.abs(f_x - y), axis=-1) + np.sum(np.maximum(g_x - z, 0.0), axis=-1)
        dist = sampler.distance(xs, y, z)
        for x, d, psi in zip(xs, dist, resid):
            if not np.isfinite(d):
                empty += 1
            if psi <= tol:
                continue
            ratio = d / psi
            violated = bool(d > K * psi * (1.0 + 1e-9) + tol)
            row = {f"x{i + 1}": v for i, v in enumerate(x)}
            row.update({f"y{j + 1}": v for j, v in enumerate(y)})
            row.update({f"z{i + 1}": v for i, v in enumerate(z)})
            row.update({"distance": float(d), "residual": float(psi), "ratio": float(ratio), "violated": violated})
            rows.append(row)
            worst = max(worst, ratio)
            if violated and violator is None:
                violator = dict(row)
    if violator is not None:
        logger.warning("нарушение оценки при K = %g: отношение %.6g", K, violator["ratio"])
    return GridReport(float(K), float(r), int(grid), float(worst), violator, empty, len(rows), pd.DataFrame(rows))


# =============================================================================
# ЛОКАЛЬНАЯ ОЦЕНКА ПОГРЕШНОСТИ (error bound)
# =============================================================================

@dataclass
class ErrorBound:
    tau: float
    checked: int
    table: pd.DataFrame

    def to_dict(self):
        return {"tau": self.tau, "checked": self.checked}


def estimate_error_bound(s, center, r, grid=DEFAULT_GRID, resolution=None, tol=TOL):
    """Эмпирическое τ в φ(x) >= τ·d(x, Ω), φ = Σ|f_j| + Σ max{g_i, 0}, Ω = S(0, 0)."""
    center = np.asarray(center, dtype=float).ravel()
    xs = _box_points(center, r, grid)
    sampler = SolutionSetSampler(s, center, 4.0 * r, resolution=resolution, tol=tol)
    y = np.zeros(s.l)
    z = np.zeros(s.m)
    f_x, g_x = s.values(xs)
    phi = np.sum(np.abs(f_x), axis=-1) + np.sum(np.maximum(g_x, 0.0), axis=-1)
    dist = sampler.distance(xs, y, z)
    mask = (dist > tol) & np.isfinite(dist)
    ratios = phi[mask] / dist[mask]
    tau = float(np.min(ratios)) if ratios.size else float("inf")
    table = pd.DataFrame({"phi": phi[mask], "distance": dist[mask], "ratio": ratios})
    logger.info("оценка error bound: τ ≈ %.6g по %d точкам", tau, int(mask.sum()))
    return ErrorBound(tau, int(mask.sum()), table)

