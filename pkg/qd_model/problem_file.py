"""Чтение файла задачи (INI): [problem], [params], [point], [check].

Пример:

    [problem]
    n = 2
    objective = x1
    equalities =
        max(2*x1, x1) - abs(sin(p*x2))
        min(x2, 2*x2) + sin(p*(x1 + x2))

    [params]
    p = 1

    [point]
    x = 0, 0

    [check]
    K = 2
    c = 0.5, 1, 2, 10, 100
    dirs = 1, 0; 0, 1
"""
import configparser
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from qd_model.config import DEFAULT_C_LADDER, DEFAULT_GRID, DEFAULT_K, DEFAULT_NORM, DEFAULT_RADIUS, PROBLEMS_DIR
from qd_model.errors import DimensionMismatchError, InputError, ProblemFileError, UnboundParameterError
from qd_model.expression import Binding, parameters, parse
from qd_model.optimality import ProgramSpec
from qd_model.regularity import SystemSpec

logger = logging.getLogger(__name__)

SECTIONS = ("problem", "params", "point", "check")


@dataclass
class CheckSettings:
    K: float = DEFAULT_K
    r: float = DEFAULT_RADIUS
    grid: int = DEFAULT_GRID
    c: tuple = DEFAULT_C_LADDER
    norm: str = DEFAULT_NORM
    dirs: List[np.ndarray] = field(default_factory=list)
    y: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None


@dataclass
class ProblemFile:
    source: str
    n: int
    params: Dict[str, float]
    objective: Optional[object]
    equalities: List[object]
    inequalities: List[object]
    point: Optional[np.ndarray]
    check: CheckSettings

    def system(self):
        return SystemSpec(self.equalities, self.inequalities, self.n, self.params)

    def program(self):
        if self.objective is None:
            raise ProblemFileError("objective is required for optimality checks", "problem", "objective")
        return ProgramSpec(self.objective, self.equalities, self.inequalities, self.n, self.params)

    def binding(self, x=None):
        x = self.point if x is None else x
        if x is None:
            raise ProblemFileError("no point given (use [point] x or --at)", "point", "x")
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.n:
            raise DimensionMismatchError(self.n, x.size, "point")
        return Binding(x, self.params)


# =============================================================================
# РАЗБОР ЗНАЧЕНИЙ
# =============================================================================

def parse_vector(text, section=None, key=None):
    """'1, 2.5, -3' -> массив."""
    try:
        return np.array([float(v) for v in text.replace(",", " ").split()], dtype=float)
    except ValueError as e:
        raise ProblemFileError(f"not a list of numbers: {text!r}", section, key) from e


def parse_vectors(text, section=None, key=None):
    """'1, 0; 0, 1' -> список массивов (векторы через ';' или с новой строки)."""
    parts = [p for chunk in text.splitlines() for p in chunk.split(";")]
    return [parse_vector(p, section, key) for p in parts if p.strip()]


def _float(section, key, raw):
    try:
        return float(raw)
    except ValueError as e:
        raise ProblemFileError(f"not a number: {raw!r}", section, key) from e


def _expressions(section, key, raw, n):
    out = []
    for line in raw.splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            out.append(parse(line, n))
        except InputError as e:
            raise ProblemFileError(f"{e} in {line!r}", section, key) from e
    return out


# =============================================================================
# ЧТЕНИЕ
# =============================================================================

def parse_problem(text, source="<string>"):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # ключ K регистрозависим
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ProblemFileError(str(e)) from e

    for name in cp.sections():
        if name not in SECTIONS:
            raise ProblemFileError(f"unknown section (expected one of {', '.join(SECTIONS)})", name)
    if not cp.has_section("problem"):
        raise ProblemFileError("missing section", "problem")
    prob = cp["problem"]
    if "n" not in prob:
        raise ProblemFileError("missing key", "problem", "n")
    try:
        n = int(prob["n"])
    except ValueError as e:
        raise ProblemFileError(f"not an integer: {prob['n']!r}", "problem", "n") from e
    if n < 1:
        raise ProblemFileError("dimension must be >= 1", "problem", "n")

    params = {}
    if cp.has_section("params"):
        params = {k: _float("params", k, v) for k, v in cp["params"].items()}

    objective = None
    if prob.get("objective", "").strip():
        exprs = _expressions("problem", "objective", prob["objective"], n)
        if len(exprs) != 1:
            raise ProblemFileError("objective must be a single expression", "problem", "objective")
        objective = exprs[0]
    equalities = _expressions("problem", "equalities", prob.get("equalities", ""), n)
    inequalities = _expressions("problem", "inequalities", prob.get("inequalities", ""), n)
    if objective is None and not equalities and not inequalities:
        raise ProblemFileError("no expressions given", "problem")

    used = set()
    for e in ([objective] if objective is not None else []) + equalities + inequalities:
        used |= parameters(e)
    for name in sorted(used):
        if name not in params:
            raise UnboundParameterError(name)

    point = None
    if cp.has_section("point") and "x" in cp["point"]:
        point = parse_vector(cp["point"]["x"], "point", "x")
        if point.size != n:
            raise ProblemFileError(f"point has {point.size} coordinates, expected {n}", "point", "x")

    check = CheckSettings()
    if cp.has_section("check"):
        sec = cp["check"]
        for key in sec:
            raw = sec[key]
            if key in ("K", "r"):
                setattr(check, key, _float("check", key, raw))
            elif key == "grid":
                check.grid = int(_float("check", key, raw))
            elif key == "c":
                check.c = tuple(parse_vector(raw, "check", key).tolist())
            elif key == "norm":
                check.norm = raw.strip()
            elif key == "dirs":
                check.dirs = parse_vectors(raw, "check", key)
            elif key in ("y", "z"):
                setattr(check, key, parse_vector(raw, "check", key))
            else:
                raise ProblemFileError("unknown key", "check", key)

    logger.debug("%s: n = %d, равенств %d, неравенств %d", source, n, len(equalities), len(inequalities))
    return ProblemFile(
        source=str(source),
        n=n,
        params=params,
        objective=objective,
        equalities=equalities,
        inequalities=inequalities,
        point=point,
        check=check,
    )


def resolve_path(path):
    """Путь как есть, иначе имя файла в каталоге problems/."""
    p = Path(path)
    if p.exists():
        return p
    candidate = PROBLEMS_DIR / p.name
    if candidate.exists():
        return candidate
    return p


def load_problem(path):
    p = resolve_path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ProblemFileError(f"cannot read {p}: {e.strerror}") from e
    except UnicodeDecodeError as e:
        raise ProblemFileError(f"{p} is not valid UTF-8 (byte {e.start})") from e
    return parse_problem(text, source=str(p))
