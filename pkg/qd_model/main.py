"""Командная строка: python -m qd_model.main <подкоманда> <файл задачи> [флаги].

Коды выхода: 0 — проверка выполнена (вердикт в отчёте), 1 — превышен
внутренний бюджет перебора, 2 — ошибка входных данных.
"""
import argparse
import json
import logging
import sys

import numpy as np

from qd_model.config import DEFAULT_SEED, TOL, setup_logging
from qd_model.errors import EXIT_OK, BudgetExceededError, InputError, QdError
from qd_model.expression import finite_difference_dd, pretty, value_and_qd
from qd_model.mfcq import locate_verdict_flip, mfcq_verdict_for, qd_mfcq, sweep_parameter
from qd_model.optimality import check_multipliers, check_optimality, program_quasidiffs, selection_from_points
from qd_model.problem_file import load_problem, parse_vector
from qd_model.quasidiff import dd
from qd_model.regularity import compass_directions, psi_expr, regularity_margin_at, sampled_strong_slope, \
    verify_regularity_grid
from qd_model.report_generator import build_payload, default_table_path, render_text, save_sidecar, write_tables

logger = logging.getLogger(__name__)


# =============================================================================
# ОБЩИЕ ПОМОЩНИКИ
# =============================================================================

def _point(args, problem):
    return problem.binding(None if args.at is None else parse_vector(args.at))


def _split_target(problem, raw):
    """--target: y (l чисел), затем z (m чисел); иначе значения из [check]."""
    l, m = len(problem.equalities), len(problem.inequalities)
    if raw is None:
        return problem.check.y, problem.check.z
    t = parse_vector(raw)
    if t.size != l + m:
        raise InputError(f"--target needs {l + m} numbers (y then z), got {t.size}")
    return t[:l], t[l:]


def _functions(problem):
    items = []
    if problem.objective is not None:
        items.append(("u", problem.objective))
    items += [(f"f{j + 1}", e) for j, e in enumerate(problem.equalities)]
    items += [(f"g{i + 1}", e) for i, e in enumerate(problem.inequalities)]
    return items


def _directions(args, problem):
    if args.dir:
        dirs = [parse_vector(d) for d in args.dir]
    elif problem.check.dirs:
        dirs = problem.check.dirs
    elif problem.n <= 3:
        dirs = list(compass_directions(problem.n))
    else:
        eye = np.eye(problem.n)
        dirs = list(eye) + list(-eye)
    for h in dirs:
        if h.size != problem.n:
            raise InputError(f"direction {h.tolist()} has {h.size} coordinates, expected {problem.n}")
    return dirs


# =============================================================================
# ПОДКОМАНДЫ
# =============================================================================

def cmd_qd(args, problem):
    b = _point(args, problem)
    dirs = _directions(args, problem)
    functions = []
    for name, e in _functions(problem):
        value, q = value_and_qd(e, b, args.tol)
        functions.append({
            "name": name,
            "expr": pretty(e),
            "value": float(value),
            "sub": q.sub.to_list(),
            "super": q.super.to_list(),
            "dd": [{"h": h.tolist(), "value": float(dd(q, h)), "fd": finite_difference_dd(e, b, h)} for h in dirs],
        })
    return {"point": b.point.tolist(), "functions": functions}, {}


def cmd_slope(args, problem):
    s = problem.system()
    b = _point(args, problem)
    y, z = _split_target(problem, args.target)
    K = args.K if args.K is not None else problem.check.K
    norm = args.norm or problem.check.norm
    report = regularity_margin_at(s, b.point, y, z, norm, K=K, tol=args.tol)
    psi = psi_expr(s, y, z, norm)
    report.slope_estimate = sampled_strong_slope(psi.values, b.point, seed=args.seed)
    return report.to_dict(), {}


def cmd_mfcq(args, problem):
    s = problem.system()
    b = _point(args, problem)
    report = qd_mfcq(s, b, seed=args.seed, tol=args.tol, rank_method=args.rank_method)
    for w in report.warnings:
        logger.warning(w)
    body = report.to_dict()
    tables = {}
    if args.flip:
        name, lo, hi = args.flip[0], float(args.flip[1]), float(args.flip[2])
        fn = mfcq_verdict_for(s, b.point, name, tol=args.tol, rank_method=args.rank_method)
        body["flip"] = {"param": name, "value": locate_verdict_flip(fn, lo, hi)}
    if args.sweep:
        name, lo, hi, count = args.sweep[0], float(args.sweep[1]), float(args.sweep[2]), int(args.sweep[3])
        df = sweep_parameter(s, b.point, name, np.linspace(lo, hi, count), tol=args.tol,
                             rank_method=args.rank_method)
        body["sweep"] = json.loads(df.to_json(orient="records", double_precision=15))
        tables["sweep"] = df
    return body, tables


def cmd_regcheck(args, problem):
    s = problem.system()
    b = _point(args, problem)
    check = problem.check
    K = args.K if args.K is not None else check.K
    r = args.r if args.r is not None else check.r
    grid = args.grid if args.grid is not None else check.grid
    targets = None
    y, z = _split_target(problem, args.target)
    if args.target is not None or y is not None or z is not None:
        targets = [(y, z)]
    report = verify_regularity_grid(s, b.point, K, r, grid, targets=targets, tol=args.tol)
    body = {"grid": report.to_dict(), "margin": None}
    if targets is not None:
        body["margin"] = regularity_margin_at(s, b.point, y, z, check.norm, tol=args.tol).condition4_margin
    return body, {"grid": report.table}


def cmd_optcheck(args, problem):
    p = problem.program()
    b = _point(args, problem)
    ladder = tuple(parse_vector(args.c).tolist()) if args.c else problem.check.c
    qds = program_quasidiffs(p, b, args.tol)
    report = check_optimality(p, b, ladder, quasidiffs=qds, error_bound=args.error_bound,
                              r=problem.check.r, grid=problem.check.grid, tol=args.tol)
    body = report.to_dict()
    body["multipliers"] = None
    if args.select:
        try:
            chosen = json.loads(args.select)
        except json.JSONDecodeError as e:
            raise InputError(f"--select is not valid JSON: {e.msg}") from e
        z = {int(k): v for k, v in chosen.get("z", {}).items()}
        selection = selection_from_points(qds, chosen.get("w0"), chosen.get("v", ()), chosen.get("w", ()), z)
        body["multipliers"] = check_multipliers(p, b, selection, chosen.get("c_bound"), qds, args.tol).to_dict()
    return body, {"ladder": report.table()}


COMMANDS = {
    "qd": cmd_qd,
    "slope": cmd_slope,
    "mfcq": cmd_mfcq,
    "regcheck": cmd_regcheck,
    "optcheck": cmd_optcheck,
}


# =============================================================================
# РАЗБОР АРГУМЕНТОВ
# =============================================================================

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("file", help="файл задачи (.ini); имя ищется и в problems/")
    common.add_argument("--json", metavar="PATH", help="записать отчёт в JSON")
    common.add_argument("--xlsx", metavar="PATH", nargs="?", const="", help="записать таблицы в xlsx")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--tol", type=float, default=TOL)
    common.add_argument("--at", metavar="X", help="точка x1,...,xn вместо [point]")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qd_model", description="Quasidifferential regularity and optimality checks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_qd = sub.add_parser("qd", parents=[common], help="квазидифференциалы и производные по направлениям")
    p_qd.add_argument("--dir", action="append", metavar="H", help="направление h1,...,hn (можно несколько)")

    p_slope = sub.add_parser("slope", parents=[common], help="условие на квазидифференциал ψ и наклон")
    p_slope.add_argument("--target", metavar="YZ", help="y1,...,yl,z1,...,zm")
    p_slope.add_argument("--K", type=float)
    p_slope.add_argument("--norm", choices=("l1", "l2"))

    p_mfcq = sub.add_parser("mfcq", parents=[common], help="q.d.-MFCQ")
    p_mfcq.add_argument("--rank-method", choices=("single-row", "det-range", "lambda-grid", "interval"))
    p_mfcq.add_argument("--flip", nargs=3, metavar=("NAME", "LO", "HI"))
    p_mfcq.add_argument("--sweep", nargs=4, metavar=("NAME", "LO", "HI", "COUNT"))

    p_reg = sub.add_parser("regcheck", parents=[common], help="сеточная проверка оценки регулярности")
    p_reg.add_argument("--K", type=float)
    p_reg.add_argument("--r", type=float)
    p_reg.add_argument("--grid", type=int)
    p_reg.add_argument("--target", metavar="YZ", help="одна цель y1,...,yl,z1,...,zm")

    p_opt = sub.add_parser("optcheck", parents=[common], help="необходимые условия оптимальности")
    p_opt.add_argument("--c", metavar="C", help="лестница c через запятую")
    p_opt.add_argument("--select", metavar="JSON", help='набор вершин, напр. {"v": [[1,0]], "w": [[0,1]]}')
    p_opt.add_argument("--error-bound", action="store_true")
    return parser


def run(args):
    problem = load_problem(args.file)
    body, tables = COMMANDS[args.command](args, problem)
    payload = build_payload(args.command, args.file, args.seed, args.tol, body)
    sys.stdout.write(render_text(payload))
    if args.json:
        save_sidecar(args.json, payload)
    if args.xlsx is not None:
        path = args.xlsx or default_table_path(args.file, args.command)
        write_tables(path, tables)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return run(args)
    except BudgetExceededError as e:
        state = e.state.to_dict() if hasattr(e.state, "to_dict") else e.state
        print(f"budget exceeded: {e}", file=sys.stderr)
        if state is not None:
            print(f"partial state: {json.dumps(state, sort_keys=True, default=str)}", file=sys.stderr)
        return e.exit_code
    except QdError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
