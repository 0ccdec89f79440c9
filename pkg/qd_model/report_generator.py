"""Отчёты: текст для stdout, JSON-файл рядом (sidecar) и таблицы xlsx.

Текст строится только из словаря отчёта, поэтому перечитанный sidecar
даёт тот же текст байт в байт.
"""
import json
import logging
import math
from pathlib import Path

import pandas as pd

from qd_model.config import OUTPUT_DIR

logger = logging.getLogger(__name__)


# =============================================================================
# ФОРМАТИРОВАНИЕ
# =============================================================================

def fmt(value):
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if value == 0.0:
            value = 0.0  # без "-0"
        return "{:.12g}".format(value)
    if isinstance(value, (list, tuple)):
        return "(" + ", ".join(fmt(v) for v in value) + ")"
    return str(value)


def fmt_points(points):
    return "co{" + ", ".join(fmt(p) for p in points) + "}"


def _kv(lines, key, value, indent=0):
    lines.append(" " * indent + f"{key}: {fmt(value)}")


# =============================================================================
# РАЗДЕЛЫ ОТЧЁТА ПО ПОДКОМАНДАМ
# =============================================================================

def _render_qd(body, lines):
    _kv(lines, "point", body["point"])
    for item in body["functions"]:
        lines.append("")
        lines.append(f"{item['name']} = {item['expr']}")
        _kv(lines, "value", item["value"], 2)
        lines.append(f"  sub:   {fmt_points(item['sub'])}")
        lines.append(f"  super: {fmt_points(item['super'])}")
        for d in item["dd"]:
            lines.append(f"  dd{fmt(d['h'])} = {fmt(d['value'])}  (fd {fmt(d['fd'])})")


def _render_slope(body, lines):
    for key in ("point", "y", "z", "psi", "outside_graph", "condition4_margin", "witness_w",
                "K_estimate", "K", "holds", "uderzo_distance", "slope_estimate"):
        _kv(lines, key, body.get(key))


def _render_mfcq(body, lines):
    _kv(lines, "point", body["point"])
    _kv(lines, "active_set", body["active_set"])
    rank = body["rank"]
    _kv(lines, "rank.method", rank["method"])
    _kv(lines, "rank.full_rank", rank["full_rank"])
    if "det_range" in rank:
        _kv(lines, "rank.det_range", rank["det_range"])
    if "witness_lambda" in rank:
        _kv(lines, "rank.witness_lambda", rank["witness_lambda"])
    if "density" in rank:
        _kv(lines, "rank.density", rank["density"])
    _kv(lines, "span_rank", body["span_rank"])
    _kv(lines, "hbar", body["hbar"])
    _kv(lines, "margin", body["margin"])
    _kv(lines, "verdict", body["verdict"])
    for w in body["warnings"]:
        lines.append(f"warning: {w}")
    lines.append(f"caveat: {body['caveat']}")
    if body.get("flip") is not None:
        _kv(lines, "flip", body["flip"])
    _render_rows(body.get("sweep"), lines, "sweep")


def _render_regcheck(body, lines):
    grid = body["grid"]
    for key in ("K", "r", "grid", "checked", "empty_count", "worst_ratio", "certified"):
        _kv(lines, key, grid[key])
    if grid["violator"] is not None:
        v = grid["violator"]
        lines.append("violator: " + ", ".join(f"{k}={fmt(v[k])}" for k in sorted(v)))
    if body.get("margin") is not None:
        _kv(lines, "margin_at_point", body["margin"])


def _render_optcheck(body, lines):
    _kv(lines, "point", body["point"])
    for st, sel in zip(body["stationarity"], body["selections"]):
        lines.append(
            f"c = {fmt(st['c'])}: stationarity {fmt(st['holds'])}, "
            f"all selections {fmt(sel['holds'])} ({sel['checked']}/{sel['total']})"
        )
        if st["violating_w"] is not None:
            _kv(lines, "violating_w", st["violating_w"], 2)
        if sel["failing"] is not None:
            f = sel["failing"]
            lines.append(f"  infeasible selection: {json.dumps(f['selection'], sort_keys=True)}")
    if body.get("multipliers") is not None:
        m = body["multipliers"]
        lines.append(f"multipliers for {json.dumps(m['selection'], sort_keys=True)}: "
                     f"feasible {fmt(m['feasible'])}")
        if m["feasible"]:
            _kv(lines, "mu_lower", m["mu_lower"], 2)
            _kv(lines, "mu_upper", m["mu_upper"], 2)
            _kv(lines, "lambda", m["lambda"], 2)
    c_star = body["c_star"]
    lines.append(f"c* ({c_star['label']}): {fmt(c_star['c_star'])} on [0, {fmt(c_star['c_max'])}]")
    for key, value in body["pathways"].items():
        _kv(lines, f"pathway.{key}", value)
    lines.append(body["summary"])


def _render_rows(rows, lines, title):
    if not rows:
        return
    lines.append("")
    lines.append(f"{title}:")
    columns = list(rows[0])
    lines.append("  " + " | ".join(columns))
    for row in rows:
        lines.append("  " + " | ".join(fmt(row[c]) for c in columns))


RENDERERS = {
    "qd": _render_qd,
    "slope": _render_slope,
    "mfcq": _render_mfcq,
    "regcheck": _render_regcheck,
    "optcheck": _render_optcheck,
}


# =============================================================================
# СБОРКА
# =============================================================================

def build_payload(subcommand, source, seed, tol, body):
    return {"subcommand": subcommand, "file": str(source), "seed": int(seed), "tol": float(tol), "result": body}


def render_text(payload):
    lines = [
        "# qd-model report",
        f"subcommand: {payload['subcommand']}",
        f"file: {payload['file']}",
        f"seed: {payload['seed']}",
        f"tol: {fmt(payload['tol'])}",
        "",
    ]
    RENDERERS[payload["subcommand"]](payload["result"], lines)
    return "\n".join(lines) + "\n"


def save_sidecar(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=4, ensure_ascii=False)
    logger.info("[Отчет] JSON сохранён в %s", path)
    return path


def load_sidecar(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def default_table_path(source, subcommand):
    return OUTPUT_DIR / f"{Path(source).stem}_{subcommand}.xlsx"


def write_tables(path, tables):
    """Каждая непустая таблица — отдельный лист книги xlsx."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    written = 0
    with pd.ExcelWriter(path, engine="openpyxl") as writer:
        for name, df in tables.items():
            if df is None or df.empty:
                continue
            df.to_excel(writer, sheet_name=name[:31], index=False)
            written += 1
        if not written:
            pd.DataFrame({"note": ["no tabular data"]}).to_excel(writer, sheet_name="empty", index=False)
    logger.info("[Отчет] таблицы записаны в %s", path)
    return path
