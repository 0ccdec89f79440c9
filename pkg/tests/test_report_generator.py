import pandas as pd
import pytest

from qd_model.report_generator import (
    build_payload,
    fmt,
    fmt_points,
    load_sidecar,
    render_text,
    save_sidecar,
    write_tables,
)


@pytest.mark.parametrize("value, text", [
    (None, "-"),
    (True, "true"),
    (False, "false"),
    (3, "3"),
    (float("inf"), "inf"),
    (float("-inf"), "-inf"),
    (1.0, "1"),
    (-0.0, "0"),
    (0.1 + 0.2, "0.3"),
    ([1.0, 2], "(1, 2)"),
    ("det-range", "det-range"),
])
def test_fmt(value, text):
    assert fmt(value) == text


def test_fmt_points():
    assert fmt_points([[1.0, 0.0], [2.0, 0.0]]) == "co{(1, 0), (2, 0)}"


def _slope_payload():
    body = {
        "point": [0.0, 0.2], "y": [0.5], "z": None, "psi": 0.7, "outside_graph": True,
        "condition4_margin": 2 ** 0.5, "witness_w": [0.0, 1.0], "K_estimate": 2 ** -0.5,
        "K": 2.0, "holds": True, "uderzo_distance": 1.0, "slope_estimate": None,
    }
    return build_payload("slope", "problems/remark2.ini", 0, 1e-9, body)


def test_text_report_from_payload():
    text = render_text(_slope_payload())
    assert text.startswith("# qd-model report\nsubcommand: slope\n")
    assert "condition4_margin: 1.41421356237\n" in text
    assert "z: -\n" in text
    assert text.endswith("slope_estimate: -\n")


def test_sidecar_gives_same_text(tmp_path):
    payload = _slope_payload()
    path = save_sidecar(tmp_path / "out" / "slope.json", payload)
    assert load_sidecar(path) == payload
    assert render_text(load_sidecar(path)) == render_text(payload)


def test_tables_are_written_per_sheet(tmp_path):
    path = write_tables(tmp_path / "t.xlsx", {
        "sweep": pd.DataFrame({"p": [0.0, 1.0], "verdict": [True, False]}),
        "unused": pd.DataFrame(),
        "margins": None,
    })
    sheets = pd.read_excel(path, sheet_name=None)
    assert list(sheets) == ["sweep"]
    assert sheets["sweep"]["p"].tolist() == [0.0, 1.0]


def test_empty_tables_leave_a_note(tmp_path):
    sheets = pd.read_excel(write_tables(tmp_path / "e.xlsx", {}), sheet_name=None)
    assert list(sheets) == ["empty"]
